//! Nonnegative and signed sequences in l1 over the nonnegative integers,
//! certified intervals, and the mass functional.
//!
//! A [`PosSeq`] stores its finitely many entries in a dense window
//! `[offset, offset + len)`. Zeros inside the window are not part of the
//! support; the window is always trimmed so that its first and last entries
//! are strictly positive. Every operator in this crate moves mass by a bounded
//! number of indices, so the window stays compact.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Entries below this value are moved into the tail bound.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

/// Outcome of a comparison that may be blocked by uncertain tail mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    pub fn is_true(self) -> bool {
        self == Tri::True
    }
}

/// Closed interval `[lo, hi]` known to contain some exact quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Bracket> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return invalid(format!("bracket [{lo}, {hi}] is not an interval"));
        }
        Ok(Bracket { lo, hi })
    }

    /// Builds a bracket from two ends in either order.
    pub fn hull(a: f64, b: f64) -> Bracket {
        Bracket { lo: a.min(b), hi: a.max(b) }
    }

    pub fn point(x: f64) -> Bracket {
        Bracket { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_within(&self, x: f64, slack: f64) -> bool {
        self.lo - slack <= x && x <= self.hi + slack
    }

    pub fn overlaps(&self, other: &Bracket) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn add(&self, other: &Bracket) -> Bracket {
        Bracket { lo: self.lo + other.lo, hi: self.hi + other.hi }
    }

    pub fn sub(&self, other: &Bracket) -> Bracket {
        Bracket { lo: self.lo - other.hi, hi: self.hi - other.lo }
    }

    pub fn neg(&self) -> Bracket {
        Bracket { lo: -self.hi, hi: -self.lo }
    }

    pub fn scale(&self, alpha: f64) -> Bracket {
        Bracket::hull(alpha * self.lo, alpha * self.hi)
    }

    /// Intersects with `[floor, ceil]`, collapsing to the nearer end if the
    /// intersection is empty.
    pub fn clamp(&self, floor: f64, ceil: f64) -> Bracket {
        let lo = self.lo.max(floor).min(ceil);
        let hi = self.hi.min(ceil).max(lo);
        Bracket { lo, hi }
    }

    /// Distance between the two intervals, zero when they overlap.
    pub fn gap_to(&self, other: &Bracket) -> f64 {
        (self.lo - other.hi).max(other.lo - self.hi).max(0.0)
    }
}

impl fmt::Display for Bracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.10e}, {:.10e}]", self.lo, self.hi)
    }
}

/// Compensated summation.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Finitely supported nonnegative sequence plus a bound on mass that was
/// truncated away at unknown indices.
#[derive(Clone, PartialEq, Default)]
pub struct PosSeq {
    offset: usize,
    data: Vec<f64>,
    tail: f64,
}

impl fmt::Debug for PosSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PosSeq")
            .field("entries", &self.iter().collect::<Vec<_>>())
            .field("tail_bound", &self.tail)
            .finish()
    }
}

impl PosSeq {
    pub fn zero() -> PosSeq {
        PosSeq::default()
    }

    /// Unit vector at `index`.
    pub fn basis(index: usize) -> PosSeq {
        PosSeq { offset: index, data: vec![1.0], tail: 0.0 }
    }

    pub fn from_entries<I>(entries: I) -> Result<PosSeq>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut pairs: Vec<(usize, f64)> = entries.into_iter().collect();
        for &(k, v) in &pairs {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("entry {k} = {v} is not a nonnegative finite number"));
            }
        }
        pairs.retain(|&(_, v)| v > 0.0);
        if pairs.is_empty() {
            return Ok(PosSeq::zero());
        }
        pairs.sort_by_key(|&(k, _)| k);
        let lo = pairs[0].0;
        let hi = pairs[pairs.len() - 1].0;
        let mut data = vec![0.0; hi - lo + 1];
        for (k, v) in pairs {
            data[k - lo] += v;
        }
        Ok(PosSeq::from_window(lo, data, 0.0))
    }

    /// Dense vector starting at index 0.
    pub fn from_dense(values: &[f64]) -> Result<PosSeq> {
        PosSeq::from_entries(values.iter().copied().enumerate())
    }

    pub fn with_tail(mut self, tail_bound: f64) -> Result<PosSeq> {
        if !(tail_bound.is_finite() && tail_bound >= 0.0) {
            return invalid(format!("tail bound {tail_bound} must be nonnegative and finite"));
        }
        self.tail = tail_bound;
        Ok(self)
    }

    /// Trusted constructor used by the numerical engines. Negative values
    /// are only tolerated at roundoff level and are dropped.
    pub(crate) fn from_window(offset: usize, mut data: Vec<f64>, mut tail: f64) -> PosSeq {
        for x in data.iter_mut() {
            debug_assert!(x.is_finite(), "non-finite entry in window");
            if *x < FLUSH_THRESHOLD {
                if *x > 0.0 {
                    tail += *x;
                }
                *x = 0.0;
            }
        }
        let first = data.iter().position(|&x| x > 0.0);
        match first {
            None => PosSeq { offset: 0, data: Vec::new(), tail },
            Some(first) => {
                let last = data.iter().rposition(|&x| x > 0.0).unwrap_or(first);
                data.truncate(last + 1);
                data.drain(..first);
                PosSeq { offset: offset + first, data, tail }
            }
        }
    }

    pub(crate) fn window(&self) -> (usize, &[f64]) {
        (self.offset, &self.data)
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail
    }

    pub fn get(&self, index: usize) -> f64 {
        if index < self.offset {
            return 0.0;
        }
        self.data.get(index - self.offset).copied().unwrap_or(0.0)
    }

    /// Support entries in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let offset = self.offset;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(move |(i, &v)| (offset + i, v))
    }

    pub fn support_len(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.data.is_empty() && self.tail == 0.0
    }

    pub fn has_entries(&self) -> bool {
        !self.data.is_empty()
    }

    pub fn min_index(&self) -> Option<usize> {
        (!self.data.is_empty()).then_some(self.offset)
    }

    pub fn max_index(&self) -> Option<usize> {
        (!self.data.is_empty()).then(|| self.offset + self.data.len() - 1)
    }

    /// Sum of stored entries (lower edge of the mass).
    pub fn entry_sum(&self) -> f64 {
        neumaier_sum(self.data.iter().copied())
    }

    pub fn mass(&self) -> Bracket {
        let s = self.entry_sum();
        Bracket { lo: s, hi: s + self.tail }
    }

    /// Dense copy of indices `0..len`; entries beyond `len` are ignored.
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (k, v) in self.iter() {
            if k < len {
                out[k] = v;
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> Result<PosSeq> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return invalid(format!("scale factor {alpha} must be nonnegative"));
        }
        Ok(self.scale_unchecked(alpha))
    }

    pub(crate) fn scale_unchecked(&self, alpha: f64) -> PosSeq {
        if alpha == 1.0 {
            return self.clone();
        }
        let data = self.data.iter().map(|&v| alpha * v).collect();
        PosSeq::from_window(self.offset, data, alpha * self.tail)
    }

    /// `alpha * u + v`.
    pub fn axpy(alpha: f64, u: &PosSeq, v: &PosSeq) -> Result<PosSeq> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return invalid(format!(
                "axpy needs a nonnegative coefficient, got {alpha}; use SignedSeq for differences"
            ));
        }
        Ok(PosSeq::axpy_unchecked(alpha, u, v))
    }

    pub(crate) fn axpy_unchecked(alpha: f64, u: &PosSeq, v: &PosSeq) -> PosSeq {
        let tail = alpha * u.tail + v.tail;
        if alpha == 0.0 || u.data.is_empty() {
            let mut out = v.clone();
            out.tail = tail;
            return out;
        }
        if v.data.is_empty() {
            let mut out = u.scale_unchecked(alpha);
            out.tail = tail;
            return out;
        }
        let lo = u.offset.min(v.offset);
        let hi = (u.offset + u.data.len()).max(v.offset + v.data.len());
        let mut data = vec![0.0; hi - lo];
        for (i, &x) in u.data.iter().enumerate() {
            data[u.offset - lo + i] = alpha * x;
        }
        for (i, &x) in v.data.iter().enumerate() {
            data[v.offset - lo + i] += x;
        }
        PosSeq::from_window(lo, data, tail)
    }

    pub fn add(&self, other: &PosSeq) -> PosSeq {
        PosSeq::axpy_unchecked(1.0, self, other)
    }

    /// Entrywise comparison `self <= other`.
    ///
    /// Unknown mass in `other` may sit anywhere, so a violation is only
    /// certain when it exceeds `other`'s tail bound; unknown mass in `self`
    /// blocks a positive answer.
    pub fn leq(&self, other: &PosSeq) -> Tri {
        let mut all_le = true;
        for (k, x) in self.iter() {
            let y = other.get(k);
            if x > y {
                if x > y + other.tail {
                    return Tri::False;
                }
                all_le = false;
            }
        }
        if all_le && self.tail == 0.0 {
            Tri::True
        } else {
            Tri::Unknown
        }
    }

    /// Largest absolute entry difference over the union of supports.
    pub fn max_abs_diff(&self, other: &PosSeq) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = (self.offset + self.data.len()).max(other.offset + other.data.len());
        (lo..hi).map(|k| (self.get(k) - other.get(k)).abs()).fold(0.0, f64::max)
    }

    /// l1 distance between the stored entries (tails ignored).
    pub fn l1_diff(&self, other: &PosSeq) -> f64 {
        if self.data.is_empty() && other.data.is_empty() {
            return 0.0;
        }
        let lo = self.offset.min(other.offset);
        let hi = (self.offset + self.data.len()).max(other.offset + other.data.len());
        neumaier_sum((lo..hi).map(|k| (self.get(k) - other.get(k)).abs()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosSeqRepr {
    entries: Vec<(usize, f64)>,
    tail_bound: f64,
}

impl Serialize for PosSeq {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PosSeqRepr { entries: self.iter().collect(), tail_bound: self.tail }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PosSeq {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PosSeqRepr::deserialize(deserializer)?;
        PosSeq::from_entries(repr.entries)
            .and_then(|p| p.with_tail(repr.tail_bound))
            .map_err(serde::de::Error::custom)
    }
}

/// Difference `plus - minus` of two nonnegative sequences, kept with
/// disjoint supports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignedSeq {
    plus: PosSeq,
    minus: PosSeq,
}

impl SignedSeq {
    /// Cancels overlapping entries so the two parts have disjoint support.
    /// Tail bounds cannot cancel and are kept as given.
    pub fn new(plus: PosSeq, minus: PosSeq) -> SignedSeq {
        if plus.data.is_empty() || minus.data.is_empty() {
            return SignedSeq { plus, minus };
        }
        let lo = plus.offset.min(minus.offset);
        let hi = (plus.offset + plus.data.len()).max(minus.offset + minus.data.len());
        let mut p = vec![0.0; hi - lo];
        let mut m = vec![0.0; hi - lo];
        for k in lo..hi {
            let a = plus.get(k);
            let b = minus.get(k);
            match a.partial_cmp(&b) {
                Some(Ordering::Greater) => p[k - lo] = a - b,
                Some(Ordering::Less) => m[k - lo] = b - a,
                _ => {}
            }
        }
        SignedSeq {
            plus: PosSeq::from_window(lo, p, plus.tail),
            minus: PosSeq::from_window(lo, m, minus.tail),
        }
    }

    pub fn from_pos(u: PosSeq) -> SignedSeq {
        SignedSeq { plus: u, minus: PosSeq::zero() }
    }

    pub fn negated(u: PosSeq) -> SignedSeq {
        SignedSeq { plus: PosSeq::zero(), minus: u }
    }

    pub fn plus(&self) -> &PosSeq {
        &self.plus
    }

    pub fn minus(&self) -> &PosSeq {
        &self.minus
    }

    pub fn into_parts(self) -> (PosSeq, PosSeq) {
        (self.plus, self.minus)
    }

    pub fn neg(&self) -> SignedSeq {
        SignedSeq { plus: self.minus.clone(), minus: self.plus.clone() }
    }

    pub fn add(&self, other: &SignedSeq) -> SignedSeq {
        SignedSeq::new(self.plus.add(&other.plus), self.minus.add(&other.minus))
    }

    pub fn get(&self, index: usize) -> f64 {
        self.plus.get(index) - self.minus.get(index)
    }

    /// `<Psi, u>`, the total signed mass.
    pub fn pair_psi(&self) -> Bracket {
        self.plus.mass().sub(&self.minus.mass())
    }

    /// Bracket on the l1 norm.
    pub fn norm(&self) -> Bracket {
        self.plus.mass().add(&self.minus.mass())
    }
}

impl From<PosSeq> for SignedSeq {
    fn from(u: PosSeq) -> SignedSeq {
        SignedSeq::from_pos(u)
    }
}

pub(crate) fn check_finite_support(u: &PosSeq, what: &str) -> Result<()> {
    if u.tail_bound() > 0.0 {
        return Err(Error::Precondition(format!(
            "{what} needs a finitely supported input (tail bound {:e})",
            u.tail_bound()
        )));
    }
    Ok(())
}
