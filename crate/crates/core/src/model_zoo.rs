//! Generator pairs `(A, B)` on l1: a diagonal loss-rate operator `A` and a
//! positive transition kernel `B`, together with the exact primitives
//! `U(t)`, `(lambda - A)^{-1}` and `J(lambda) = B (lambda - A)^{-1}`.
//!
//! Column `k` of `B` lists the transitions out of state `k`. A model is
//! dissipative when every column carries at most `a_k` in total; the
//! difference is the column deficit (mass killed at `k`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_lambda, check_time, Error, Result};
use crate::state_space::{PosSeq, SignedSeq};

/// Relative slack used when comparing column sums with `a_k`.
pub const DISSIPATIVITY_RTOL: f64 = 1e-12;

/// Number of leading columns checked when a model is constructed.
const CONSTRUCTION_AUDIT_LEN: usize = 4096;

/// `c * (k + 1)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub c: f64,
    pub p: f64,
}

impl PowerLaw {
    pub const ZERO: PowerLaw = PowerLaw { c: 0.0, p: 0.0 };

    pub fn constant(c: f64) -> PowerLaw {
        PowerLaw { c, p: 0.0 }
    }

    #[inline]
    pub fn eval(&self, k: usize) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let x = (k + 1) as f64;
        let pow = if self.p == 0.0 {
            1.0
        } else if self.p == 1.0 {
            x
        } else if self.p == 2.0 {
            x * x
        } else {
            x.powf(self.p)
        };
        self.c * pow
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.c.is_finite() && self.c >= 0.0 && self.p.is_finite() && self.p >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "{what}: power law needs c >= 0 and p >= 0, got c={} p={}",
                self.c, self.p
            )));
        }
        Ok(())
    }

    /// Upper bound on `sum_{k >= from} 1 / eval(k)`, if finite.
    fn inverse_tail_sum(&self, from: usize) -> Option<f64> {
        if self.c <= 0.0 || self.p <= 1.0 {
            return None;
        }
        // sum_{j >= n} j^-p <= n^-p + n^(1-p) / (p - 1)
        let n = (from + 1) as f64;
        Some((n.powf(-self.p) + n.powf(1.0 - self.p) / (self.p - 1.0)) / self.c)
    }
}

/// Diagonal of `-A`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFn {
    Power(PowerLaw),
    /// Explicit values for the first states, then a power law.
    Table { values: Vec<f64>, tail: PowerLaw },
}

impl RateFn {
    #[inline]
    pub fn eval(&self, k: usize) -> f64 {
        match self {
            RateFn::Power(law) => law.eval(k),
            RateFn::Table { values, tail } => match values.get(k) {
                Some(&v) => v,
                None => tail.eval(k),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let tail = match self {
            RateFn::Power(law) => law,
            RateFn::Table { values, tail } => {
                if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::InvalidModel(format!("rate a_{k} = {v} must be positive")));
                }
                tail
            }
        };
        tail.validate("rate")?;
        if tail.c <= 0.0 {
            return Err(Error::InvalidModel("rates must be positive: power law needs c > 0".into()));
        }
        Ok(())
    }

    /// `sup_k a_k` when finite.
    pub fn sup(&self) -> Option<f64> {
        match self {
            RateFn::Power(law) => (law.p == 0.0).then_some(law.c),
            RateFn::Table { values, tail } => {
                (tail.p == 0.0).then(|| values.iter().copied().fold(tail.c, f64::max))
            }
        }
    }

    /// `inf_k a_k`.
    pub fn inf(&self) -> f64 {
        match self {
            RateFn::Power(law) => law.c,
            RateFn::Table { values, tail } => values.iter().copied().fold(tail.eval(values.len()), f64::min),
        }
    }

    /// `max_{k < n} a_k`.
    pub fn max_below(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            RateFn::Power(law) => law.eval(n - 1),
            RateFn::Table { values, tail } => {
                let head = values.iter().take(n).copied().fold(0.0, f64::max);
                if n > values.len() {
                    head.max(tail.eval(n - 1))
                } else {
                    head
                }
            }
        }
    }

    /// `inf_{k >= from} a_k`.
    pub fn inf_from(&self, from: usize) -> f64 {
        match self {
            RateFn::Power(law) => law.eval(from),
            RateFn::Table { values, tail } => {
                let t = tail.eval(from.max(values.len()));
                values.iter().skip(from).copied().fold(t, f64::min)
            }
        }
    }

    /// Upper bound on `sum_{k >= from} 1 / a_k` when the series converges.
    pub fn inverse_tail_sum(&self, from: usize) -> Option<f64> {
        match self {
            RateFn::Power(law) => law.inverse_tail_sum(from),
            RateFn::Table { values, tail } => {
                let head: f64 = values.iter().skip(from).map(|v| 1.0 / v).sum();
                tail.inverse_tail_sum(from.max(values.len())).map(|t| head + t)
            }
        }
    }
}

/// Transition kernel; column `k` lists `(target, rate)` pairs out of `k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    None,
    /// All of `a_k` moves from `k` to `k + 1`.
    PureBirth,
    /// Rate `b_k` to `k + 1`, `d_k` to `k - 1` (none at `k = 0`), `kill_k`
    /// lost.
    BirthDeath { b: PowerLaw, d: PowerLaw, kill: PowerLaw },
    /// Explicit columns; other columns follow `tail`.
    Table { columns: BTreeMap<usize, Vec<(usize, f64)>>, tail: Box<Kernel> },
}

impl Kernel {
    #[inline]
    pub fn for_each_transition<F: FnMut(usize, f64)>(&self, a: &RateFn, k: usize, mut f: F) {
        self.visit(a, k, &mut f)
    }

    fn visit<F: FnMut(usize, f64)>(&self, a: &RateFn, k: usize, f: &mut F) {
        match self {
            Kernel::None => {}
            Kernel::PureBirth => f(k + 1, a.eval(k)),
            Kernel::BirthDeath { b, d, .. } => {
                let up = b.eval(k);
                if up > 0.0 {
                    f(k + 1, up);
                }
                if k > 0 {
                    let down = d.eval(k);
                    if down > 0.0 {
                        f(k - 1, down);
                    }
                }
            }
            Kernel::Table { columns, tail } => match columns.get(&k) {
                Some(col) => {
                    for &(target, rate) in col {
                        if rate > 0.0 {
                            f(target, rate);
                        }
                    }
                }
                None => tail.visit(a, k, f),
            },
        }
    }

    pub fn stride(&self) -> usize {
        match self {
            Kernel::None => 0,
            Kernel::PureBirth | Kernel::BirthDeath { .. } => 1,
            Kernel::Table { columns, tail } => columns
                .iter()
                .flat_map(|(&k, col)| col.iter().map(move |&(t, _)| t.abs_diff(k)))
                .fold(tail.stride(), usize::max),
        }
    }

    /// Every transition out of a state `>= from` goes strictly upward.
    pub fn upward_from(&self, from: usize) -> bool {
        match self {
            Kernel::None | Kernel::PureBirth => true,
            Kernel::BirthDeath { d, .. } => d.c == 0.0,
            Kernel::Table { columns, tail } => {
                columns.range(from..).all(|(&k, col)| col.iter().all(|&(t, r)| r == 0.0 || t > k))
                    && tail.upward_from(from)
            }
        }
    }

    /// Largest index whose column is listed explicitly, if any.
    fn last_listed(&self) -> Option<usize> {
        match self {
            Kernel::Table { columns, tail } => {
                let own = columns.keys().next_back().copied();
                own.max(tail.last_listed())
            }
            _ => None,
        }
    }

    fn validate(&self, a: &RateFn) -> Result<()> {
        match self {
            Kernel::None | Kernel::PureBirth => Ok(()),
            Kernel::BirthDeath { b, d, kill } => {
                b.validate("birth rate")?;
                d.validate("death rate")?;
                kill.validate("kill rate")?;
                for k in sample_indices() {
                    let expect = b.eval(k) + if k > 0 { d.eval(k) } else { 0.0 } + kill.eval(k);
                    let got = a.eval(k);
                    if (expect - got).abs() > DISSIPATIVITY_RTOL * got.max(expect) {
                        return Err(Error::InvalidModel(format!(
                            "birth_death: a_{k} = {got} but b + d + kill = {expect}"
                        )));
                    }
                }
                Ok(())
            }
            Kernel::Table { columns, tail } => {
                for (k, col) in columns {
                    for &(t, r) in col {
                        if !(r.is_finite() && r >= 0.0) {
                            return Err(Error::InvalidModel(format!(
                                "transition {k} -> {t} has invalid rate {r}"
                            )));
                        }
                    }
                }
                tail.validate(a)
            }
        }
    }
}

/// Indices probed when validating closed-form rules: a dense prefix and a
/// geometric sample far out.
fn sample_indices() -> impl Iterator<Item = usize> {
    (0..CONSTRUCTION_AUDIT_LEN).chain((13..=40).map(|e| 1usize << e))
}

/// Column deficits and conservativity over a prefix of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `a_k - sum of column k` for `k = 0..=n`.
    pub deficits: Vec<f64>,
    /// Columns whose outflow exceeds `a_k` beyond roundoff.
    pub violations: Vec<usize>,
    pub declared_conservative: bool,
    pub observed_conservative: bool,
}

impl AuditReport {
    pub fn conservative_mismatch(&self) -> bool {
        self.declared_conservative != self.observed_conservative
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && !self.conservative_mismatch()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub a: RateFn,
    pub kernel: Kernel,
    pub conservative: bool,
}

impl ModelSpec {
    /// Validates the rules and audits dissipativity and the conservative
    /// flag on a prefix of states plus a sparse far-out sample.
    pub fn new(name: impl Into<String>, a: RateFn, kernel: Kernel, conservative: bool) -> Result<ModelSpec> {
        let m = ModelSpec::new_unchecked(name, a, kernel, conservative)?;
        let mut n = CONSTRUCTION_AUDIT_LEN;
        if let Some(last) = m.kernel.last_listed() {
            n = n.max(last + 1);
        }
        let report = m.dissipativity_audit(n);
        if let Some(&k) = report.violations.first() {
            return Err(Error::Dissipativity { index: k, deficit: report.deficits[k] });
        }
        for k in (13..=40).map(|e| 1usize << e) {
            let d = m.raw_deficit(k);
            if d < -DISSIPATIVITY_RTOL * m.a.eval(k) {
                return Err(Error::Dissipativity { index: k, deficit: d });
            }
            if m.conservative && d > DISSIPATIVITY_RTOL * m.a.eval(k) {
                return Err(Error::InvalidModel(format!(
                    "declared conservative but column {k} has deficit {d:e}"
                )));
            }
        }
        if report.conservative_mismatch() {
            return Err(Error::InvalidModel(format!(
                "conservative flag is {} but the audited columns say {}",
                report.declared_conservative, report.observed_conservative
            )));
        }
        Ok(m)
    }

    /// Structural validation only; dissipativity is left to
    /// [`ModelSpec::dissipativity_audit`].
    pub fn new_unchecked(name: impl Into<String>, a: RateFn, kernel: Kernel, conservative: bool) -> Result<ModelSpec> {
        a.validate()?;
        kernel.validate(&a)?;
        Ok(ModelSpec { name: name.into(), a, kernel, conservative })
    }

    #[inline]
    pub fn rate(&self, k: usize) -> f64 {
        self.a.eval(k)
    }

    #[inline]
    pub fn for_each_transition<F: FnMut(usize, f64)>(&self, k: usize, f: F) {
        self.kernel.for_each_transition(&self.a, k, f)
    }

    pub fn column(&self, k: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.for_each_transition(k, |t, r| out.push((t, r)));
        out
    }

    pub fn outflow(&self, k: usize) -> f64 {
        let mut s = 0.0;
        self.for_each_transition(k, |_, r| s += r);
        s
    }

    fn raw_deficit(&self, k: usize) -> f64 {
        self.rate(k) - self.outflow(k)
    }

    /// `a_k - sum of column k`, with roundoff-level negatives cleared.
    #[inline]
    pub fn deficit(&self, k: usize) -> f64 {
        let a = self.rate(k);
        let d = a - self.outflow(k);
        if d <= DISSIPATIVITY_RTOL * a {
            0.0
        } else {
            d
        }
    }

    pub fn stride(&self) -> usize {
        self.kernel.stride()
    }

    /// Bound on `sum_{k >= from} 1/a_k` if transitions out of every state
    /// `>= from` go strictly upward without loss and the sum converges.
    /// Mass carried along such a chain survives `n` applications of `J` with
    /// factor at least `exp(-lambda * bound)`.
    pub fn upward_conservative_tail(&self, from: usize) -> Option<f64> {
        if !self.kernel.upward_from(from) || !self.conservative_from(from) {
            return None;
        }
        self.a.inverse_tail_sum(from)
    }

    fn conservative_from(&self, from: usize) -> bool {
        fn rule(kernel: &Kernel, m: &ModelSpec, from: usize) -> bool {
            match kernel {
                Kernel::None => false,
                Kernel::PureBirth => true,
                Kernel::BirthDeath { kill, .. } => kill.c == 0.0,
                Kernel::Table { columns, tail } => {
                    columns.range(from..).all(|(&k, _)| m.deficit(k) == 0.0) && rule(tail, m, from)
                }
            }
        }
        rule(&self.kernel, self, from)
    }

    pub fn dissipativity_audit(&self, n: usize) -> AuditReport {
        let deficits: Vec<f64> = (0..=n).map(|k| self.raw_deficit(k)).collect();
        let violations = deficits
            .iter()
            .enumerate()
            .filter(|&(k, &d)| d < -DISSIPATIVITY_RTOL * self.rate(k))
            .map(|(k, _)| k)
            .collect();
        let observed_conservative = deficits
            .iter()
            .enumerate()
            .all(|(k, &d)| d.abs() <= DISSIPATIVITY_RTOL * self.rate(k));
        AuditReport {
            deficits,
            violations,
            declared_conservative: self.conservative,
            observed_conservative,
        }
    }

    fn tail_rate_bound(&self, what: &str, u: &PosSeq) -> Result<f64> {
        if u.tail_bound() == 0.0 {
            return Ok(0.0);
        }
        self.a.sup().map(|s| s * u.tail_bound()).ok_or_else(|| {
            Error::UnboundedTail(format!(
                "{what}: rates of model '{}' are unbounded and the input has tail bound {:e}",
                self.name,
                u.tail_bound()
            ))
        })
    }

    /// `A u`, i.e. `-a_k u_k`.
    pub fn apply_a(&self, u: &PosSeq) -> Result<SignedSeq> {
        let tail = self.tail_rate_bound("apply_A", u)?;
        let (offset, data) = u.window();
        let out = data.iter().enumerate().map(|(i, &x)| x * self.rate(offset + i)).collect();
        Ok(SignedSeq::negated(PosSeq::from_window(offset, out, tail)))
    }

    pub fn apply_b(&self, u: &PosSeq) -> Result<PosSeq> {
        let tail = self.tail_rate_bound("apply_B", u)?;
        Ok(self.push_forward(u, |_| 1.0, tail))
    }

    /// `(lambda - A)^{-1} u`.
    pub fn apply_resolvent_a(&self, lambda: f64, u: &PosSeq) -> Result<PosSeq> {
        check_lambda(lambda)?;
        let (offset, data) = u.window();
        let out = data
            .iter()
            .enumerate()
            .map(|(i, &x)| x / (lambda + self.rate(offset + i)))
            .collect();
        Ok(PosSeq::from_window(offset, out, u.tail_bound() / (lambda + self.a.inf())))
    }

    /// `U(t) u = exp(-a_k t) u_k`.
    pub fn apply_u(&self, t: f64, u: &PosSeq) -> Result<PosSeq> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(u.clone());
        }
        let (offset, data) = u.window();
        let out = data
            .iter()
            .enumerate()
            .map(|(i, &x)| x * (-self.rate(offset + i) * t).exp())
            .collect();
        Ok(PosSeq::from_window(offset, out, u.tail_bound()))
    }

    /// `J(lambda) u = B (lambda - A)^{-1} u`. Contraction on the cone, so
    /// the tail bound carries over unchanged.
    pub fn apply_j(&self, lambda: f64, u: &PosSeq) -> Result<PosSeq> {
        check_lambda(lambda)?;
        Ok(self.push_forward(u, |k| 1.0 / (lambda + self.rate(k)), u.tail_bound()))
    }

    /// `B diag(weight) u` on the stored entries.
    pub(crate) fn push_forward<W: Fn(usize) -> f64>(&self, u: &PosSeq, weight: W, tail: f64) -> PosSeq {
        let (offset, data) = u.window();
        let mut out = Vec::new();
        let start = self.push_forward_window(offset, data, weight, &mut out);
        PosSeq::from_window(start, out, tail)
    }

    /// Writes `B diag(weight) x` for the window `x` starting at `offset` into
    /// `out` and returns the offset of the output window.
    pub(crate) fn push_forward_window<W: Fn(usize) -> f64>(
        &self,
        offset: usize,
        data: &[f64],
        weight: W,
        out: &mut Vec<f64>,
    ) -> usize {
        out.clear();
        if data.is_empty() {
            return 0;
        }
        let stride = self.stride();
        let start = offset.saturating_sub(stride);
        out.resize(offset + data.len() + stride - start, 0.0);
        for (i, &x) in data.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let k = offset + i;
            let w = x * weight(k);
            self.for_each_transition(k, |target, rate| out[target - start] += rate * w);
        }
        start
    }
}

/// JSON representation of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub space: String,
    #[serde(rename = "A")]
    pub a: RateFile,
    #[serde(rename = "B")]
    pub b: KernelFile,
    pub conservative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateFile {
    Power { c: f64, p: f64 },
    Table { values: Vec<f64>, tail: PowerLaw },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFile {
    None {},
    PureBirth {},
    BirthDeath { b: PowerLaw, d: PowerLaw, kill: PowerLaw },
    Table {
        columns: Vec<(usize, Vec<(usize, f64)>)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail: Option<Box<KernelFile>>,
    },
}

impl From<&RateFn> for RateFile {
    fn from(a: &RateFn) -> RateFile {
        match a {
            RateFn::Power(law) => RateFile::Power { c: law.c, p: law.p },
            RateFn::Table { values, tail } => RateFile::Table { values: values.clone(), tail: *tail },
        }
    }
}

impl From<&Kernel> for KernelFile {
    fn from(k: &Kernel) -> KernelFile {
        match k {
            Kernel::None => KernelFile::None {},
            Kernel::PureBirth => KernelFile::PureBirth {},
            Kernel::BirthDeath { b, d, kill } => KernelFile::BirthDeath { b: *b, d: *d, kill: *kill },
            Kernel::Table { columns, tail } => KernelFile::Table {
                columns: columns.iter().map(|(k, c)| (*k, c.clone())).collect(),
                tail: match **tail {
                    Kernel::None => None,
                    ref other => Some(Box::new(KernelFile::from(other))),
                },
            },
        }
    }
}

fn kernel_from_file(k: KernelFile) -> Result<Kernel> {
    Ok(match k {
        KernelFile::None {} => Kernel::None,
        KernelFile::PureBirth {} => Kernel::PureBirth,
        KernelFile::BirthDeath { b, d, kill } => Kernel::BirthDeath { b, d, kill },
        KernelFile::Table { columns, tail } => {
            let mut map = BTreeMap::new();
            for (k, col) in columns {
                if map.insert(k, col).is_some() {
                    return Err(Error::Parse(format!("column {k} listed twice")));
                }
            }
            let tail = match tail {
                None => Kernel::None,
                Some(t) => kernel_from_file(*t)?,
            };
            Kernel::Table { columns: map, tail: Box::new(tail) }
        }
    })
}

impl ModelFile {
    pub fn into_model(self) -> Result<ModelSpec> {
        if self.space != "l1" {
            return Err(Error::Parse(format!("unsupported space '{}', only \"l1\"", self.space)));
        }
        let a = match self.a {
            RateFile::Power { c, p } => RateFn::Power(PowerLaw { c, p }),
            RateFile::Table { values, tail } => RateFn::Table { values, tail },
        };
        ModelSpec::new(self.name, a, kernel_from_file(self.b)?, self.conservative)
    }
}

impl ModelSpec {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            name: self.name.clone(),
            space: "l1".into(),
            a: RateFile::from(&self.a),
            b: KernelFile::from(&self.kernel),
            conservative: self.conservative,
        }
    }

    pub fn from_json_str(text: &str) -> Result<ModelSpec> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        ModelSpec::from_json_str(&text)
    }
}

/// Built-in models used throughout the tests and the documentation.
pub mod zoo {
    use super::*;

    /// State 0 (rate 1) feeds state 1 (rate 2), which only loses mass.
    pub fn two_state() -> ModelSpec {
        let columns = BTreeMap::from([(0, vec![(1, 1.0)])]);
        ModelSpec::new(
            "two_state",
            RateFn::Table { values: vec![1.0, 2.0], tail: PowerLaw::constant(1.0) },
            Kernel::Table { columns, tail: Box::new(Kernel::None) },
            false,
        )
        .expect("two_state is valid")
    }

    /// `B = 0`, `a_k = 1`.
    pub fn pure_decay() -> ModelSpec {
        ModelSpec::new("pure_decay", RateFn::Power(PowerLaw::constant(1.0)), Kernel::None, false)
            .expect("pure_decay is valid")
    }

    pub fn pure_birth(name: &str, c: f64, p: f64) -> Result<ModelSpec> {
        ModelSpec::new(name, RateFn::Power(PowerLaw { c, p }), Kernel::PureBirth, true)
    }

    /// Linear pure birth `a_k = k + 1` (Yule process): honest.
    pub fn yule() -> ModelSpec {
        pure_birth("yule", 1.0, 1.0).expect("yule is valid")
    }

    /// Quadratic pure birth `a_k = (k + 1)^2`: explodes, dishonest.
    pub fn quadratic_birth() -> ModelSpec {
        pure_birth("quadratic_birth", 1.0, 2.0).expect("quadratic_birth is valid")
    }

    /// Constant birth, death and kill rates 1, reflecting at 0.
    pub fn birth_death_kill() -> ModelSpec {
        let one = PowerLaw::constant(1.0);
        ModelSpec::new(
            "birth_death_kill",
            RateFn::Table { values: vec![2.0], tail: PowerLaw::constant(3.0) },
            Kernel::BirthDeath { b: one, d: one, kill: one },
            false,
        )
        .expect("birth_death_kill is valid")
    }

    pub fn all() -> Vec<ModelSpec> {
        vec![two_state(), pure_decay(), yule(), quadratic_birth(), birth_death_kill()]
    }
}

#[cfg(test)]
mod tests {
    use super::zoo::*;
    use super::*;

    #[test]
    fn apply_a_examples() {
        let q = quadratic_birth();
        let r = q.apply_a(&PosSeq::basis(0)).unwrap();
        assert_eq!(r.minus().get(0), 1.0);
        assert!(!r.plus().has_entries());
        assert!(q.apply_a(&PosSeq::zero()).unwrap().norm().hi == 0.0);

        let one = PowerLaw::constant(1.0);
        let bd = ModelSpec::new(
            "bd",
            RateFn::Table { values: vec![1.0], tail: PowerLaw::constant(2.0) },
            Kernel::BirthDeath { b: one, d: one, kill: PowerLaw::ZERO },
            true,
        )
        .unwrap();
        assert_eq!(bd.apply_a(&PosSeq::basis(2)).unwrap().minus().get(2), 2.0);
        let be2 = bd.apply_b(&PosSeq::basis(2)).unwrap();
        assert_eq!(be2, PosSeq::from_entries([(1, 1.0), (3, 1.0)]).unwrap());
    }

    #[test]
    fn apply_b_examples() {
        assert_eq!(quadratic_birth().apply_b(&PosSeq::basis(0)).unwrap(), PosSeq::basis(1));
        assert!(pure_decay().apply_b(&PosSeq::basis(4)).unwrap().is_zero());
    }

    #[test]
    fn unbounded_tail_is_rejected() {
        let u = PosSeq::basis(0).with_tail(0.1).unwrap();
        assert!(matches!(quadratic_birth().apply_a(&u), Err(Error::UnboundedTail(_))));
        assert!(matches!(quadratic_birth().apply_b(&u), Err(Error::UnboundedTail(_))));
        let r = pure_decay().apply_a(&u).unwrap();
        assert!((r.minus().tail_bound() - 0.1).abs() < 1e-16);
    }

    #[test]
    fn resolvent_and_semigroup_examples() {
        let q = quadratic_birth();
        assert_eq!(q.apply_resolvent_a(1.0, &PosSeq::basis(0)).unwrap().get(0), 0.5);
        assert!(q.apply_resolvent_a(1.0, &PosSeq::zero()).unwrap().is_zero());
        let y = yule();
        assert!((y.apply_resolvent_a(2.0, &PosSeq::basis(3)).unwrap().get(3) - 1.0 / 6.0).abs() < 1e-16);
        assert!(q.apply_resolvent_a(0.0, &PosSeq::basis(0)).is_err());

        let u = PosSeq::from_entries([(0, 0.5), (3, 2.0)]).unwrap();
        assert_eq!(q.apply_u(0.0, &u).unwrap(), u);
        assert!((q.apply_u(1.0, &PosSeq::basis(0)).unwrap().get(0) - 0.36787944117144233).abs() < 1e-16);
        assert!(q.apply_u(-1.0, &u).is_err());
        let big = q.apply_u(30.0, &u).unwrap();
        assert!(big.mass().hi <= (-30.0f64).exp() * u.mass().hi);
    }

    #[test]
    fn j_examples() {
        let q = quadratic_birth();
        assert_eq!(q.apply_j(1.0, &PosSeq::basis(0)).unwrap(), PosSeq::basis(1).scale(0.5).unwrap());
        assert!(pure_decay().apply_j(1.0, &PosSeq::basis(0)).unwrap().is_zero());
        let y = yule();
        let mut w = PosSeq::basis(0);
        for n in 1..=50 {
            w = y.apply_j(1.0, &w).unwrap();
            assert_eq!(w.support_len(), 1);
            assert!((w.get(n) - 1.0 / (n as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn audit_examples() {
        let r = yule().dissipativity_audit(100);
        assert!(r.violations.is_empty() && r.observed_conservative && r.is_clean());
        let r = birth_death_kill().dissipativity_audit(50);
        assert!(r.deficits.iter().all(|&d| (d - 1.0).abs() < 1e-15));
        assert!(!r.observed_conservative && r.is_clean());

        let columns = BTreeMap::from([(3, vec![(4, 2.0), (5, 1.5)])]);
        let bad = ModelSpec::new_unchecked(
            "bad",
            RateFn::Power(PowerLaw::constant(3.0)),
            Kernel::Table { columns: columns.clone(), tail: Box::new(Kernel::None) },
            false,
        )
        .unwrap();
        assert_eq!(bad.dissipativity_audit(10).violations, vec![3]);
        let err = ModelSpec::new(
            "bad",
            RateFn::Power(PowerLaw::constant(3.0)),
            Kernel::Table { columns, tail: Box::new(Kernel::None) },
            false,
        );
        assert!(matches!(err, Err(Error::Dissipativity { index: 3, .. })));
    }

    #[test]
    fn conservative_flag_must_match() {
        let e = ModelSpec::new("x", RateFn::Power(PowerLaw::constant(1.0)), Kernel::PureBirth, false);
        assert!(e.is_err());
    }

    #[test]
    fn inverse_tail_sums() {
        let a = RateFn::Power(PowerLaw { c: 1.0, p: 2.0 });
        let exact: f64 = (11..2_000_000).map(|j| 1.0 / (j as f64 * j as f64)).sum::<f64>() + 1.0 / 2_000_000.0;
        let bound = a.inverse_tail_sum(10).unwrap();
        assert!(bound >= exact && bound - exact < 0.01);
        assert!(RateFn::Power(PowerLaw { c: 1.0, p: 1.0 }).inverse_tail_sum(0).is_none());
        assert!(quadratic_birth().upward_conservative_tail(0).is_some());
        assert!(yule().upward_conservative_tail(0).is_none());
        assert!(birth_death_kill().upward_conservative_tail(0).is_none());
    }

    #[test]
    fn json_round_trip_and_rejection() {
        for m in all() {
            let text = m.to_json_string();
            assert_eq!(ModelSpec::from_json_str(&text).unwrap(), m);
        }
        let text = r#"{"name":"q","space":"l1","A":{"kind":"power","c":1.0,"p":2.0},
                      "B":{"kind":"pure_birth"},"conservative":true}"#;
        assert_eq!(ModelSpec::from_json_str(text).unwrap().a, quadratic_birth().a);
        let extra = text.replace("\"conservative\"", "\"colour\":1,\"conservative\"");
        assert!(ModelSpec::from_json_str(&extra).is_err());
        let extra_b = text.replace(r#"{"kind":"pure_birth"}"#, r#"{"kind":"pure_birth","x":2}"#);
        assert!(ModelSpec::from_json_str(&extra_b).is_err());
        let bad_space = text.replace("\"l1\"", "\"l2\"");
        assert!(ModelSpec::from_json_str(&bad_space).is_err());
    }
}
