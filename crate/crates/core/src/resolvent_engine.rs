//! The resolvent series for `(lambda - G)^{-1}`, its damped variant
//! `(lambda - G_r)^{-1}`, and the minimal semigroup `V(t)` by uniformization
//! on growing truncations.
//!
//! Remainder bounds for the series rest on the identity
//! `lambda |R_A x| + |J x| + a(R_A x) = |x|` for `x >= 0`, where
//! `R_A = (lambda - A)^{-1}` and `a` is the column-deficit functional. Summing
//! it over `n > K` bounds the omitted mass by `(|J^{K+1} u| - lim |J^n u|) /
//! lambda`, so every iterate norm is a certified remainder bound and a lower
//! bound on the limit tightens it.

use serde::{Deserialize, Serialize};

use crate::error::{check_lambda, check_time, invalid, Result};
use crate::model_zoo::ModelSpec;
use crate::state_space::{check_finite_support, neumaier_sum, Bracket, PosSeq, FLUSH_THRESHOLD};

/// Iterates `J(lambda)^n u` in place.
pub(crate) struct JPowers<'m> {
    model: &'m ModelSpec,
    lambda: f64,
    offset: usize,
    data: Vec<f64>,
    tail: f64,
    scratch: Vec<f64>,
    n: usize,
}

impl<'m> JPowers<'m> {
    pub(crate) fn new(model: &'m ModelSpec, lambda: f64, u: &PosSeq) -> JPowers<'m> {
        let (offset, data) = u.window();
        JPowers {
            model,
            lambda,
            offset,
            data: data.to_vec(),
            tail: u.tail_bound(),
            scratch: Vec::new(),
            n: 0,
        }
    }

    pub(crate) fn power(&self) -> usize {
        self.n
    }

    pub(crate) fn window(&self) -> (usize, &[f64]) {
        (self.offset, &self.data)
    }

    pub(crate) fn entry_sum(&self) -> f64 {
        if self.data.len() == 1 {
            self.data[0]
        } else {
            neumaier_sum(self.data.iter().copied())
        }
    }

    /// `|J^n u|`, the tail counting in full on the upper side.
    pub(crate) fn norm(&self) -> Bracket {
        let s = self.entry_sum();
        Bracket { lo: s, hi: s + self.tail }
    }

    pub(crate) fn tail(&self) -> f64 {
        self.tail
    }

    pub(crate) fn is_exhausted(&self) -> bool {
        self.data.is_empty()
    }

    /// Certified lower bound on `lim_m |J^m (J^n u)|`.
    ///
    /// When every transition at or above the current lowest index moves
    /// upward without loss, each application of `J` keeps at least the
    /// fraction `a_k / (lambda + a_k) >= exp(-lambda / a_k)` of the mass at
    /// `k`, and along any path the visited states are distinct.
    pub(crate) fn limit_lower_bound(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        match self.model.upward_conservative_tail(self.offset) {
            Some(tau) => self.entry_sum() * (-self.lambda * tau).exp(),
            None => 0.0,
        }
    }

    /// `(lambda - A)^{-1}` applied to the current iterate.
    pub(crate) fn resolvent_term(&self) -> PosSeq {
        let lambda = self.lambda;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x / (lambda + self.model.rate(self.offset + i)))
            .collect();
        PosSeq::from_window(self.offset, data, 0.0)
    }

    pub(crate) fn advance(&mut self) {
        let lambda = self.lambda;
        let model = self.model;
        let start = model.push_forward_window(
            self.offset,
            &self.data,
            |k| 1.0 / (lambda + model.rate(k)),
            &mut self.scratch,
        );
        std::mem::swap(&mut self.data, &mut self.scratch);
        self.offset = start;
        self.n += 1;
        // trim and flush
        let mut moved = 0.0;
        for x in self.data.iter_mut() {
            if *x < FLUSH_THRESHOLD {
                moved += *x;
                *x = 0.0;
            }
        }
        self.tail += moved;
        match self.data.iter().position(|&x| x > 0.0) {
            None => {
                self.data.clear();
                self.offset = 0;
            }
            Some(first) => {
                let last = self.data.iter().rposition(|&x| x > 0.0).unwrap_or(first);
                self.data.truncate(last + 1);
                if first > 0 {
                    self.data.drain(..first);
                    self.offset += first;
                }
            }
        }
    }
}

/// Dense accumulator that grows its window on demand.
#[derive(Default)]
pub(crate) struct Accumulator {
    offset: usize,
    data: Vec<f64>,
}

impl Accumulator {
    pub(crate) fn add(&mut self, offset: usize, values: &[f64], scale: f64) {
        if values.is_empty() {
            return;
        }
        if self.data.is_empty() {
            self.offset = offset;
            self.data = values.iter().map(|&v| scale * v).collect();
            return;
        }
        if offset < self.offset {
            let grow = self.offset - offset;
            self.data.splice(0..0, std::iter::repeat_n(0.0, grow));
            self.offset = offset;
        }
        let end = offset + values.len();
        if end > self.offset + self.data.len() {
            self.data.resize(end - self.offset, 0.0);
        }
        let base = offset - self.offset;
        for (i, &v) in values.iter().enumerate() {
            self.data[base + i] += scale * v;
        }
    }

    pub(crate) fn finish(self, tail: f64) -> PosSeq {
        PosSeq::from_window(self.offset, self.data, tail)
    }
}

/// Partial sum of a positive series with a bound on what was left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    /// Entrywise lower bound on the limit.
    pub value: PosSeq,
    /// Upper bound on the l1 mass of the omitted remainder.
    pub defect: f64,
    pub terms_used: usize,
    /// Whether `defect <= tol` was reached before the term cap.
    pub converged: bool,
}

impl SeriesResult {
    pub fn mass(&self) -> Bracket {
        let lo = self.value.entry_sum();
        Bracket { lo, hi: lo + self.defect }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { tol: 1e-8, max_terms: 1_000_000 }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        invalid(format!("tolerance must be positive, got {tol}"))
    }
}

/// `(lambda - G)^{-1} u = sum_n (lambda - A)^{-1} J^n u` with default
/// options and the given tolerance.
pub fn resolvent_g(m: &ModelSpec, lambda: f64, u: &PosSeq, tol: f64) -> Result<SeriesResult> {
    resolvent_g_with(m, lambda, u, SeriesOptions { tol, ..SeriesOptions::default() })
}

pub fn resolvent_g_with(m: &ModelSpec, lambda: f64, u: &PosSeq, opts: SeriesOptions) -> Result<SeriesResult> {
    check_lambda(lambda)?;
    check_tol(opts.tol)?;
    // Tail mass of u has unknown location; its whole image has mass at
    // most tail / lambda.
    let stripped = PosSeq::from_window(u.window().0, u.window().1.to_vec(), 0.0);
    let tail_part = u.tail_bound() / lambda;
    let mut powers = JPowers::new(m, lambda, &stripped);
    let mut acc = Accumulator::default();
    let mut terms = 0;
    let mut defect;
    loop {
        if powers.is_exhausted() {
            defect = powers.tail() / lambda;
            break;
        }
        let term = powers.resolvent_term();
        let (o, d) = term.window();
        acc.add(o, d, 1.0);
        terms += 1;
        powers.advance();
        defect = (powers.norm().hi - powers.limit_lower_bound()).max(0.0) / lambda;
        if defect + tail_part <= opts.tol || terms >= opts.max_terms {
            break;
        }
    }
    let defect = defect + tail_part;
    Ok(SeriesResult {
        value: acc.finish(0.0),
        defect,
        terms_used: terms,
        converged: defect <= opts.tol,
    })
}

/// `(lambda - G_r)^{-1} u = sum_n r^n (lambda - A)^{-1} J^n u` for
/// `0 <= r < 1`; the geometric factor makes any tolerance reachable.
pub fn resolvent_gr(m: &ModelSpec, lambda: f64, r: f64, u: &PosSeq, tol: f64) -> Result<SeriesResult> {
    check_lambda(lambda)?;
    check_tol(tol)?;
    if !(0.0..1.0).contains(&r) {
        return invalid(format!("damping r must lie in [0, 1), got {r}"));
    }
    let stripped = PosSeq::from_window(u.window().0, u.window().1.to_vec(), 0.0);
    let tail_part = u.tail_bound() / (lambda * (1.0 - r));
    let mut powers = JPowers::new(m, lambda, &stripped);
    let mut acc = Accumulator::default();
    let mut weight = 1.0;
    let mut terms = 0;
    let mut defect = 0.0;
    let cap = SeriesOptions::default().max_terms;
    while !powers.is_exhausted() {
        let term = powers.resolvent_term();
        let (o, d) = term.window();
        acc.add(o, d, weight);
        terms += 1;
        powers.advance();
        weight *= r;
        defect = weight / (1.0 - r) * powers.norm().hi / lambda;
        if defect + tail_part <= tol || terms >= cap {
            break;
        }
    }
    if powers.is_exhausted() {
        defect = weight / (1.0 - r) * powers.tail() / lambda;
    }
    let defect = defect + tail_part;
    Ok(SeriesResult { value: acc.finish(0.0), defect, terms_used: terms, converged: defect <= tol })
}

/// Controls for the truncation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub n_start: usize,
    pub n_max: usize,
    /// Target width of the mass bracket.
    pub tol: f64,
    /// Largest `N * steps` a single level may cost.
    pub work_budget: f64,
    /// Poisson mass dropped from the uniformization sum.
    pub poisson_tail: f64,
}

impl Default for TruncationParams {
    fn default() -> Self {
        TruncationParams {
            n_start: 64,
            n_max: 1 << 20,
            tol: 1e-8,
            work_budget: 4e8,
            poisson_tail: 1e-14,
        }
    }
}

/// Approximations of `V(t) u` on successive truncations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationLadder {
    pub levels: Vec<usize>,
    pub values: Vec<PosSeq>,
    pub masses: Vec<Bracket>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderStop {
    Converged,
    MaxTruncation,
    WorkBudget,
}

/// `V(t) u` as an entrywise lower bound. `value.tail_bound()` is the
/// certified gap, so `value.mass()` equals `mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupResult {
    pub value: PosSeq,
    pub mass: Bracket,
    pub ladder: TruncationLadder,
    pub truncation: usize,
    pub stop: LadderStop,
}

impl SemigroupResult {
    pub fn converged(&self) -> bool {
        self.stop == LadderStop::Converged
    }
}

/// `int_0^t V(s) u ds` with the same conventions as [`SemigroupResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: PosSeq,
    pub mass: Bracket,
    pub truncation: usize,
    pub stop: LadderStop,
}

/// Both outputs of one ladder run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub state: SemigroupResult,
    pub integral: IntegralResult,
}

pub fn semigroup_v(m: &ModelSpec, t: f64, u: &PosSeq, params: &TruncationParams) -> Result<SemigroupResult> {
    Ok(run_ladder(m, t, u, params, false)?.state)
}

pub fn integrate_v(m: &ModelSpec, t: f64, u: &PosSeq, params: &TruncationParams) -> Result<IntegralResult> {
    Ok(run_ladder(m, t, u, params, true)?.integral)
}

/// `V(t) u` and `int_0^t V(s) u ds` from a single ladder.
pub fn trajectory_point(m: &ModelSpec, t: f64, u: &PosSeq, params: &TruncationParams) -> Result<TrajectoryPoint> {
    run_ladder(m, t, u, params, true)
}

fn check_params(p: &TruncationParams) -> Result<()> {
    if p.n_start == 0 || p.n_max < p.n_start {
        return invalid(format!("need 0 < n_start <= n_max, got {} and {}", p.n_start, p.n_max));
    }
    check_tol(p.tol)?;
    if !(p.poisson_tail > 0.0 && p.poisson_tail < 1e-3) {
        return invalid("poisson_tail must lie in (0, 1e-3)");
    }
    if !(p.work_budget > 0.0) {
        return invalid("work_budget must be positive");
    }
    Ok(())
}

fn run_ladder(m: &ModelSpec, t: f64, u: &PosSeq, params: &TruncationParams, want_integral: bool) -> Result<TrajectoryPoint> {
    check_time(t)?;
    check_params(params)?;
    check_finite_support(u, "semigroup_V")?;
    let norm_u = u.entry_sum();
    if t == 0.0 || !u.has_entries() {
        let state = SemigroupResult {
            value: u.clone(),
            mass: Bracket::point(norm_u),
            ladder: TruncationLadder { levels: vec![], values: vec![], masses: vec![] },
            truncation: 0,
            stop: LadderStop::Converged,
        };
        let integral = IntegralResult {
            value: u.scale_unchecked(t),
            mass: Bracket::point(t * norm_u),
            truncation: 0,
            stop: LadderStop::Converged,
        };
        return Ok(TrajectoryPoint { state, integral });
    }

    let needed = u.max_index().unwrap_or(0) + 1;
    let mut n = params.n_start.max(needed.next_power_of_two()).min(params.n_max.max(needed));
    let mut ladder = TruncationLadder { levels: vec![], values: vec![], masses: vec![] };
    loop {
        let level = uniformize(m, t, u, n, want_integral, params.poisson_tail);
        let gap = level.gap.min((norm_u - level.value_sum).max(0.0));
        let mass = Bracket { lo: level.value_sum, hi: level.value_sum + gap };
        let value = PosSeq::from_window(0, level.value, gap);
        ladder.levels.push(n);
        ladder.values.push(value.clone());
        ladder.masses.push(mass);

        let next = 2 * n;
        let stop = if gap <= params.tol {
            Some(LadderStop::Converged)
        } else if next > params.n_max {
            Some(LadderStop::MaxTruncation)
        } else if estimated_work(m, next, t) > params.work_budget {
            Some(LadderStop::WorkBudget)
        } else {
            None
        };
        if let Some(stop) = stop {
            let integral = match level.integral {
                Some(values) => {
                    let lo = neumaier_sum(values.iter().copied());
                    let igap = level.integral_gap.min((t * norm_u - lo).max(0.0));
                    IntegralResult {
                        value: PosSeq::from_window(0, values, igap),
                        mass: Bracket { lo, hi: lo + igap },
                        truncation: n,
                        stop,
                    }
                }
                None => IntegralResult {
                    value: PosSeq::zero(),
                    mass: Bracket { lo: 0.0, hi: t * norm_u },
                    truncation: n,
                    stop,
                },
            };
            let state = SemigroupResult { value, mass, ladder, truncation: n, stop };
            return Ok(TrajectoryPoint { state, integral });
        }
        n = next;
    }
}

fn estimated_work(m: &ModelSpec, n: usize, t: f64) -> f64 {
    let mu = m.a.max_below(n) * t;
    n as f64 * (mu + 10.0 * mu.sqrt() + 20.0)
}

/// `I + Q_N / c` for the truncation to states `0..n`, with the column mass
/// leaving the truncation kept separately.
struct UniformizedMatrix {
    keep: Vec<f64>,
    boundary: Vec<f64>,
    kernel: KernelStorage,
}

enum KernelStorage {
    /// Few distinct jump offsets: one rate vector per offset, indexed by
    /// source state.
    Band(Vec<(isize, Vec<f64>)>),
    Csr { col_start: Vec<usize>, targets: Vec<u32>, rates: Vec<f64> },
}

const MAX_BANDS: usize = 8;

impl UniformizedMatrix {
    fn new(m: &ModelSpec, n: usize, c: f64) -> UniformizedMatrix {
        let mut keep = vec![0.0; n];
        let mut boundary = vec![0.0; n];
        let mut col_start = Vec::with_capacity(n + 1);
        let mut targets: Vec<u32> = Vec::new();
        let mut rates: Vec<f64> = Vec::new();
        for k in 0..n {
            keep[k] = 1.0 - m.rate(k) / c;
            col_start.push(targets.len());
            m.for_each_transition(k, |target, rate| {
                if target < n {
                    targets.push(target as u32);
                    rates.push(rate / c);
                } else {
                    boundary[k] += rate / c;
                }
            });
        }
        col_start.push(targets.len());

        let mut offsets: Vec<isize> = Vec::new();
        'scan: for k in 0..n {
            for &t in &targets[col_start[k]..col_start[k + 1]] {
                let d = t as isize - k as isize;
                if !offsets.contains(&d) {
                    offsets.push(d);
                    if offsets.len() > MAX_BANDS {
                        break 'scan;
                    }
                }
            }
        }
        let kernel = if offsets.len() <= MAX_BANDS {
            offsets.sort_unstable();
            let mut bands: Vec<(isize, Vec<f64>)> = offsets.iter().map(|&d| (d, vec![0.0; n])).collect();
            for k in 0..n {
                for idx in col_start[k]..col_start[k + 1] {
                    let d = targets[idx] as isize - k as isize;
                    let b = bands.iter_mut().find(|(o, _)| *o == d).expect("offset listed");
                    b.1[k] += rates[idx];
                }
            }
            KernelStorage::Band(bands)
        } else {
            KernelStorage::Csr { col_start, targets, rates }
        };
        UniformizedMatrix { keep, boundary, kernel }
    }

    /// `y = P x` on the output window `new_lo..new_hi` for `x` supported in
    /// `lo..hi`; returns the mass sent past the truncation.
    fn apply(&self, x: &[f64], y: &mut [f64], lo: usize, hi: usize, new_lo: usize, new_hi: usize) -> f64 {
        for v in &mut y[new_lo..lo] {
            *v = 0.0;
        }
        for v in &mut y[hi..new_hi] {
            *v = 0.0;
        }
        for ((yk, &xk), &kk) in y[lo..hi].iter_mut().zip(&x[lo..hi]).zip(&self.keep[lo..hi]) {
            *yk = kk * xk;
        }
        let out: f64 = x[lo..hi].iter().zip(&self.boundary[lo..hi]).map(|(a, b)| a * b).sum();
        match &self.kernel {
            KernelStorage::Band(bands) => {
                for (d, r) in bands {
                    // sources k with k + d inside the output window
                    let src_lo = lo.max((new_lo as isize - d).max(0) as usize);
                    let src_hi = hi.min((new_hi as isize - d).max(0) as usize);
                    if src_lo >= src_hi {
                        continue;
                    }
                    let dst_lo = (src_lo as isize + d) as usize;
                    let len = src_hi - src_lo;
                    let dst = &mut y[dst_lo..dst_lo + len];
                    for ((yk, &xk), &rk) in dst.iter_mut().zip(&x[src_lo..src_hi]).zip(&r[src_lo..src_hi]) {
                        *yk += rk * xk;
                    }
                }
            }
            KernelStorage::Csr { col_start, targets, rates } => {
                for k in lo..hi {
                    let xk = x[k];
                    if xk == 0.0 {
                        continue;
                    }
                    for idx in col_start[k]..col_start[k + 1] {
                        y[targets[idx] as usize] += rates[idx] * xk;
                    }
                }
            }
        }
        out
    }
}

struct LevelRun {
    value: Vec<f64>,
    value_sum: f64,
    gap: f64,
    integral: Option<Vec<f64>>,
    integral_gap: f64,
}

/// `ln(k!)`.
fn ln_factorial(k: usize) -> f64 {
    if k < 32 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Poisson(mu) probabilities for `0..=len-1`, computed outward from the mode.
fn poisson_pmf(mu: f64, len: usize) -> Vec<f64> {
    let mut p = vec![0.0; len];
    if len == 0 {
        return p;
    }
    if mu == 0.0 {
        p[0] = 1.0;
        return p;
    }
    let mode = (mu.floor() as usize).min(len - 1);
    p[mode] = (mode as f64 * mu.ln() - mu - ln_factorial(mode)).exp();
    for k in mode + 1..len {
        p[k] = p[k - 1] * mu / k as f64;
    }
    for k in (0..mode).rev() {
        p[k] = p[k + 1] * (k + 1) as f64 / mu;
    }
    // The mode value carries the rounding of ln(k!) (relative 1e-16 of a
    // number of size mu ln mu); renormalizing removes it.
    let s = neumaier_sum(p.iter().copied());
    if s > 0.0 {
        for x in p.iter_mut() {
            *x /= s;
        }
    }
    p
}

/// Smallest `R` with `P(Poisson(mu) > R) <= eps`, using the geometric bound
/// on the upper tail beyond the mean.
fn poisson_right_point(mu: f64, eps: f64) -> usize {
    if mu == 0.0 {
        return 0;
    }
    let mode = mu.floor() as usize;
    let mut k = mode;
    let mut pk = (mode as f64 * mu.ln() - mu - ln_factorial(mode)).exp();
    loop {
        let ratio = mu / (k + 1) as f64;
        if ratio < 1.0 && pk * ratio / (1.0 - ratio) <= eps {
            return k;
        }
        k += 1;
        pk *= mu / k as f64;
    }
}

/// Upper bound on the probability that mass entering the states `>= n`
/// is still alive `r` time units later, when those states form an upward
/// chain with `sum 1/a_k <= tau` and `a_k >= a_min`: the residence time is
/// dominated by `sum Exp(a_k)`, whose Chernoff bound optimizes to
/// `exp(-a_min (sqrt r - sqrt tau)^2)` for `r > tau`.
pub(crate) fn escape_survival(r: f64, tau: f64, a_min: f64) -> f64 {
    if r <= tau {
        return 1.0;
    }
    let d = r.sqrt() - tau.sqrt();
    (-a_min * d * d).exp().min(1.0)
}

/// One uniformization run on states `0..n`. Transitions leaving the
/// truncation feed an absorbing boundary counter whose Poisson-weighted
/// value bounds the mass missing from the truncated solution.
fn uniformize(m: &ModelSpec, t: f64, u: &PosSeq, n: usize, want_integral: bool, eps: f64) -> LevelRun {
    let c = m.a.max_below(n);
    let op = UniformizedMatrix::new(m, n, c);
    let stride = m.stride();

    let mu = c * t;
    let steps = poisson_right_point(mu, eps);
    let w = poisson_pmf(mu, steps + 1);
    // P(N > j) for the integral weights, summed from the right
    let mut upper = vec![0.0; steps + 1];
    let mut acc = 0.0;
    for j in (0..=steps).rev() {
        upper[j] = acc;
        acc += w[j];
    }
    let total = acc;

    // Points s < t at which the boundary counter is also sampled, chosen
    // around the escape time scale of the upward tail.
    let escape = if m.kernel.upward_from(n) {
        m.a.inverse_tail_sum(n).map(|tau| (tau, m.a.inf_from(n)))
    } else {
        None
    };
    let mut probe_times: Vec<f64> = Vec::new();
    if let Some((tau, _)) = escape {
        let mut eps_list: Vec<f64> = (1..=20).map(|i| tau * (1.0 + 0.05 * i as f64)).collect();
        let mut e = tau * 2.0;
        while e < t {
            e *= 1.5;
            eps_list.push(e);
        }
        for e in eps_list {
            if e < t {
                probe_times.push(t - e);
            }
        }
        probe_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        probe_times.dedup();
    }
    // boundary counter after each step
    let mut absorbed_history = Vec::with_capacity(if escape.is_some() { steps + 1 } else { 0 });

    let (u_off, u_data) = u.window();
    let mut x = vec![0.0; n];
    x[u_off..u_off + u_data.len()].copy_from_slice(u_data);
    let mut lo = u_off;
    let mut hi = (u_off + u_data.len()).min(n);
    let mut y = vec![0.0; n];
    let mut value = vec![0.0; n];
    let mut integral = if want_integral { vec![0.0; n] } else { Vec::new() };
    let mut absorbed = 0.0;
    let mut flux_t = 0.0;
    let mut flux_int = 0.0;

    // Entries below TINY and step weights below TINY_WEIGHT are dropped so
    // that no product reaches the subnormal range, where arithmetic is two
    // orders of magnitude slower. Dropped mass is added to the gap.
    const TINY: f64 = 1e-280;
    const TINY_WEIGHT: f64 = 1e-20;
    let mut skipped_weight = 0.0;
    let mut flushed = 0.0;
    for j in 0..=steps {
        let wj = w[j];
        if wj > TINY_WEIGHT {
            for k in lo..hi {
                value[k] += wj * x[k];
            }
            flux_t += wj * absorbed;
        } else {
            skipped_weight += wj;
        }
        if want_integral {
            let wi = upper[j] / c;
            if wi > TINY_WEIGHT {
                for k in lo..hi {
                    integral[k] += wi * x[k];
                }
                flux_int += wi * absorbed;
            } else {
                skipped_weight += upper[j];
            }
        }
        if escape.is_some() {
            absorbed_history.push(absorbed);
        }
        if j == steps {
            break;
        }
        let new_lo = lo.saturating_sub(stride);
        let new_hi = (hi + stride).min(n);
        let out = op.apply(&x, &mut y, lo, hi, new_lo, new_hi);
        absorbed += out;
        for v in y[new_lo..new_hi].iter_mut() {
            let small = *v < TINY;
            flushed += if small { *v } else { 0.0 };
            *v = if small { 0.0 } else { *v };
        }
        std::mem::swap(&mut x, &mut y);
        lo = new_lo;
        hi = new_hi;
    }

    let norm_u = u.entry_sum();
    // mass of the Poisson terms beyond `steps`
    let dropped = (1.0 - total).max(0.0) + eps + skipped_weight;
    let mut gap = flux_t + dropped * norm_u;
    if let Some((tau, a_min)) = escape {
        let probe_flux: Vec<f64> = probe_times
            .iter()
            .map(|&s| {
                let pw = poisson_pmf(c * s, steps + 1);
                neumaier_sum(pw.iter().zip(&absorbed_history).map(|(a, b)| a * b))
            })
            .collect();
        // Stieltjes upper sum of the flux against the survival bound.
        let mut bound = 0.0;
        let mut prev = 0.0;
        for (i, &s) in probe_times.iter().enumerate() {
            bound += (probe_flux[i] - prev).max(0.0) * escape_survival(t - s, tau, a_min);
            prev = probe_flux[i].max(prev);
        }
        bound += (flux_t - prev).max(0.0);
        gap = gap.min(bound + dropped * norm_u);
    }
    gap += flushed;
    let value_sum = neumaier_sum(value.iter().copied());
    let integral_gap = flux_int + dropped * norm_u * t + eps * norm_u / c + flushed * t;
    LevelRun {
        value,
        value_sum,
        gap,
        integral: want_integral.then_some(integral),
        integral_gap,
    }
}
