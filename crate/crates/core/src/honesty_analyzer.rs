//! Functionals deciding whether trajectories are honest.
//!
//! With `a(u) = -<Psi, (A + B) u>` the local mass balance, a trajectory is
//! honest when its mass loss equals `abar` applied to its time integral.
//! The defect is measured by `<Xi_lambda, u> = lim |J(lambda)^n u|`, computed
//! here as a nonincreasing sequence with a certified lower bound where the
//! kernel allows one. The same defect is reachable through the resolvent
//! functional `abar` and through the Dyson-Phillips functional `ahat`; both
//! are implemented and compared in [`mass_loss_delta`].

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyson_phillips::{DpExpansion, Quadrature};
use crate::error::{check_lambda, check_time, invalid, Error, Result};
use crate::model_zoo::ModelSpec;
use crate::resolvent_engine::{trajectory_point, JPowers, SeriesOptions, TruncationParams};
use crate::state_space::{check_finite_support, neumaier_sum, Bracket, PosSeq, SignedSeq, Tri};

/// `a(u) = sum_k deficit_k u_k` on a finitely supported signed sequence.
pub fn a_frak(m: &ModelSpec, u: &SignedSeq) -> Result<f64> {
    check_finite_support(u.plus(), "a_frak")?;
    check_finite_support(u.minus(), "a_frak")?;
    Ok(a_frak_entries(m, u.plus()) - a_frak_entries(m, u.minus()))
}

fn a_frak_entries(m: &ModelSpec, u: &PosSeq) -> f64 {
    neumaier_sum(u.iter().map(|(k, x)| m.deficit(k) * x))
}

/// `a_0(int_0^t V(s) u ds) = |u| - |V(t) u|`.
pub fn a0_on_integral(m: &ModelSpec, t: f64, u: &PosSeq, params: &TruncationParams) -> Result<Bracket> {
    let mass = crate::resolvent_engine::semigroup_v(m, t, u, params)?.mass;
    Ok(a0_from_mass(u.entry_sum(), mass))
}

fn a0_from_mass(norm_u: f64, mass: Bracket) -> Bracket {
    Bracket { lo: (norm_u - mass.hi).max(0.0), hi: (norm_u - mass.lo).max(0.0) }
}

/// `abar_lambda((lambda - G)^{-1} u) = sum_n a((lambda - A)^{-1} J^n u)`.
///
/// Partial sums increase. With the identity
/// `lambda |R_A x| + |J x| + a(R_A x) = |x|` applied to `x = J^n u`, the
/// remainder after `K` terms is at most `|J^{K+1} u| - lim |J^n u|`, which
/// closes the bracket. A tail bound on `u` adds its size to the upper edge.
pub fn abar_resolvent(m: &ModelSpec, lambda: f64, u: &PosSeq, tol: f64) -> Result<Bracket> {
    Ok(abar_series(m, lambda, u, SeriesOptions { tol, ..SeriesOptions::default() })?.0)
}

/// The bracket together with the number of terms summed.
pub fn abar_series(m: &ModelSpec, lambda: f64, u: &PosSeq, opts: SeriesOptions) -> Result<(Bracket, usize)> {
    check_lambda(lambda)?;
    if m.conservative || !u.has_entries() && u.tail_bound() == 0.0 {
        return Ok((Bracket::point(0.0), 0));
    }
    let (offset, data) = u.window();
    let entries = PosSeq::from_window(offset, data.to_vec(), 0.0);
    let mut powers = JPowers::new(m, lambda, &entries);
    let mut terms = Vec::new();
    let mut remainder;
    loop {
        let (offset, data) = powers.window();
        terms.push(neumaier_sum(
            data.iter()
                .enumerate()
                .map(|(i, &x)| m.deficit(offset + i) * x / (lambda + m.rate(offset + i))),
        ));
        powers.advance();
        remainder = (powers.norm().hi - powers.limit_lower_bound()).max(0.0);
        if remainder <= opts.tol || powers.is_exhausted() || terms.len() >= opts.max_terms {
            break;
        }
    }
    let sum = neumaier_sum(terms.iter().copied());
    Ok((Bracket { lo: sum, hi: sum + remainder + u.tail_bound() }, terms.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiPolicy {
    pub max_iter: usize,
    /// Stop once the bracket is this narrow.
    pub target_width: f64,
    /// Verdict threshold on `<Xi, u>`.
    pub tol: f64,
    /// Consecutive ratios that must agree before extrapolating.
    pub ratio_window: usize,
    pub ratio_tol: f64,
}

impl Default for XiPolicy {
    fn default() -> Self {
        XiPolicy { max_iter: 20_000_000, target_width: 1e-7, tol: 1e-7, ratio_window: 20, ratio_tol: 1e-4 }
    }
}

impl XiPolicy {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.target_width > 0.0) || !(self.tol >= 0.0) || self.ratio_window < 2 {
            return invalid("xi policy needs max_iter >= 1, target_width > 0, tol >= 0, ratio_window >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiResult {
    /// Certified bracket on `lim |J^n u|`.
    pub bracket: Bracket,
    pub iterations: usize,
    /// Whether the lower edge came from the upward escape bound.
    pub lower_certified: bool,
    /// Extrapolated limit from stabilized ratios. Not certified; never
    /// used for a verdict.
    pub extrapolated: Option<f64>,
    /// `(n, |J^n u|)` at n = 0, 1, 2, 4, 8, ... and the last iterate.
    pub norms: Vec<(usize, f64)>,
}

/// Bracket on `<Xi_lambda, u> = lim_n |J(lambda)^n u|`.
pub fn xi(m: &ModelSpec, lambda: f64, u: &PosSeq, policy: &XiPolicy) -> Result<XiResult> {
    check_lambda(lambda)?;
    policy.validate()?;
    let mut powers = JPowers::new(m, lambda, u);
    let mut hi = powers.norm().hi;
    let mut lo = 0.0f64;
    let mut lower_certified = false;
    let mut norms = vec![(0, hi)];
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(policy.ratio_window + 2);
    let mut next_record = 1;
    loop {
        let n = powers.power();
        if n.is_multiple_of(256) || hi - lo <= policy.target_width {
            let bound = powers.limit_lower_bound();
            if bound > 0.0 {
                lower_certified = true;
            }
            lo = lo.max(bound).min(hi);
        }
        let (plo, phi) = padded(lo, hi, n);
        let done = powers.is_exhausted() || phi <= policy.tol || phi - plo <= policy.target_width || n >= policy.max_iter;
        if done {
            if norms.last().map(|&(k, _)| k) != Some(n) {
                norms.push((n, hi));
            }
            break;
        }
        powers.advance();
        hi = hi.min(powers.norm().hi);
        if recent.len() > policy.ratio_window + 1 {
            recent.pop_front();
        }
        recent.push_back(hi);
        if powers.power() == next_record {
            norms.push((next_record, hi));
            next_record *= 2;
        }
    }
    if powers.is_exhausted() {
        // only flushed mass of unknown location is left
        hi = hi.min(powers.tail());
        lo = lo.min(hi);
    }
    let (lo, hi) = padded(lo, hi, powers.power());
    let decided = hi <= policy.tol || hi - lo <= policy.target_width;
    let extrapolated = if decided || lower_certified { None } else { extrapolate(&recent, policy) };
    Ok(XiResult { bracket: Bracket { lo, hi }, iterations: powers.power(), lower_certified, extrapolated, norms })
}

/// Widens by the rounding accumulated over `n` applications of `J`, each
/// of which perturbs the iterate by a few ulps relative to its size.
fn padded(lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let pad = 4.0 * (n as f64 + 1.0) * f64::EPSILON;
    (lo * (1.0 - pad), hi * (1.0 + pad))
}

/// Limit estimate from the last norms when their ratios, or the ratios of
/// their decrements, have settled.
fn extrapolate(recent: &VecDeque<f64>, policy: &XiPolicy) -> Option<f64> {
    let w = policy.ratio_window;
    if recent.len() < w + 2 {
        return None;
    }
    let v: Vec<f64> = recent.iter().copied().collect();
    let last = *v.last()?;
    if last <= 0.0 {
        return Some(0.0);
    }
    let settled = |r: &[f64]| {
        let (min, max) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        max - min <= policy.ratio_tol
    };
    let ratios: Vec<f64> = v.windows(2).map(|p| p[1] / p[0]).collect();
    let tail = &ratios[ratios.len() - w..];
    if settled(tail) && tail[w - 1] < 1.0 - policy.ratio_tol {
        // geometric decay to zero
        return Some(0.0);
    }
    let dec: Vec<f64> = v.windows(2).map(|p| p[0] - p[1]).collect();
    if dec.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let rho: Vec<f64> = dec.windows(2).map(|p| p[1] / p[0]).collect();
    let tail = &rho[rho.len() - (w - 1)..];
    let r = tail[tail.len() - 1];
    if settled(tail) && r < 1.0 {
        let d = dec[dec.len() - 1];
        return Some((last - d * r / (1.0 - r)).max(0.0));
    }
    None
}

/// Truncated dual iterate `psi_n = (J^*)^n Psi`, with weight 1 on indices
/// beyond `n_max` so each entry stays an upper bound for the untruncated one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualWeight {
    pub values: Vec<f64>,
    pub n_max: usize,
    pub sweeps: usize,
    /// `max_k |(J^* psi)_k - psi_k|` over `k <= n_max`.
    pub residual: f64,
}

/// Iterates the adjoint of `J` from `Psi = 1` with descending Gauss-Seidel
/// sweeps, which for upward kernels reach the truncated fixed point in one
/// pass. Stops early once a sweep changes nothing.
pub fn xi_dual(m: &ModelSpec, lambda: f64, n_max: usize, iters: usize) -> Result<DualWeight> {
    check_lambda(lambda)?;
    if n_max == 0 || iters == 0 {
        return invalid("xi_dual needs N >= 1 and iters >= 1");
    }
    let mut psi = vec![1.0; n_max + 1];
    let apply = |psi: &[f64], k: usize| -> f64 {
        let mut s = 0.0;
        m.for_each_transition(k, |j, rate| s += rate * psi.get(j).copied().unwrap_or(1.0));
        s / (lambda + m.rate(k))
    };
    let mut sweeps = 0;
    while sweeps < iters {
        sweeps += 1;
        let mut change = 0.0f64;
        for k in (0..=n_max).rev() {
            let new = apply(&psi, k).min(psi[k]);
            change = change.max(psi[k] - new);
            psi[k] = new;
        }
        if change == 0.0 {
            break;
        }
    }
    let residual = (0..=n_max).map(|k| (apply(&psi, k) - psi[k]).abs()).fold(0.0, f64::max);
    Ok(DualWeight { values: psi, n_max, sweeps, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhatParams {
    pub quadrature: Quadrature,
    /// Stop once `|B int_0^t V_K u|` bounds the remaining terms below this.
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for AhatParams {
    fn default() -> Self {
        AhatParams { quadrature: Quadrature::default(), tol: 1e-9, max_terms: 2000 }
    }
}

/// Dyson-Phillips evaluation of `ahat(int_0^t V(s) u ds)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhatResult {
    pub bracket: Bracket,
    pub terms: usize,
    /// `|B int_0^t V_n u|` for each computed n; nonincreasing, with limit
    /// zero exactly when the trajectory is mildly honest.
    pub b_integral_norms: Vec<f64>,
    pub quadrature_error: f64,
}

/// `sum_n a(int_0^t V_n(s) u ds)`. The remainder after `K` terms is at most
/// `|B int V_K u|`, and the whole sum is at most
/// `|u| - sum_n |V_n(t) u|` since partial sums are dominated by `V(t) u`.
pub fn ahat_dp(m: &ModelSpec, t: f64, u: &PosSeq, params: &AhatParams) -> Result<Bracket> {
    Ok(ahat_expansion(m, t, u, params)?.bracket)
}

pub fn ahat_expansion(m: &ModelSpec, t: f64, u: &PosSeq, params: &AhatParams) -> Result<AhatResult> {
    check_time(t)?;
    check_finite_support(u, "ahat_dp")?;
    if m.conservative || t == 0.0 || !u.has_entries() {
        return Ok(AhatResult { bracket: Bracket::point(0.0), terms: 0, b_integral_norms: vec![], quadrature_error: 0.0 });
    }
    let b_norm = |v: &[f64]| neumaier_sum(v.iter().enumerate().map(|(k, &x)| m.outflow(k) * x));
    let tol = params.tol;
    let e = DpExpansion::compute(
        m,
        u,
        t,
        0.0,
        &params.quadrature,
        &mut |s| s.terms.last().is_some_and(|last| b_norm(&last.integral) <= tol),
        params.max_terms,
    )?;
    let mut sum = Vec::with_capacity(e.terms.len());
    let mut err = 0.0;
    let mut b_integral_norms = Vec::with_capacity(e.terms.len());
    for (term, ierr) in e.terms.iter().zip(&e.integral_errors) {
        sum.push(neumaier_sum(term.integral.iter().enumerate().map(|(k, &x)| m.deficit(k) * x)));
        let sup = (0..term.integral.len()).map(|k| m.deficit(k)).fold(0.0, f64::max);
        err += sup * ierr;
        b_integral_norms.push(b_norm(&term.integral));
    }
    let s = neumaier_sum(sum);
    let mass: f64 = neumaier_sum(e.terms.iter().map(|t| neumaier_sum(t.end.iter().copied())));
    let mass_err: f64 = e.end_errors.iter().sum();
    let remainder = *b_integral_norms.last().unwrap_or(&0.0);
    // summation rounding, relevant when the cap is active
    let err = err + 64.0 * f64::EPSILON * (u.entry_sum() + s);
    let cap = u.entry_sum() - mass + mass_err;
    let hi = (s + remainder).min(cap) + err;
    Ok(AhatResult {
        bracket: Bracket { lo: (s - err).max(0.0), hi: hi.max(0.0) },
        terms: e.terms.len(),
        b_integral_norms,
        quadrature_error: err + mass_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DeltaParams {
    pub truncation: TruncationParams,
    pub ahat: AhatParams,
    pub series: SeriesOptions,
}

/// `Delta_u(t) = |V(t) u| - |u| + abar(int_0^t V(s) u ds)` by both routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassLoss {
    pub t: f64,
    /// `-(a_0 - ahat)`, the Dyson-Phillips route.
    pub delta: Bracket,
    /// `|V(t) u| - |u| + abar`, with `abar` from the resolvent series.
    pub delta_resolvent: Bracket,
    pub mass: Bracket,
    pub a0: Bracket,
    pub abar: Bracket,
    pub ahat: Bracket,
}

impl MassLoss {
    /// Largest distance between corresponding edges of the two routes.
    pub fn discrepancy(&self) -> f64 {
        (self.delta.lo - self.delta_resolvent.lo).abs().max((self.delta.hi - self.delta_resolvent.hi).abs())
    }
}

pub fn mass_loss_delta(m: &ModelSpec, t: f64, u: &PosSeq, lambda: f64, params: &DeltaParams) -> Result<MassLoss> {
    check_lambda(lambda)?;
    let point = trajectory_point(m, t, u, &params.truncation)?;
    let norm_u = u.entry_sum();
    let mass = point.state.mass;
    let a0 = a0_from_mass(norm_u, mass);

    // int_0^t V u = (lambda - G)^{-1} (lambda w + u - V(t) u)
    let abar = if t == 0.0 || m.conservative {
        Bracket::point(0.0)
    } else {
        let w = &point.integral.value;
        let plus = PosSeq::axpy_unchecked(lambda, w, u);
        let minus = &point.state.value;
        let a_plus = abar_series(m, lambda, &plus, params.series)?.0;
        let a_minus = abar_series(m, lambda, minus, params.series)?.0;
        let b = a_plus.sub(&a_minus);
        Bracket { lo: b.lo.max(0.0), hi: b.hi.max(0.0) }
    };
    let delta_resolvent = Bracket { lo: mass.lo - norm_u + abar.lo, hi: mass.hi - norm_u + abar.hi };
    let ahat = ahat_dp(m, t, u, &params.ahat)?;
    let delta = ahat.sub(&a0);
    Ok(MassLoss { t, delta, delta_resolvent, mass, a0, abar, ahat })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Honest,
    Dishonest,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Resolvent,
    DysonPhillips,
    Dual,
    Subsolution,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub xi: Bracket,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSample {
    pub t: f64,
    pub delta: Bracket,
    pub delta_resolvent: Bracket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Evidence {
    /// `(n, |J^n u|)` samples.
    pub norms: Vec<(usize, f64)>,
    pub iterations: usize,
    pub lower_certified: bool,
    pub extrapolated: Option<f64>,
    pub delta_samples: Vec<DeltaSample>,
    /// `|B int_0^t V_n u|` for n = 0, 1, ..., at `witness_t`.
    pub mild_witness: Vec<f64>,
    pub witness_t: Option<f64>,
    pub lambda_sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestyReport {
    pub model: String,
    pub initial: PosSeq,
    pub verdict: Verdict,
    pub xi: Bracket,
    pub tol: f64,
    pub lambda_used: f64,
    pub route: Route,
    pub evidence: Evidence,
}

impl HonestyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<HonestyReport> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// The exit-code contract of the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Honest => 0,
            Verdict::Dishonest => 10,
            Verdict::Undetermined => 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictPolicy {
    pub xi: XiPolicy,
    /// Try `J u <= u` first; when it holds the verdict needs no iteration.
    pub use_subsolution: bool,
    /// Repeat the verdict at these `lambda` values; the honest cone does not
    /// depend on `lambda`.
    pub sweep: Vec<f64>,
    /// Record `Delta_u(t)` by both routes at these times.
    pub delta_times: Vec<f64>,
    pub delta: DeltaParams,
    /// Number of Dyson-Phillips terms for the mild-honesty witness at
    /// `witness_t`.
    pub witness_t: Option<f64>,
    pub witness_terms: usize,
}

impl Default for VerdictPolicy {
    fn default() -> Self {
        VerdictPolicy {
            xi: XiPolicy::default(),
            use_subsolution: true,
            sweep: Vec::new(),
            delta_times: Vec::new(),
            delta: DeltaParams::default(),
            witness_t: None,
            witness_terms: 32,
        }
    }
}

fn classify(b: Bracket, tol: f64) -> Verdict {
    if b.hi <= tol {
        Verdict::Honest
    } else if b.lo > tol {
        Verdict::Dishonest
    } else {
        Verdict::Undetermined
    }
}

pub fn honesty_verdict(m: &ModelSpec, u: &PosSeq, lambda: f64, policy: &VerdictPolicy) -> Result<HonestyReport> {
    check_lambda(lambda)?;
    check_finite_support(u, "honesty_verdict")?;
    if !u.has_entries() {
        return invalid("honesty verdict needs a nonzero initial vector");
    }
    let tol = policy.xi.tol;
    let mut evidence = Evidence::default();
    let (xi_bracket, route) = if policy.use_subsolution && subsolution_check(m, lambda, u)?.holds.is_true() {
        (Bracket::point(0.0), Route::Subsolution)
    } else {
        let r = xi(m, lambda, u, &policy.xi)?;
        evidence.norms = r.norms;
        evidence.iterations = r.iterations;
        evidence.lower_certified = r.lower_certified;
        evidence.extrapolated = r.extrapolated;
        (r.bracket, Route::Resolvent)
    };
    let verdict = classify(xi_bracket, tol);

    for &t in &policy.delta_times {
        let d = mass_loss_delta(m, t, u, lambda, &policy.delta)?;
        evidence.delta_samples.push(DeltaSample { t, delta: d.delta, delta_resolvent: d.delta_resolvent });
    }
    if let Some(t) = policy.witness_t {
        check_time(t)?;
        let n = policy.witness_terms;
        let e = DpExpansion::compute(m, u, t, 0.0, &policy.delta.ahat.quadrature, &mut |s| s.len() > n, n)?;
        evidence.mild_witness = e
            .terms
            .iter()
            .map(|term| neumaier_sum(term.integral.iter().enumerate().map(|(k, &x)| m.outflow(k) * x)))
            .collect();
        evidence.witness_t = Some(t);
    }
    for &l in &policy.sweep {
        let r = xi(m, l, u, &policy.xi)?;
        evidence.lambda_sweep.push(SweepPoint { lambda: l, xi: r.bracket, verdict: classify(r.bracket, tol) });
    }
    let route = if policy.delta_times.is_empty() && policy.witness_t.is_none() { route } else { Route::Both };
    Ok(HonestyReport {
        model: m.name.clone(),
        initial: u.clone(),
        verdict,
        xi: xi_bracket,
        tol,
        lambda_used: lambda,
        route,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionResult {
    /// `J(lambda) u <= u`.
    pub holds: Tri,
    pub implies_honest: bool,
    /// `B u <= (lambda - A) u`, which makes `(lambda - A) u` honest.
    pub generator_form: Tri,
    pub generator_image: Option<PosSeq>,
}

pub fn subsolution_check(m: &ModelSpec, lambda: f64, u: &PosSeq) -> Result<SubsolutionResult> {
    check_lambda(lambda)?;
    check_finite_support(u, "subsolution_check")?;
    let holds = m.apply_j(lambda, u)?.leq(u);
    let image = PosSeq::from_entries(u.iter().map(|(k, x)| (k, (lambda - m.rate(k)) * x)).filter(|&(_, v)| v != 0.0));
    let (generator_form, generator_image) = match image {
        // (lambda - A) u must be positive for the statement to apply
        Ok(v) => {
            let g = m.apply_b(u)?.leq(&v);
            let img = if g.is_true() { Some(v) } else { None };
            (g, img)
        }
        Err(_) => (Tri::False, None),
    };
    Ok(SubsolutionResult { holds, implies_honest: holds.is_true(), generator_form, generator_image })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HereditaryReport {
    pub samples: usize,
    pub honest: usize,
    pub dishonest: usize,
    pub undetermined: usize,
    /// Samples whose `Delta` increased between consecutive times by more
    /// than the bracket widths allow.
    pub monotone_violations: usize,
    pub all_honest: bool,
}

/// Draws `u_k = U_k v_k` with independent uniforms and checks that every
/// such `u` is honest, as the honest cone is hereditary. Sample `i` uses
/// stream `i` of a ChaCha8 generator seeded with `seed`. When `delta_times`
/// is nonempty each sample's `Delta` is also checked to be nonincreasing.
pub fn hereditary_audit(
    m: &ModelSpec,
    lambda: f64,
    v: &PosSeq,
    samples: usize,
    seed: u64,
    policy: &VerdictPolicy,
    delta_times: &[f64],
) -> Result<HereditaryReport> {
    check_finite_support(v, "hereditary_audit")?;
    if !v.has_entries() {
        return Ok(HereditaryReport {
            samples: 0,
            honest: 0,
            dishonest: 0,
            undetermined: 0,
            monotone_violations: 0,
            all_honest: true,
        });
    }
    let sub_policy = VerdictPolicy { sweep: vec![], delta_times: vec![], witness_t: None, ..policy.clone() };
    let top = honesty_verdict(m, v, lambda, &sub_policy)?;
    if top.verdict != Verdict::Honest {
        return Err(Error::Precondition(format!("hereditary audit needs an honest v, got {:?}", top.verdict)));
    }
    let outcomes: Vec<Result<(Verdict, bool)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let u = PosSeq::from_entries(v.iter().map(|(k, x)| (k, x * rng.gen::<f64>())))?;
            if !u.has_entries() {
                return Ok((Verdict::Honest, false));
            }
            let verdict = honesty_verdict(m, &u, lambda, &sub_policy)?.verdict;
            let mut violated = false;
            let mut prev: Option<Bracket> = None;
            for &t in delta_times {
                let d = mass_loss_delta(m, t, &u, lambda, &policy.delta)?.delta;
                if let Some(p) = prev {
                    if d.lo > p.hi {
                        violated = true;
                    }
                }
                prev = Some(d);
            }
            Ok((verdict, violated))
        })
        .collect();
    let mut report = HereditaryReport {
        samples,
        honest: 0,
        dishonest: 0,
        undetermined: 0,
        monotone_violations: 0,
        all_honest: false,
    };
    for o in outcomes {
        let (verdict, violated) = o?;
        match verdict {
            Verdict::Honest => report.honest += 1,
            Verdict::Dishonest => report.dishonest += 1,
            Verdict::Undetermined => report.undetermined += 1,
        }
        report.monotone_violations += violated as usize;
    }
    report.all_honest = report.honest == samples;
    Ok(report)
}
