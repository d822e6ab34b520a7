//! Dyson-Phillips iterates
//! `V_0(t) = U(t)`, `V_{n+1}(t) u = int_0^t U(t - s) B V_n(s) u ds`.
//!
//! Each iterate is sampled at Gauss-Legendre nodes of a uniform panel grid.
//! On a panel the forcing `f = B V_n(.) u` is replaced by its interpolating
//! polynomial and the convolution with the diagonal `U` is integrated
//! exactly (an exponential integrator), so stiff states cost no extra
//! resolution beyond what `f` itself needs. The error is estimated by
//! comparing the grid with its dyadic refinement.
//!
//! Iterates started from a finitely supported `u` stay finitely supported
//! (each application of `B` moves mass by at most the kernel stride), so no
//! state-space truncation is involved.

use serde::{Deserialize, Serialize};

use crate::error::{check_lambda, check_time, invalid, Result};
use crate::model_zoo::ModelSpec;
use crate::resolvent_engine::JPowers;
use crate::state_space::{check_finite_support, neumaier_sum, PosSeq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Target for the refinement error estimate, in l1 per quantity.
    pub tol: f64,
    /// Gauss-Legendre nodes per panel.
    pub order: usize,
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { tol: 1e-9, order: 8, initial_panels: 8, max_panels: 4096 }
    }
}

impl Quadrature {
    fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return invalid(format!("quadrature tolerance must be positive, got {}", self.tol));
        }
        if !(2..=16).contains(&self.order) {
            return invalid(format!("quadrature order must be in 2..=16, got {}", self.order));
        }
        if self.initial_panels == 0 || self.max_panels < self.initial_panels {
            return invalid("need 0 < initial_panels <= max_panels");
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    let mut idx: Vec<usize> = (0..order).collect();
    idx.sort_by(|&a, &b| nodes[a].partial_cmp(&nodes[b]).unwrap());
    (idx.iter().map(|&i| nodes[i]).collect(), idx.iter().map(|&i| weights[i]).collect())
}

/// `int_0^s exp(-z y) y^r dy` for `z >= 0`, without cancellation.
pub(crate) fn exp_moment(z: f64, s: f64, r: usize) -> f64 {
    let x = z * s;
    let rf = r as f64;
    if x < rf + 10.0 {
        // s^{r+1} e^{-x} sum_i x^i r! / (i + r + 1)!, all terms positive
        let mut term = 1.0 / (rf + 1.0);
        let mut sum = term;
        let mut i = 0.0;
        loop {
            i += 1.0;
            term *= x / (rf + 1.0 + i);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        s.powi(r as i32 + 1) * (-x).exp() * sum
    } else {
        // r!/z^{r+1} * P(Poisson(x) > r), the subtracted part is small here
        let mut head = 1.0;
        let mut term = 1.0;
        for j in 1..=r {
            term *= x / j as f64;
            head += term;
        }
        let mut fact = 1.0;
        for j in 2..=r {
            fact *= j as f64;
        }
        fact / z.powi(r as i32 + 1) * (1.0 - (-x).exp() * head)
    }
}

/// Coefficients `c_r` with `l_m(xi - y) = sum_r c_r y^r`, where `l_m` is the
/// Lagrange basis polynomial of node `m`.
fn lagrange_taylor(nodes: &[f64], m: usize, xi: f64) -> Vec<f64> {
    let mut poly = vec![1.0];
    for (q, &xq) in nodes.iter().enumerate() {
        if q == m {
            continue;
        }
        let alpha = xi - xq;
        let d = nodes[m] - xq;
        // multiply by (alpha - y) / d
        let mut next = vec![0.0; poly.len() + 1];
        for (r, &c) in poly.iter().enumerate() {
            next[r] += alpha * c / d;
            next[r + 1] -= c / d;
        }
        poly = next;
    }
    poly
}

/// Exponential-integrator weights for one value of `z = rate * h`.
#[derive(Clone)]
struct PanelWeights {
    /// `exp(-z x_i)`
    decay_nodes: Vec<f64>,
    decay_end: f64,
    /// `int_0^{x_i} exp(-z (x_i - eta)) l_m(eta) d eta`, row-major `[i][m]`
    nodes: Vec<f64>,
    /// same with `x_i = 1`
    end: Vec<f64>,
    /// `int_0^1 exp(-z xi) d xi`
    integral_decay: f64,
    /// `int_0^1 int_0^xi exp(-z (xi - eta)) l_m(eta) d eta d xi`
    integral: Vec<f64>,
}

impl PanelWeights {
    fn new(z: f64, x: &[f64]) -> PanelWeights {
        let p = x.len();
        let moments = |s: f64| -> Vec<f64> { (0..=p).map(|r| exp_moment(z, s, r)).collect() };
        let mut nodes = vec![0.0; p * p];
        for i in 0..p {
            let e = moments(x[i]);
            for m in 0..p {
                let c = lagrange_taylor(x, m, x[i]);
                nodes[i * p + m] = c.iter().zip(&e).map(|(a, b)| a * b).sum();
            }
        }
        let e1 = moments(1.0);
        let mut end = vec![0.0; p];
        let mut integral = vec![0.0; p];
        for m in 0..p {
            let c = lagrange_taylor(x, m, 1.0);
            end[m] = c.iter().zip(&e1).map(|(a, b)| a * b).sum();
            // int_0^1 y^r (1 - e^{-zy}) / z dy = (E_0 - E_{r+1}) / (r + 1)
            integral[m] = c
                .iter()
                .enumerate()
                .map(|(r, a)| a * (e1[0] - e1[r + 1]) / (r as f64 + 1.0))
                .sum();
        }
        PanelWeights {
            decay_nodes: x.iter().map(|&xi| (-z * xi).exp()).collect(),
            decay_end: (-z).exp(),
            nodes,
            end,
            integral_decay: e1[0],
            integral,
        }
    }
}

/// Per-iterate data kept after the grid has moved on.
#[derive(Debug, Clone, PartialEq)]
pub struct TermSummary {
    /// `V_n(t) u` on states `0..len`.
    pub end: Vec<f64>,
    /// `int_0^t V_n(s) u ds` on states `0..len`.
    pub integral: Vec<f64>,
}

/// Dyson-Phillips iterates for one initial vector on one grid. With a
/// nonzero `shift` the diagonal rates are increased by it, which turns the
/// iterates into `exp(-shift s) V_n(s) u`.
pub struct DpState<'m> {
    model: &'m ModelSpec,
    shift: f64,
    horizon: f64,
    panels: usize,
    h: f64,
    x: Vec<f64>,
    weights: Vec<Option<PanelWeights>>,
    /// Node values of the latest iterate, `[panel][node][state]`.
    current: Vec<f64>,
    dim: usize,
    pub terms: Vec<TermSummary>,
}

impl<'m> DpState<'m> {
    pub fn new(model: &'m ModelSpec, u: &PosSeq, horizon: f64, shift: f64, panels: usize, order: usize) -> DpState<'m> {
        let (x, _) = gauss_legendre(order);
        let h = horizon / panels as f64;
        let dim = u.max_index().map_or(0, |k| k + 1);
        let mut state = DpState {
            model,
            shift,
            horizon,
            panels,
            h,
            x,
            weights: Vec::new(),
            current: Vec::new(),
            dim,
            terms: Vec::new(),
        };
        state.init_first(u);
        state
    }

    fn rate(&self, k: usize) -> f64 {
        self.model.rate(k) + self.shift
    }

    fn weights(&mut self, k: usize) -> &PanelWeights {
        if self.weights.len() <= k {
            self.weights.resize(k + 1, None);
        }
        if self.weights[k].is_none() {
            let z = self.rate(k) * self.h;
            self.weights[k] = Some(PanelWeights::new(z, &self.x));
        }
        self.weights[k].as_ref().expect("just filled")
    }

    fn init_first(&mut self, u: &PosSeq) {
        let p = self.x.len();
        let dim = self.dim;
        let mut current = vec![0.0; self.panels * p * dim];
        let mut end = vec![0.0; dim];
        let mut integral = vec![0.0; dim];
        for (k, uk) in u.iter() {
            let a = self.rate(k);
            for j in 0..self.panels {
                for i in 0..p {
                    let s = (j as f64 + self.x[i]) * self.h;
                    current[(j * p + i) * dim + k] = uk * (-a * s).exp();
                }
            }
            end[k] = uk * (-a * self.horizon).exp();
            integral[k] = uk * -(-a * self.horizon).exp_m1() / a;
        }
        self.current = current;
        self.terms.push(TermSummary { end, integral });
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Computes iterates up to and including `n`.
    pub fn extend_to(&mut self, n: usize) {
        while self.terms.len() <= n {
            self.advance();
        }
    }

    fn advance(&mut self) {
        let p = self.x.len();
        let panels = self.panels;
        let dim = self.dim;
        let new_dim = if dim == 0 { 0 } else { dim + self.model.stride() };
        // forcing f = B V_n at every node
        let mut forcing = vec![0.0; panels * p * new_dim];
        let mut scratch = Vec::new();
        for slot in 0..panels * p {
            let v = &self.current[slot * dim..(slot + 1) * dim];
            let start = self.model.push_forward_window(0, v, |_| 1.0, &mut scratch);
            let dst = &mut forcing[slot * new_dim..(slot + 1) * new_dim];
            for (i, &val) in scratch.iter().enumerate() {
                let k = start + i;
                if k < new_dim {
                    dst[k] += val;
                }
            }
        }
        for k in 0..new_dim {
            self.weights(k);
        }
        let h = self.h;
        let mut next = vec![0.0; panels * p * new_dim];
        let mut end = vec![0.0; new_dim];
        let mut integral = vec![0.0; new_dim];
        for k in 0..new_dim {
            let w = self.weights[k].as_ref().expect("weights prepared");
            let mut base = 0.0;
            let mut int_parts = Vec::with_capacity(panels);
            for j in 0..panels {
                let f: Vec<f64> = (0..p).map(|m| forcing[(j * p + m) * new_dim + k]).collect();
                for i in 0..p {
                    let conv: f64 = (0..p).map(|m| w.nodes[i * p + m] * f[m]).sum();
                    next[(j * p + i) * new_dim + k] = (w.decay_nodes[i] * base + h * conv).max(0.0);
                }
                let conv_end: f64 = (0..p).map(|m| w.end[m] * f[m]).sum();
                let conv_int: f64 = (0..p).map(|m| w.integral[m] * f[m]).sum();
                int_parts.push(h * (w.integral_decay * base + h * conv_int));
                base = (w.decay_end * base + h * conv_end).max(0.0);
            }
            end[k] = base;
            integral[k] = neumaier_sum(int_parts).max(0.0);
        }
        self.current = next;
        self.dim = new_dim;
        self.terms.push(TermSummary { end, integral });
    }
}

/// Added to every refinement estimate. The panel weights are sums of
/// alternating terms and lose a few hundred ulps, which the difference of
/// two grids does not see.
const ROUNDING_FLOOR: f64 = 1e-11;

/// Value with the refinement error estimate attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpValue {
    pub value: PosSeq,
    /// l1 distance between the result and the one on the coarser grid.
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

/// All iterates `0..=n_max` at a fixed time, with refinement errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DpExpansion {
    pub terms: Vec<TermSummary>,
    pub end_errors: Vec<f64>,
    pub integral_errors: Vec<f64>,
    pub panels: usize,
    pub converged: bool,
}

impl DpExpansion {
    /// Runs the grid and its refinements until every requested quantity
    /// changes by at most `q.tol`. `terms` decides how many iterates to
    /// compute from the coarsest run.
    pub fn compute(
        m: &ModelSpec,
        u: &PosSeq,
        t: f64,
        shift: f64,
        q: &Quadrature,
        terms: &mut dyn FnMut(&DpState) -> bool,
        n_cap: usize,
    ) -> Result<DpExpansion> {
        check_time(t)?;
        q.validate()?;
        check_finite_support(u, "Dyson-Phillips iterates")?;
        let mut panels = q.initial_panels;
        let mut coarse = DpState::new(m, u, t, shift, panels, q.order);
        while coarse.len() <= n_cap && !terms(&coarse) {
            coarse.advance();
        }
        let n = coarse.len() - 1;
        if t == 0.0 {
            return Ok(DpExpansion {
                terms: coarse.terms,
                end_errors: vec![0.0; n + 1],
                integral_errors: vec![0.0; n + 1],
                panels,
                converged: true,
            });
        }
        loop {
            panels *= 2;
            let mut fine = DpState::new(m, u, t, shift, panels, q.order);
            fine.extend_to(n);
            let floor = ROUNDING_FLOOR * u.entry_sum();
            let end_errors: Vec<f64> =
                (0..=n).map(|i| l1_dist(&fine.terms[i].end, &coarse.terms[i].end) + floor).collect();
            let integral_errors: Vec<f64> = (0..=n)
                .map(|i| l1_dist(&fine.terms[i].integral, &coarse.terms[i].integral) + floor * t.max(1.0))
                .collect();
            let worst = end_errors
                .iter()
                .map(|e| e - floor)
                .chain(integral_errors.iter().map(|e| e - floor * t.max(1.0)))
                .fold(0.0f64, f64::max);
            if worst <= q.tol || 2 * panels > q.max_panels {
                return Ok(DpExpansion {
                    terms: fine.terms,
                    end_errors,
                    integral_errors,
                    panels,
                    converged: worst <= q.tol,
                });
            }
            coarse = fine;
        }
    }

    fn up_to(m: &ModelSpec, u: &PosSeq, t: f64, shift: f64, n: usize, q: &Quadrature) -> Result<DpExpansion> {
        DpExpansion::compute(m, u, t, shift, q, &mut |s| s.len() > n, n)
    }
}

fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    neumaier_sum((0..n).map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()))
}

fn to_pos(v: &[f64]) -> PosSeq {
    PosSeq::from_window(0, v.iter().map(|&x| x.max(0.0)).collect(), 0.0)
}

fn sum_vectors<'a>(vs: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in vs {
        if v.len() > out.len() {
            out.resize(v.len(), 0.0);
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    out
}

/// `V_n(t) u`.
pub fn dp_term(m: &ModelSpec, n: usize, t: f64, u: &PosSeq, q: &Quadrature) -> Result<DpValue> {
    if n == 0 {
        check_time(t)?;
        return Ok(DpValue { value: m.apply_u(t, u)?, error: 0.0, panels: 0, converged: true });
    }
    let e = DpExpansion::up_to(m, u, t, 0.0, n, q)?;
    Ok(DpValue {
        value: to_pos(&e.terms[n].end),
        error: e.end_errors[n],
        panels: e.panels,
        converged: e.converged,
    })
}

/// `sum_{k <= K} V_k(t) u`.
pub fn dp_partial_sum(m: &ModelSpec, k_max: usize, t: f64, u: &PosSeq, q: &Quadrature) -> Result<DpValue> {
    let e = DpExpansion::up_to(m, u, t, 0.0, k_max, q)?;
    Ok(DpValue {
        value: to_pos(&sum_vectors(e.terms.iter().map(|s| &s.end))),
        error: e.end_errors.iter().sum(),
        panels: e.panels,
        converged: e.converged,
    })
}

/// `B int_0^t V_n(s) u ds`.
pub fn dp_b_integral(m: &ModelSpec, n: usize, t: f64, u: &PosSeq, q: &Quadrature) -> Result<DpValue> {
    let e = DpExpansion::up_to(m, u, t, 0.0, n, q)?;
    let integral = to_pos(&e.terms[n].integral);
    let out_max = integral
        .iter()
        .map(|(k, _)| m.outflow(k))
        .fold(0.0, f64::max);
    Ok(DpValue {
        value: m.apply_b(&integral)?,
        error: out_max * e.integral_errors[n],
        panels: e.panels,
        converged: e.converged,
    })
}

/// `int_0^inf exp(-lambda s) V_n(s) u ds`, truncated where the remaining
/// mass `exp(-lambda T) |u| / lambda` drops below the tolerance. The
/// reported error includes that tail.
pub fn dp_laplace(m: &ModelSpec, n: usize, lambda: f64, u: &PosSeq, q: &Quadrature) -> Result<DpValue> {
    check_lambda(lambda)?;
    let norm = u.entry_sum();
    if norm == 0.0 {
        return Ok(DpValue { value: PosSeq::zero(), error: 0.0, panels: 0, converged: true });
    }
    let horizon = ((norm / (lambda * q.tol)).ln() / lambda).max(1.0 / lambda);
    // keep the panel width of the default grid on [0, 1]
    let scale = (horizon.ceil() as usize).max(1).next_power_of_two();
    let q_long = Quadrature {
        initial_panels: q.initial_panels * scale,
        max_panels: q.max_panels * scale,
        ..*q
    };
    let e = DpExpansion::up_to(m, u, horizon, lambda, n, &q_long)?;
    let tail = (-lambda * horizon).exp() * norm / lambda;
    Ok(DpValue {
        value: to_pos(&e.terms[n].integral),
        error: e.integral_errors[n] + tail,
        panels: e.panels,
        converged: e.converged,
    })
}

/// Norm of `V_n(t+s) u - sum_{k <= n} V_k(t) V_{n-k}(s) u`.
pub fn dp_convolution_residual(m: &ModelSpec, n: usize, t: f64, s: f64, u: &PosSeq, q: &Quadrature) -> Result<f64> {
    if n > 4 {
        return invalid(format!("convolution residual is limited to n <= 4, got {n}"));
    }
    check_time(t)?;
    check_time(s)?;
    let whole = dp_term(m, n, t + s, u, q)?.value;
    let inner = DpExpansion::up_to(m, u, s, 0.0, n, q)?;
    let mut rhs: Vec<f64> = Vec::new();
    for k in 0..=n {
        let start = to_pos(&inner.terms[n - k].end);
        if !start.has_entries() {
            continue;
        }
        let v = if k == 0 {
            m.apply_u(t, &start)?.to_dense(start.max_index().unwrap_or(0) + 1)
        } else {
            let outer = DpExpansion::up_to(m, &start, t, 0.0, k, q)?;
            outer.terms[k].end.clone()
        };
        rhs = sum_vectors([rhs, v].iter());
    }
    let lhs = whole.to_dense(whole.max_index().map_or(0, |k| k + 1));
    Ok(l1_dist(&lhs, &rhs))
}

/// Uniform bound on `|B int_t^inf exp(-lambda s) V_n(s) u ds|` over `n`,
/// with the computed values for `n <= n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformTail {
    pub bound: f64,
    pub values: Vec<f64>,
    /// Refinement error of each value.
    pub errors: Vec<f64>,
    pub all_below: bool,
}

pub fn dp_uniform_tail(m: &ModelSpec, n_max: usize, lambda: f64, t: f64, u: &PosSeq, q: &Quadrature) -> Result<UniformTail> {
    check_lambda(lambda)?;
    check_time(t)?;
    check_finite_support(u, "dp_uniform_tail")?;
    // e^{-lambda t}|u| + |B int_t^inf e^{-lambda s} U(s) u ds|, the second
    // term in closed form
    let closed: f64 = neumaier_sum(u.iter().map(|(k, uk)| {
        let r = lambda + m.rate(k);
        m.outflow(k) * uk * (-r * t).exp() / r
    }));
    let bound = (-lambda * t).exp() * u.entry_sum() + closed;

    // int_t^inf = int_0^inf - int_0^t; the first is (lambda - A)^{-1} J^n u
    let head = DpExpansion::up_to(m, u, t, lambda, n_max, q)?;
    let mut powers = JPowers::new(m, lambda, u);
    let mut values = Vec::with_capacity(n_max + 1);
    let mut errors = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let full = powers.resolvent_term();
        let part = &head.terms[n].integral;
        let len = part.len().max(full.max_index().map_or(0, |k| k + 1));
        let full_dense = full.to_dense(len);
        let diff: Vec<f64> = (0..len)
            .map(|k| (full_dense[k] - part.get(k).copied().unwrap_or(0.0)).max(0.0))
            .collect();
        let tail_part = PosSeq::from_window(0, diff, 0.0);
        values.push(m.apply_b(&tail_part)?.entry_sum());
        let out_max = (0..len).map(|k| m.outflow(k)).fold(0.0, f64::max);
        errors.push(out_max * head.integral_errors[n]);
        powers.advance();
    }
    let all_below = values.iter().zip(&errors).all(|(v, e)| v - e <= bound);
    Ok(UniformTail { bound, values, errors, all_below })
}
