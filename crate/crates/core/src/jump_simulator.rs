//! Monte Carlo simulation of the jump process behind `u' = (A + B) u`.
//!
//! A path holds at state `k` for an `Exp(a_k)` time, then jumps to `j` with
//! probability `b_jk / a_k` or dies with probability `deficit_k / a_k`.
//! Path `i` draws from stream `i` of a ChaCha8 generator seeded with the
//! run seed, so results do not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_time, invalid, Result};
use crate::model_zoo::ModelSpec;
use crate::resolvent_engine::escape_survival;
use crate::state_space::{check_finite_support, PosSeq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// A path that makes this many jumps without a decision is aborted.
    pub jump_cap: u64,
    /// Jumps between explosion tests.
    pub check_every: u64,
    /// Explosion is declared once `sum_{j >= k} 1/a_j < margin * remaining`.
    pub margin: f64,
    /// ... and the escape-time bound leaves at most this survival chance.
    pub survival_bound: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { jump_cap: 10_000_000, check_every: 64, margin: 1e-3, survival_bound: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Alive(usize),
    Killed,
    Exploded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub status: PathStatus,
    /// Death time for killed paths; time of the explosion test for
    /// exploded ones.
    pub time_of_absorption: Option<f64>,
    pub jumps: u64,
    /// Hit the jump cap without a decision; reported as alive.
    pub aborted: bool,
}

/// Runs one path from `start` up to time `t`.
pub fn simulate_path(m: &ModelSpec, start: usize, t: f64, rng: &mut ChaCha8Rng, p: &SimParams) -> PathOutcome {
    let mut k = start;
    let mut s = 0.0;
    let mut jumps = 0u64;
    let alive = |k, jumps, aborted| PathOutcome { status: PathStatus::Alive(k), time_of_absorption: None, jumps, aborted };
    loop {
        let a = m.rate(k);
        if a == 0.0 || t == 0.0 {
            return alive(k, jumps, false);
        }
        let hold = -(1.0 - rng.gen::<f64>()).ln() / a;
        if s + hold > t {
            return alive(k, jumps, false);
        }
        s += hold;
        jumps += 1;
        let target = rng.gen::<f64>() * a;
        let mut acc = 0.0;
        let mut next = None;
        m.for_each_transition(k, |j, rate| {
            if next.is_none() {
                acc += rate;
                if target < acc {
                    next = Some(j);
                }
            }
        });
        match next {
            Some(j) => k = j,
            None => {
                return PathOutcome {
                    status: PathStatus::Killed,
                    time_of_absorption: Some(s),
                    jumps,
                    aborted: false,
                }
            }
        }
        if jumps.is_multiple_of(p.check_every) {
            let remaining = t - s;
            if let Some(tau) = m.upward_conservative_tail(k) {
                if tau < p.margin * remaining && escape_survival(remaining, tau, m.a.inf_from(k)) <= p.survival_bound {
                    return PathOutcome {
                        status: PathStatus::Exploded,
                        time_of_absorption: Some(s),
                        jumps,
                        aborted: false,
                    };
                }
            }
            if jumps >= p.jump_cap {
                return alive(k, jumps, true);
            }
        }
    }
}

/// Proportion with a 95% normal-approximation half width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci: f64,
}

impl Estimate {
    fn from_count(count: usize, n: usize) -> Estimate {
        let p = count as f64 / n as f64;
        Estimate { value: p, ci: 1.96 * (p * (1.0 - p) / n as f64).sqrt() }
    }

    /// Binomial standard error.
    pub fn sigma(&self) -> f64 {
        self.ci / 1.96
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub t: f64,
    pub n_paths: usize,
    pub survival: Estimate,
    pub exploded: Estimate,
    pub killed: Estimate,
    pub counts: [usize; 3],
    /// Paths stopped by the jump cap, included in `survival`.
    pub aborted: usize,
    pub jumps: u64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    alive: usize,
    exploded: usize,
    killed: usize,
    aborted: usize,
    jumps: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            alive: self.alive + o.alive,
            exploded: self.exploded + o.exploded,
            killed: self.killed + o.killed,
            aborted: self.aborted + o.aborted,
            jumps: self.jumps + o.jumps,
        }
    }
}

pub fn simulate(m: &ModelSpec, initial: &PosSeq, t: f64, n_paths: usize, seed: u64) -> Result<SimulationResult> {
    simulate_with(m, initial, t, n_paths, seed, &SimParams::default())
}

pub fn simulate_with(
    m: &ModelSpec,
    initial: &PosSeq,
    t: f64,
    n_paths: usize,
    seed: u64,
    p: &SimParams,
) -> Result<SimulationResult> {
    check_time(t)?;
    check_finite_support(initial, "simulate")?;
    if seed == 0 {
        return invalid("seed 0 is reserved");
    }
    if n_paths == 0 {
        return invalid("need at least one path");
    }
    if p.check_every == 0 || p.jump_cap == 0 {
        return invalid("jump_cap and check_every must be positive");
    }
    let norm = initial.entry_sum();
    if (norm - 1.0).abs() > 1e-12 {
        return invalid(format!("initial distribution must have mass 1, got {norm}"));
    }
    let states: Vec<(usize, f64)> = initial.iter().collect();
    let mut cumulative = Vec::with_capacity(states.len());
    let mut acc = 0.0;
    for &(_, x) in &states {
        acc += x;
        cumulative.push(acc / norm);
    }

    // integer counts, so the reduction order cannot change the result
    let tally = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x = rng.gen::<f64>();
            let idx = cumulative.partition_point(|&c| c <= x).min(states.len() - 1);
            let out = simulate_path(m, states[idx].0, t, &mut rng, p);
            let mut tally = Tally { jumps: out.jumps, ..Tally::default() };
            match out.status {
                PathStatus::Alive(_) => tally.alive = 1,
                PathStatus::Exploded => tally.exploded = 1,
                PathStatus::Killed => tally.killed = 1,
            }
            tally.aborted = out.aborted as usize;
            tally
        })
        .reduce(Tally::default, Tally::merge);
    Ok(SimulationResult {
        t,
        n_paths,
        survival: Estimate::from_count(tally.alive, n_paths),
        exploded: Estimate::from_count(tally.exploded, n_paths),
        killed: Estimate::from_count(tally.killed, n_paths),
        counts: [tally.alive, tally.exploded, tally.killed],
        aborted: tally.aborted,
        jumps: tally.jumps,
    })
}

/// Explosion estimates from `e_i` at each grid time, every time with the
/// same seed.
pub fn explosion_cdf(m: &ModelSpec, i: usize, t_grid: &[f64], n_paths: usize, seed: u64) -> Result<Vec<SimulationResult>> {
    let start = PosSeq::basis(i);
    t_grid.iter().map(|&t| simulate(m, &start, t, n_paths, seed)).collect()
}

pub const CSV_HEADER: &str = "t,survival,survival_ci,exploded,exploded_ci,killed,killed_ci";

pub fn to_csv(results: &[SimulationResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t, r.survival.value, r.survival.ci, r.exploded.value, r.exploded.ci, r.killed.value, r.killed.ci
        ));
    }
    out
}
