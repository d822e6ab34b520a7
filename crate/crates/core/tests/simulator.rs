mod common;

use honesty_lab::jump_simulator::{explosion_cdf, simulate, simulate_with, to_csv, SimParams, CSV_HEADER};
use honesty_lab::resolvent_engine::semigroup_v;
use honesty_lab::{zoo, PosSeq, TruncationParams};

#[test]
fn scalar_exponential_survival() {
    let r = simulate(&zoo::pure_decay(), &PosSeq::basis(0), 1.0, 100_000, 3).unwrap();
    let exact = (-1.0f64).exp();
    assert!((r.survival.value - exact).abs() <= r.survival.ci, "{} vs {exact}", r.survival.value);
    assert_eq!(r.counts[1], 0);
    assert_eq!(r.counts.iter().sum::<usize>(), r.n_paths);
}

#[test]
fn yule_neither_explodes_nor_dies() {
    let r = simulate(&zoo::yule(), &PosSeq::basis(0), 1.0, 20_000, 11).unwrap();
    assert_eq!(r.counts, [20_000, 0, 0]);
    assert_eq!(r.aborted, 0);
}

#[test]
fn killed_fraction_matches_the_semigroup() {
    let m = zoo::birth_death_kill();
    let u = PosSeq::from_entries([(0, 0.25), (3, 0.75)]).unwrap();
    let r = simulate(&m, &u, 1.0, 50_000, 19).unwrap();
    let mass = semigroup_v(&m, 1.0, &u, &TruncationParams::default()).unwrap().mass;
    assert!((r.survival.value - mass.mid()).abs() <= 3.0 * r.survival.sigma() + mass.width());
    assert_eq!(r.counts[1], 0);
    assert_eq!(r.survival.value + r.killed.value, 1.0);
}

#[test]
fn explosion_cdf_tracks_the_mass_loss() {
    let m = zoo::quadratic_birth();
    let grid = [0.0, 0.5, 1.0, 2.0];
    let runs = explosion_cdf(&m, 0, &grid, 20_000, 5).unwrap();
    assert_eq!(runs[0].counts, [20_000, 0, 0]);
    for w in runs.windows(2) {
        // every grid time reuses the same streams, so paths are coupled
        assert!(w[1].counts[1] >= w[0].counts[1]);
    }
    for r in &runs[1..] {
        let exact = 1.0 - common::quadratic_survival(r.t);
        assert!((r.exploded.value - exact).abs() <= 3.0 * r.exploded.sigma(), "t={}: {} vs {exact}", r.t, r.exploded.value);
        assert_eq!(r.counts[2], 0);
    }
}

#[test]
fn honest_model_cdf_is_zero() {
    let runs = explosion_cdf(&zoo::yule(), 2, &[0.5, 1.0], 5_000, 9).unwrap();
    assert!(runs.iter().all(|r| r.exploded.value == 0.0));
}

#[test]
fn results_are_deterministic() {
    let u = PosSeq::from_entries([(0, 0.5), (1, 0.5)]).unwrap();
    let a = simulate(&zoo::quadratic_birth(), &u, 0.7, 4_000, 42).unwrap();
    let b = simulate(&zoo::quadratic_birth(), &u, 0.7, 4_000, 42).unwrap();
    assert_eq!(a, b);
    let c = simulate(&zoo::quadratic_birth(), &u, 0.7, 4_000, 43).unwrap();
    assert_ne!(a.counts, c.counts);
}

#[test]
fn csv_layout() {
    let runs = explosion_cdf(&zoo::pure_decay(), 0, &[0.0, 1.0], 100, 1).unwrap();
    let text = to_csv(&runs);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,1,0,0,0,0,0"));
    assert!(lines.iter().all(|l| l.split(',').count() == 7));
}

#[test]
fn invalid_runs_are_rejected() {
    let u = PosSeq::basis(0);
    assert!(simulate(&zoo::yule(), &u, 1.0, 10, 0).is_err());
    assert!(simulate(&zoo::yule(), &u, 1.0, 0, 1).is_err());
    assert!(simulate(&zoo::yule(), &PosSeq::from_entries([(0, 0.5)]).unwrap(), 1.0, 10, 1).is_err());
    assert!(simulate(&zoo::yule(), &u, -1.0, 10, 1).is_err());
    let p = SimParams { check_every: 0, ..SimParams::default() };
    assert!(simulate_with(&zoo::yule(), &u, 1.0, 10, 1, &p).is_err());
}

#[test]
fn jump_cap_aborts_count_as_alive() {
    let p = SimParams { jump_cap: 3, ..SimParams::default() };
    let r = simulate_with(&zoo::yule(), &PosSeq::basis(0), 5.0, 1_000, 2, &p).unwrap();
    assert!(r.aborted > 0);
    assert_eq!(r.counts[0], r.n_paths);
}
