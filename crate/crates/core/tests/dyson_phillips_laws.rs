use honesty_lab::dyson_phillips::{dp_b_integral, dp_partial_sum, dp_term, dp_uniform_tail, DpExpansion, Quadrature};
use honesty_lab::resolvent_engine::semigroup_v;
use honesty_lab::{zoo, PosSeq, TruncationParams};

#[test]
fn partial_sums_increase_towards_the_semigroup() {
    let m = zoo::yule();
    let q = Quadrature::default();
    let u = PosSeq::basis(0);
    let v = semigroup_v(&m, 1.0, &u, &TruncationParams::default()).unwrap();
    let mut prev = 0.0;
    for k in [0, 1, 2, 4, 8, 16, 32] {
        let s = dp_partial_sum(&m, k, 1.0, &u, &q).unwrap();
        let mass = s.value.entry_sum();
        assert!(mass >= prev - s.error);
        assert!(mass <= v.mass.hi + s.error);
        // at most k jumps by time 1: the population is geometric with parameter 1/e
        let exact = 1.0 - (1.0 - (-1.0f64).exp()).powi(k as i32 + 1);
        assert!((mass - exact).abs() <= s.error + 1e-12, "k={k}: {mass} vs {exact}");
        prev = mass;
    }
}

#[test]
fn explosive_partial_sum_stays_below_semigroup() {
    let m = zoo::quadratic_birth();
    let u = PosSeq::basis(0);
    let s = dp_partial_sum(&m, 10, 1.0, &u, &Quadrature::default()).unwrap();
    let v = semigroup_v(&m, 1.0, &u, &TruncationParams::default()).unwrap();
    assert!(s.value.entry_sum() + s.error < v.mass.hi);
}

#[test]
fn b_integrals_decrease_to_the_mass_defect() {
    // |B int V_n u| is nonincreasing and its limit is the mass lost beyond
    // what ahat accounts for, which for a conservative model is all of it
    let m = zoo::quadratic_birth();
    let u = PosSeq::basis(0);
    let q = Quadrature::default();
    let e = DpExpansion::compute(&m, &u, 1.0, 0.0, &q, &mut |s| s.len() > 24, 24).unwrap();
    let norms: Vec<f64> = e
        .terms
        .iter()
        .map(|t| t.integral.iter().enumerate().map(|(k, x)| m.outflow(k) * x).sum())
        .collect();
    let v = semigroup_v(&m, 1.0, &u, &TruncationParams::default()).unwrap();
    let defect_lo = 1.0 - v.mass.hi;
    for w in norms.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
    assert!(norms.iter().all(|&x| x >= defect_lo - 1e-8), "{norms:?} vs {defect_lo}");
    // single-term check against the public entry point
    let b3 = dp_b_integral(&m, 3, 1.0, &u, &q).unwrap();
    assert!((b3.value.entry_sum() - norms[3]).abs() <= 1e-8);
}

#[test]
fn b_integral_of_pure_decay_vanishes() {
    let b = dp_b_integral(&zoo::pure_decay(), 0, 2.0, &PosSeq::basis(1), &Quadrature::default()).unwrap();
    assert!(b.value.is_zero());
}

#[test]
fn uniform_tail_bound_for_quadratic_birth() {
    let m = zoo::quadratic_birth();
    let u = PosSeq::basis(0);
    let tail = dp_uniform_tail(&m, 6, 1.0, 5.0, &u, &Quadrature::default()).unwrap();
    // e^{-5} + |B int_5^inf e^{-s} U(s) e_0 ds| = e^{-5} + e^{-10}/2
    let closed = (-5.0f64).exp() + (-10.0f64).exp() / 2.0;
    assert!((tail.bound - closed).abs() < 1e-15);
    assert!(tail.all_below, "{tail:?}");
}

#[test]
fn iterates_are_positive_and_mass_bounded() {
    let q = Quadrature::default();
    let u = PosSeq::from_entries([(0, 0.5), (2, 0.5)]).unwrap();
    for m in [zoo::birth_death_kill(), zoo::yule(), zoo::two_state()] {
        let mut total = 0.0;
        for n in 0..6 {
            let v = dp_term(&m, n, 0.8, &u, &q).unwrap();
            assert!(v.value.iter().all(|(_, x)| x >= 0.0));
            total += v.value.entry_sum();
        }
        assert!(total <= 1.0 + 1e-9, "{}: {total}", m.name);
    }
}

#[test]
fn bad_arguments_are_rejected() {
    let q = Quadrature { tol: -1.0, ..Quadrature::default() };
    assert!(dp_term(&zoo::yule(), 1, 1.0, &PosSeq::basis(0), &q).is_err());
    assert!(dp_term(&zoo::yule(), 1, -1.0, &PosSeq::basis(0), &Quadrature::default()).is_err());
    let fuzzy = PosSeq::basis(0).with_tail(0.1).unwrap();
    assert!(dp_term(&zoo::yule(), 1, 1.0, &fuzzy, &Quadrature::default()).is_err());
}
