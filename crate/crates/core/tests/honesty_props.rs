mod common;

use std::f64::consts::PI;

use honesty_lab::honesty_analyzer::{
    a0_on_integral, a_frak, abar_resolvent, ahat_dp, hereditary_audit, honesty_verdict, mass_loss_delta,
    subsolution_check, xi, xi_dual, AhatParams, DeltaParams, VerdictPolicy, XiPolicy,
};
use honesty_lab::resolvent_engine::semigroup_v;
use honesty_lab::{zoo, HonestyReport, PosSeq, SignedSeq, Tri, TruncationParams, Verdict};

fn e(k: usize) -> PosSeq {
    PosSeq::basis(k)
}

/// Two-state masses from the closed form: x0 = e^{-t}, x1 = e^{-t} - e^{-2t}.
fn two_state_mass(t: f64) -> f64 {
    2.0 * (-t).exp() - (-2.0 * t).exp()
}

#[test]
fn functional_examples() {
    let two = zoo::two_state();
    assert_eq!(a_frak(&two, &SignedSeq::from_pos(e(1))).unwrap(), 2.0);
    assert_eq!(a_frak(&two, &SignedSeq::from_pos(PosSeq::zero())).unwrap(), 0.0);
    assert_eq!(a_frak(&zoo::yule(), &SignedSeq::from_pos(e(7))).unwrap(), 0.0);

    // (1 - G)^{-1} e0 = (1/2, 1/6), and only state 1 loses mass, at rate 2
    let abar = abar_resolvent(&two, 1.0, &e(0), 1e-12).unwrap();
    assert!(abar.contains_within(1.0 / 3.0, 1e-12), "{abar}");
    // B = 0: a((lambda - A)^{-1} u) = 1 / (lambda + 1)
    let decay = abar_resolvent(&zoo::pure_decay(), 2.0, &e(4), 1e-12).unwrap();
    assert!(decay.contains_within(1.0 / 3.0, 1e-12), "{decay}");
    assert_eq!(abar_resolvent(&zoo::quadratic_birth(), 1.0, &e(0), 1e-9).unwrap().hi, 0.0);
}

#[test]
fn lost_mass_on_the_integral() {
    let p = TruncationParams::default();
    let a0 = a0_on_integral(&zoo::two_state(), 1.0, &e(0), &p).unwrap();
    assert!(a0.contains_within(1.0 - two_state_mass(1.0), 1e-9), "{a0}");
    assert_eq!(a0_on_integral(&zoo::two_state(), 0.0, &e(0), &p).unwrap().hi, 0.0);
    let yule = a0_on_integral(&zoo::yule(), 1.0, &e(0), &p).unwrap();
    assert!(yule.lo <= 0.0 && yule.hi <= 1e-9, "{yule}");

    // deficit 2 times int_0^1 (e^{-s} - e^{-2s}) ds
    let exact = 2.0 * ((1.0 - (-1.0f64).exp()) - (1.0 - (-2.0f64).exp()) / 2.0);
    let ahat = ahat_dp(&zoo::two_state(), 1.0, &e(0), &AhatParams::default()).unwrap();
    assert!(ahat.contains_within(exact, 1e-12), "{ahat} vs {exact}");
    assert!(a0.contains_within(exact, 1e-9));
}

#[test]
fn ahat_never_exceeds_a0() {
    let p = TruncationParams::default();
    let q = AhatParams::default();
    for m in zoo::all() {
        for t in [0.25, 1.0, 2.0] {
            let u = PosSeq::from_entries([(0, 0.5), (1, 0.5)]).unwrap();
            let a0 = a0_on_integral(&m, t, &u, &p).unwrap();
            let ahat = ahat_dp(&m, t, &u, &q).unwrap();
            assert!(ahat.lo <= a0.hi, "{} t={t}: {ahat} vs {a0}", m.name);
        }
    }
    // strict for the explosive model: the gap is the explosion probability
    let m = zoo::quadratic_birth();
    let a0 = a0_on_integral(&m, 1.0, &e(0), &p).unwrap();
    let ahat = ahat_dp(&m, 1.0, &e(0), &q).unwrap();
    let gap = 1.0 - common::quadratic_survival(1.0);
    assert!(ahat.hi < a0.lo);
    assert!(a0.sub(&ahat).contains_within(gap, 1e-8));
}

#[test]
fn xi_on_pure_birth() {
    let policy = XiPolicy::default();
    let q = xi(&zoo::quadratic_birth(), 1.0, &e(0), &policy).unwrap();
    let closed = PI / PI.sinh();
    let (lo, hi) = common::product_oracle(1.0, 0, 1_000_000);
    assert!(lo <= closed && closed <= hi);
    assert!(q.bracket.contains(closed), "{}", q.bracket);
    assert!(q.bracket.width() <= 1e-6 && q.lower_certified);

    let y = xi(&zoo::yule(), 1.0, &e(0), &policy).unwrap();
    assert!(y.bracket.lo == 0.0 && y.bracket.hi <= 1e-6, "{}", y.bracket);
    // |J^n e0| = 1/(n+1) for the Yule model
    for &(n, norm) in &y.norms {
        assert!((norm - 1.0 / (n + 1) as f64).abs() <= 1e-12 / (n + 1) as f64, "n={n}: {norm}");
    }
    assert_eq!(xi(&zoo::pure_decay(), 1.0, &e(3), &policy).unwrap().bracket.hi, 0.0);
}

#[test]
fn verdict_examples() {
    let policy = VerdictPolicy::default();
    let y = honesty_verdict(&zoo::yule(), &e(0), 1.0, &policy).unwrap();
    assert_eq!(y.verdict, Verdict::Honest);
    let q = honesty_verdict(&zoo::quadratic_birth(), &e(0), 1.0, &policy).unwrap();
    assert_eq!(q.verdict, Verdict::Dishonest);
    assert!((q.xi.mid() - 0.2720290).abs() < 1e-6);
    assert_eq!((y.exit_code(), q.exit_code()), (0, 10));
    let d = honesty_verdict(&zoo::pure_decay(), &e(2), 1.0, &policy).unwrap();
    assert_eq!(d.verdict, Verdict::Honest);
    assert!(honesty_verdict(&zoo::yule(), &PosSeq::zero(), 1.0, &policy).is_err());
    assert!(honesty_verdict(&zoo::yule(), &e(0), 0.0, &policy).is_err());
}

#[test]
fn certified_verdicts_agree_across_lambda() {
    // Xi_lambda itself depends on lambda, its null set does not
    let policy = XiPolicy { max_iter: 200_000, ..XiPolicy::default() };
    let vp = VerdictPolicy { xi: policy, use_subsolution: false, ..VerdictPolicy::default() };
    for m in zoo::all() {
        for k in 0..4 {
            let verdicts: Vec<Verdict> = [0.5, 1.0, 2.0]
                .iter()
                .map(|&l| honesty_verdict(&m, &e(k), l, &vp).unwrap().verdict)
                .collect();
            let honest = verdicts.contains(&Verdict::Honest);
            let dishonest = verdicts.contains(&Verdict::Dishonest);
            assert!(!(honest && dishonest), "{} e{k}: {verdicts:?}", m.name);
        }
    }
}

#[test]
fn mass_loss_is_negative_and_nonincreasing_for_quadratic_birth() {
    let m = zoo::quadratic_birth();
    let p = DeltaParams::default();
    let mut prev = None;
    for i in 1..=8 {
        let t = 0.25 * i as f64;
        let d = mass_loss_delta(&m, t, &e(0), 1.0, &p).unwrap();
        assert!(d.delta.hi < 0.0, "t={t}: {}", d.delta);
        // |Delta| is the explosion probability
        let exploded = 1.0 - common::quadratic_survival(t);
        assert!(d.delta.neg().contains_within(exploded, 1e-8), "t={t}: {} vs {exploded}", d.delta);
        if let Some(before) = prev {
            assert!(d.delta.lo <= before);
        }
        prev = Some(d.delta.hi);
    }
}

#[test]
fn mass_loss_vanishes_on_honest_models() {
    let p = DeltaParams::default();
    for t in [0.0, 1.0, 2.5, 5.0] {
        let d = mass_loss_delta(&zoo::yule(), t, &e(0), 1.0, &p).unwrap();
        assert!(d.delta.lo >= -1e-7 && d.delta.hi <= 1e-7, "t={t}: {}", d.delta);
    }
    for m in [zoo::two_state(), zoo::birth_death_kill(), zoo::pure_decay()] {
        let d = mass_loss_delta(&m, 1.5, &e(1), 1.0, &p).unwrap();
        assert!(d.delta.lo >= -1e-7 && d.delta.hi <= 1e-7, "{}: {}", m.name, d.delta);
        assert!(d.discrepancy() <= 1e-6);
    }
}

#[test]
fn honesty_is_invariant_under_the_flow() {
    let policy = VerdictPolicy::default();
    let p = TruncationParams::default();
    for m in [zoo::two_state(), zoo::birth_death_kill()] {
        for t in [0.5, 1.0, 2.0] {
            let v = semigroup_v(&m, t, &e(0), &p).unwrap();
            let u = PosSeq::from_entries(v.value.iter()).unwrap();
            let r = honesty_verdict(&m, &u, 1.0, &policy).unwrap();
            assert_eq!(r.verdict, Verdict::Honest, "{} t={t}", m.name);
        }
    }
}

#[test]
fn dual_weights() {
    let n = 1 << 12;
    // Yule: the truncated fixed point is (k + 1) / (N + 2)
    let y = xi_dual(&zoo::yule(), 1.0, n, 3).unwrap();
    for (k, &psi) in y.values.iter().enumerate().step_by(97) {
        let exact = (k + 1) as f64 / (n + 2) as f64;
        assert!((psi - exact).abs() <= 1e-12, "k={k}: {psi} vs {exact}");
    }
    // quadratic birth: the partial product up to N + 1
    let q = xi_dual(&zoo::quadratic_birth(), 1.0, n, 3).unwrap();
    let (_, partial) = common::product_oracle(1.0, 0, n + 1);
    assert!((q.values[0] - partial).abs() <= 1e-12, "{} vs {partial}", q.values[0]);
    assert!(q.values.iter().all(|&x| (0.0..=1.0).contains(&x)));

    let d = xi_dual(&zoo::pure_decay(), 1.0, 100, 1).unwrap();
    assert!(d.values.iter().all(|&x| x == 0.0));

    // more sweeps never raise the weights
    let bdk = zoo::birth_death_kill();
    let few = xi_dual(&bdk, 1.0, 200, 2).unwrap();
    let more = xi_dual(&bdk, 1.0, 200, 20).unwrap();
    assert!(few.values.iter().zip(&more.values).all(|(a, b)| b <= a));
    assert!(more.residual <= few.residual);
}

#[test]
fn subsolution_examples() {
    let two = subsolution_check(&zoo::two_state(), 1.0, &PosSeq::from_entries([(0, 1.0), (1, 1.0)]).unwrap()).unwrap();
    assert_eq!(two.holds, Tri::True);
    assert!(two.implies_honest);
    let q = subsolution_check(&zoo::quadratic_birth(), 1.0, &e(0)).unwrap();
    assert_eq!(q.holds, Tri::False);
    assert!(!q.implies_honest);
    assert_eq!(subsolution_check(&zoo::pure_decay(), 1.0, &e(5)).unwrap().holds, Tri::True);
}

#[test]
fn report_round_trip_is_bit_exact() {
    let policy = VerdictPolicy {
        sweep: vec![0.5, 1.0, 2.0],
        delta_times: vec![0.5, 1.0],
        witness_t: Some(1.0),
        ..VerdictPolicy::default()
    };
    let u = PosSeq::from_entries([(0, 0.3), (2, 0.7)]).unwrap();
    for m in [zoo::quadratic_birth(), zoo::birth_death_kill()] {
        let r = honesty_verdict(&m, &u, 1.0, &policy).unwrap();
        let text = r.to_json();
        let back = HonestyReport::from_json(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.xi.lo.to_bits(), r.xi.lo.to_bits());
    }
    assert!(HonestyReport::from_json("{\"model\": 3}").is_err());
}

#[test]
fn hereditary_cone() {
    let policy = VerdictPolicy::default();
    let empty = hereditary_audit(&zoo::yule(), 1.0, &PosSeq::zero(), 10, 5, &policy, &[]).unwrap();
    assert!(empty.all_honest && empty.samples == 0);

    let v = PosSeq::from_entries([(0, 1.0), (3, 2.0)]).unwrap();
    let decay = hereditary_audit(&zoo::pure_decay(), 1.0, &v, 20, 5, &policy, &[0.5, 1.0]).unwrap();
    assert!(decay.all_honest && decay.honest == 20 && decay.monotone_violations == 0, "{decay:?}");

    let again = hereditary_audit(&zoo::pure_decay(), 1.0, &v, 20, 5, &policy, &[0.5, 1.0]).unwrap();
    assert_eq!(again, decay);
    assert!(hereditary_audit(&zoo::quadratic_birth(), 1.0, &e(0), 5, 5, &policy, &[]).is_err());
}
