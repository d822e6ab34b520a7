use proptest::prelude::*;

use honesty_lab::{Bracket, PosSeq, SignedSeq, Tri};

fn pos_seq() -> impl Strategy<Value = PosSeq> {
    prop::collection::vec((0usize..40, 0.0f64..10.0), 0..12)
        .prop_map(|entries| PosSeq::from_entries(entries).expect("valid entries"))
}

proptest! {
    #[test]
    fn axpy_mass_is_linear(u in pos_seq(), v in pos_seq(), alpha in 0.0f64..5.0) {
        let w = PosSeq::axpy(alpha, &u, &v).unwrap();
        let expect = alpha * u.entry_sum() + v.entry_sum();
        prop_assert!((w.entry_sum() - expect).abs() <= 1e-12 * (1.0 + expect));
        for k in 0..40 {
            prop_assert!(w.get(k) >= 0.0);
            prop_assert!((w.get(k) - (alpha * u.get(k) + v.get(k))).abs() <= 1e-12 * (1.0 + w.get(k)));
        }
    }

    #[test]
    fn leq_is_reflexive_and_monotone(u in pos_seq(), v in pos_seq()) {
        prop_assert_eq!(u.leq(&u), Tri::True);
        prop_assert_eq!(u.leq(&u.add(&v)), Tri::True);
        if v.entry_sum() > 0.0 && u.entry_sum() == 0.0 {
            prop_assert_eq!(v.leq(&u), Tri::False);
        }
    }

    #[test]
    fn tails_make_comparisons_uncertain(u in pos_seq(), tail in 1e-6f64..1.0) {
        let fuzzy = u.clone().with_tail(tail).unwrap();
        prop_assert_ne!(fuzzy.leq(&u.add(&PosSeq::basis(50))), Tri::True);
        let m = fuzzy.mass();
        prop_assert!(m.lo <= m.hi && (m.width() - tail).abs() <= 4.0 * f64::EPSILON * m.hi);
    }

    #[test]
    fn serde_round_trip_is_exact(u in pos_seq(), tail in 0.0f64..1.0) {
        let u = u.with_tail(tail).unwrap();
        let text = serde_json::to_string(&u).unwrap();
        let back: PosSeq = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, u);
    }

    #[test]
    fn signed_parts_are_disjoint(u in pos_seq(), v in pos_seq()) {
        let s = SignedSeq::new(u.clone(), v.clone());
        for k in 0..40 {
            prop_assert!(s.plus().get(k) == 0.0 || s.minus().get(k) == 0.0);
            prop_assert!((s.get(k) - (u.get(k) - v.get(k))).abs() <= 1e-12 * (1.0 + u.get(k) + v.get(k)));
        }
        let pair = s.pair_psi();
        let exact = u.entry_sum() - v.entry_sum();
        prop_assert!(pair.contains_within(exact, 1e-12 * (1.0 + u.entry_sum() + v.entry_sum())));
    }

    #[test]
    fn bracket_arithmetic_encloses(a in -5.0f64..5.0, wa in 0.0f64..2.0, b in -5.0f64..5.0, wb in 0.0f64..2.0, s in 0.0f64..1.0) {
        let x = Bracket::new(a, a + wa).unwrap();
        let y = Bracket::new(b, b + wb).unwrap();
        let (px, py) = (a + s * wa, b + s * wb);
        prop_assert!(x.add(&y).contains_within(px + py, 1e-12));
        prop_assert!(x.sub(&y).contains_within(px - py, 1e-12));
        prop_assert!(x.neg().contains(-px));
        prop_assert!(x.scale(-2.0).contains_within(-2.0 * px, 1e-12));
        prop_assert_eq!(x.overlaps(&y), x.gap_to(&y) == 0.0);
    }
}

#[test]
fn invalid_input_is_rejected() {
    assert!(PosSeq::from_entries([(0, -1.0)]).is_err());
    assert!(PosSeq::from_entries([(0, f64::NAN)]).is_err());
    assert!(Bracket::new(1.0, 0.0).is_err());
    assert!(PosSeq::basis(0).scale(-1.0).is_err());
}
