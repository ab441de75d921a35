mod common;

use common::{check_el_against_primal, primal_log_ratio, random_marks};
use elgof::{el_log_ratio, ExtReal, MarkVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn primal_oracle_reproduces_the_two_point_case() {
    let want = -2.0 * (8.0f64 / 9.0).ln();
    assert!((primal_log_ratio(&[-1.0, 2.0]).unwrap() - want).abs() < 1e-14);
    assert_eq!(primal_log_ratio(&[1.0, 2.0, 0.0]), None);
    assert_eq!(primal_log_ratio(&[0.0, 0.0]), Some(0.0));
    assert!(primal_log_ratio(&[-1.0, 1.0, -2.0, 2.0]).unwrap().abs() < 1e-12);
}

#[test]
fn dual_matches_primal_on_random_marks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for case in 0..200 {
        let n = 2 + case % 5;
        let a = random_marks(&mut rng, n);
        check_el_against_primal(&a).unwrap();
    }
}

#[test]
fn dual_matches_primal_near_the_hull_boundary() {
    for a in [
        vec![-1e-4, 1.0, 2.0, 3.0],
        vec![-5.0, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3],
        vec![-1.0, -1.0, -1.0, 1e-2],
        vec![-0.3, 0.0, 0.0, 0.7, 0.0],
    ] {
        check_el_against_primal(&a).unwrap();
    }
}

#[test]
fn ties_at_zero_do_not_move_the_ratio_below_zero() {
    let ev = el_log_ratio(&MarkVector::new(vec![0.0, 0.0, -1.0, 1.0]).unwrap(), 1e-12).unwrap();
    assert_eq!(ev.log_ratio(), ExtReal::Finite(0.0));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dual_matches_primal(a in prop::collection::vec(-5.0f64..5.0, 2..=6)) {
        prop_assert!(check_el_against_primal(&a).is_ok(), "{:?}", check_el_against_primal(&a));
    }
}
