mod common;

use common::*;
use optpool::situation::{coalition_capacity, normalize};
use optpool::{parse_situation, Coalition, Error};
use proptest::prelude::*;

#[test]
fn canonical_normalization() {
    let r = normalize(&canonical());
    assert_eq!(r.gamma, 4.0);
    assert_eq!(r.lambda_star, vec![0.125, 0.25]);
    assert_eq!(r.mu_star, vec![0.25, 0.375]);
    assert!((r.h_star - 0.075).abs() < 1e-15);
}

#[test]
fn rejects_bad_input() {
    let bad = [
        r#"{"players":[],"holding_cost":0.1}"#,
        r#"{"players":[{"id":1,"capacity":1,"downtime_cost":1,"arrival_rate":0,"repair_rate":1}],"holding_cost":0}"#,
        r#"{"players":[{"id":1,"capacity":1,"downtime_cost":1,"arrival_rate":1,"repair_rate":-1}],"holding_cost":0}"#,
        r#"{"players":[{"id":1,"capacity":1,"downtime_cost":1,"arrival_rate":1,"repair_rate":1},
                       {"id":1,"capacity":1,"downtime_cost":1,"arrival_rate":1,"repair_rate":1}],"holding_cost":0}"#,
        r#"{"players":[{"id":1,"capacity":1,"downtime_cost":1,"arrival_rate":1}],"holding_cost":0}"#,
        "not json",
    ];
    for text in bad {
        assert!(
            matches!(parse_situation(text), Err(Error::Parse(_) | Error::Validation { .. })),
            "{text}"
        );
    }
}

#[test]
fn unknown_coalitions_are_refused() {
    let s = canonical();
    assert!(coalition_capacity(&s, Coalition::EMPTY).is_err());
    assert!(coalition_capacity(&s, coalition(&[3])).is_err());
}

#[test]
fn json_round_trip() {
    let s = sampled(3, 11);
    assert_eq!(parse_situation(&s.to_json()).unwrap(), s);
}

proptest! {
    #[test]
    fn normalized_rates_are_scale_free(seed in any::<u64>(), n in 1usize..5, k in 0.1f64..50.0) {
        let s = sampled(n, seed);
        let mut t = s.clone();
        for p in &mut t.players {
            p.arrival_rate *= k;
            p.repair_rate *= k;
        }
        t.holding_cost *= k;
        let (a, b) = (normalize(&s), normalize(&t));
        prop_assert!((b.gamma / a.gamma - k).abs() < 1e-12 * k);
        for i in 0..n {
            prop_assert!((a.lambda_star[i] - b.lambda_star[i]).abs() < 1e-12);
            prop_assert!((a.mu_star[i] - b.mu_star[i]).abs() < 1e-12);
        }
        prop_assert!((a.h_star - b.h_star).abs() < 1e-12);
        let total: f64 = a.lambda_star.iter().chain(&a.mu_star).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_additive(seed in any::<u64>(), n in 1usize..6, m1 in 1u32..64, m2 in 1u32..64) {
        let s = sampled(n, seed);
        let full = (1u32 << n) - 1;
        let (a, b) = (Coalition::from_mask(m1 & full), Coalition::from_mask(m2 & full & !m1));
        prop_assume!(!a.is_empty() && !b.is_empty());
        let sum = coalition_capacity(&s, a).unwrap() + coalition_capacity(&s, b).unwrap();
        prop_assert_eq!(coalition_capacity(&s, a.union(b)).unwrap(), sum);
    }
}
