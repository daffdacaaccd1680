#![allow(dead_code)]

use optpool::sampling::SituationSampler;
use optpool::simplex::{solve_standard, LpStatus};
use std::collections::BTreeSet;
use optpool::{parse_situation, Coalition, PlayerSpec, SparePartsSituation};

pub const CANONICAL: &str = r#"{
    "players": [
        {"id": 1, "capacity": 1, "downtime_cost": 4, "arrival_rate": 0.5, "repair_rate": 1.0},
        {"id": 2, "capacity": 2, "downtime_cost": 2, "arrival_rate": 1.0, "repair_rate": 1.5}
    ],
    "holding_cost": 0.3
}"#;

pub fn canonical() -> SparePartsSituation {
    parse_situation(CANONICAL).unwrap()
}

pub fn coalition(ids: &[u32]) -> Coalition {
    Coalition::from_ids(ids.iter().copied()).unwrap()
}

pub fn single(capacity: u32, d: f64, lambda: f64, mu: f64, h: f64) -> SparePartsSituation {
    SparePartsSituation::new(
        vec![PlayerSpec {
            id: 1,
            capacity,
            downtime_cost: d,
            arrival_rate: lambda,
            repair_rate: mu,
        }],
        h,
    )
    .unwrap()
}

/// Random situation with `n` players and capacities in `0..=3`.
pub fn sampled(n: usize, seed: u64) -> SparePartsSituation {
    SituationSampler::default().sample(n, seed)
}

/// Random situation whose pooled capacity stays small enough for
/// exhaustive policy enumeration.
pub fn tiny(n: usize, seed: u64) -> SparePartsSituation {
    SituationSampler {
        max_total_capacity: Some(3),
        ..Default::default()
    }
    .sample(n, seed)
}

/// Whether some strictly positive weights on `sets` sum to one for every
/// player: for each set, maximize its weight over the balanced maps; a
/// strictly positive map exists iff every maximum is positive.
pub fn balanced_by_lp(n: usize, sets: &[Coalition]) -> bool {
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| sets.iter().map(|s| if s.contains_index(i) { 1.0 } else { 0.0 }).collect())
        .collect();
    let b = vec![1.0; n];
    (0..sets.len()).all(|j| {
        let mut c = vec![0.0; sets.len()];
        c[j] = -1.0;
        let sol = solve_standard(&c, &a, &b).unwrap();
        sol.status == LpStatus::Optimal && -sol.objective > 1e-9
    })
}

/// Minimal balanced collections of `n <= 3` players by checking every
/// collection of nonempty coalitions and all of its subcollections.
pub fn exhaustive_minimal(n: usize) -> BTreeSet<Vec<u32>> {
    let all: Vec<Coalition> = Coalition::all_nonempty(n).collect();
    let pick = |code: u32| -> Vec<Coalition> {
        (0..all.len()).filter(|&k| code >> k & 1 == 1).map(|k| all[k]).collect()
    };
    let balanced: Vec<u32> = (1u32..1 << all.len()).filter(|&code| balanced_by_lp(n, &pick(code))).collect();
    balanced
        .iter()
        .filter(|&&code| !balanced.iter().any(|&other| other != code && other & code == other))
        .map(|&code| pick(code).iter().map(|s| s.mask()).collect())
        .collect()
}
