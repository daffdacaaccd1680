//! Minimal balanced collections, the balancedness inequalities, and the
//! least core.

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::game::CharacteristicGame;
use crate::simplex::{solve_standard, LpStatus};

/// Largest player count for which minimal balanced collections are enumerated.
pub const MAX_ENUMERATION_PLAYERS: usize = 5;
/// Largest player count accepted by the rational least-core path.
pub const MAX_EXACT_PLAYERS: usize = 3;

/// A minimal balanced collection with its (unique) balanced map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedCollection {
    pub sets: Vec<Coalition>,
    #[serde(with = "ratio_strings")]
    pub kappa: Vec<Rational64>,
    /// Least positive integer making every `kappa_S * alpha` integral.
    pub alpha: u64,
    /// `b_S = kappa_S * alpha`.
    pub weights: Vec<u64>,
}

mod ratio_strings {
    use num_rational::Rational64;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|r| r.to_string()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational64>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| t.parse().map_err(|_| D::Error::custom(format!("bad rational \"{t}\""))))
            .collect()
    }
}

impl BalancedCollection {
    /// Builds the collection for `sets` when it is minimal balanced on `n` players.
    pub fn from_sets(n: usize, sets: Vec<Coalition>) -> Option<Self> {
        let kappa = minimal_balanced_map(n, &sets)?;
        let alpha = kappa.iter().fold(1i64, |acc, k| num_integer::lcm(acc, *k.denom()));
        let weights = kappa.iter().map(|k| (k * alpha).to_integer() as u64).collect();
        Some(BalancedCollection {
            sets,
            kappa,
            alpha: alpha as u64,
            weights,
        })
    }

    pub fn weight_of(&self, s: Coalition) -> Option<u64> {
        self.sets.iter().position(|&t| t == s).map(|p| self.weights[p])
    }

    /// `"{1,2}x1 {1,3}x1 {2,3}x1"`-style description.
    pub fn describe(&self) -> String {
        self.sets
            .iter()
            .zip(&self.weights)
            .map(|(s, b)| format!("{s:?}x{b}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Solves `M k = v` by Gauss-Jordan elimination, where `m` has one row per
/// equation. Returns `None` unless the system is consistent with a unique
/// solution.
pub(crate) fn solve_exact<T>(mut m: Vec<Vec<T>>, mut v: Vec<T>) -> Option<Vec<T>>
where
    T: Clone + Num,
{
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut row = 0;
    for col in 0..cols {
        let Some(p) = (row..rows).find(|&r| !m[r][col].is_zero()) else {
            return None; // free variable: not unique
        };
        m.swap(row, p);
        v.swap(row, p);
        let inv = T::one() / m[row][col].clone();
        for c in col..cols {
            m[row][c] = m[row][c].clone() * inv.clone();
        }
        v[row] = v[row].clone() * inv;
        for r in 0..rows {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..cols {
                    let delta = f.clone() * m[row][c].clone();
                    m[r][c] = m[r][c].clone() - delta;
                }
                let delta = f * v[row].clone();
                v[r] = v[r].clone() - delta;
            }
        }
        row += 1;
    }
    if v[row..].iter().any(|x| !x.is_zero()) {
        return None;
    }
    Some(v[..cols].to_vec())
}

/// The balanced map of `sets` if their incidence vectors are linearly
/// independent and the unique solution of `sum_S k_S 1_S = 1_N` is positive.
fn minimal_balanced_map(n: usize, sets: &[Coalition]) -> Option<Vec<Rational64>> {
    if sets.is_empty() {
        return None;
    }
    let m: Vec<Vec<Rational64>> = (0..n)
        .map(|i| {
            sets.iter()
                .map(|s| if s.contains_index(i) { Rational64::one() } else { Rational64::zero() })
                .collect()
        })
        .collect();
    let kappa = solve_exact(m, vec![Rational64::one(); n])?;
    kappa.iter().all(|k| k.is_positive()).then_some(kappa)
}

fn next_combination(idx: &mut [usize], pool: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < pool - k + pos {
            idx[pos] += 1;
            for q in pos + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// All minimal balanced collections on `n` players, ordered by size and then
/// lexicographically by member bitmasks.
pub fn enumerate_minimal_balanced(n: usize) -> Result<Vec<BalancedCollection>> {
    if n == 0 {
        return Err(Error::Precondition("at least one player is required".into()));
    }
    if n > MAX_ENUMERATION_PLAYERS {
        return Err(Error::SizeCap {
            what: "players for minimal balanced collection enumeration",
            actual: n as u128,
            limit: MAX_ENUMERATION_PLAYERS as u128,
        });
    }
    let pool: Vec<Coalition> = Coalition::all_nonempty(n).collect();
    let grand = Coalition::grand(n).mask();
    let mut out = Vec::new();
    for k in 1..=n {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let sets: Vec<Coalition> = idx.iter().map(|&p| pool[p]).collect();
            if sets.iter().fold(0, |m, s| m | s.mask()) == grand {
                if let Some(c) = BalancedCollection::from_sets(n, sets) {
                    out.push(c);
                }
            }
            if !next_combination(&mut idx, pool.len()) {
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancednessCheck {
    pub index: usize,
    pub collection: BalancedCollection,
    /// `sum_S b_S c(S)`.
    pub lhs: f64,
    /// `alpha c(N)`.
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancednessReport {
    pub checks: Vec<BalancednessCheck>,
    /// Index of the check with the smallest slack.
    pub tightest: usize,
    pub min_slack: f64,
    pub balanced: bool,
}

impl BalancednessReport {
    pub fn failures(&self) -> impl Iterator<Item = &BalancednessCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Tolerance for one inequality: `max(tol, 10 (sum_S b_S gap_S + alpha gap_N))`.
pub fn propagated_tolerance(game: &CharacteristicGame, collection: &BalancedCollection, tol: f64) -> f64 {
    let spread: f64 = collection
        .sets
        .iter()
        .zip(&collection.weights)
        .map(|(&s, &b)| b as f64 * game.gap(s))
        .sum::<f64>()
        + collection.alpha as f64 * game.gap(game.grand());
    tol.max(10.0 * spread)
}

/// Checks `sum_{S in B} b_S c(S) >= alpha c(N)` for every minimal balanced
/// collection `B`.
pub fn check_balancedness(game: &CharacteristicGame, tol: f64) -> Result<BalancednessReport> {
    let collections = enumerate_minimal_balanced(game.n())?;
    Ok(check_collections(game, collections, tol))
}

pub fn check_collections(
    game: &CharacteristicGame,
    collections: Vec<BalancedCollection>,
    tol: f64,
) -> BalancednessReport {
    let grand = game.cost(game.grand());
    let checks: Vec<BalancednessCheck> = collections
        .into_iter()
        .enumerate()
        .map(|(index, collection)| {
            let lhs: f64 = collection
                .sets
                .iter()
                .zip(&collection.weights)
                .map(|(&s, &b)| b as f64 * game.cost(s))
                .sum();
            let rhs = collection.alpha as f64 * grand;
            let tolerance = propagated_tolerance(game, &collection, tol);
            let slack = lhs - rhs;
            BalancednessCheck {
                index,
                collection,
                lhs,
                rhs,
                slack,
                tolerance,
                pass: slack >= -tolerance,
            }
        })
        .collect();
    let tightest = checks
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.slack.total_cmp(&b.1.slack))
        .map_or(0, |(p, _)| p);
    BalancednessReport {
        min_slack: checks.get(tightest).map_or(0.0, |c| c.slack),
        balanced: checks.iter().all(|c| c.pass),
        tightest,
        checks,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastCore {
    /// Smallest uniform excess bound; the core is nonempty iff it is `<= 0`.
    pub epsilon: f64,
    /// An allocation attaining it, with `sum_i x_i = c(N)`.
    pub allocation: Vec<f64>,
}

/// Solves `min eps` subject to `x(S) <= c(S) + eps` for proper nonempty `S`
/// and `x(N) = c(N)`.
///
/// The dual program (one column per coalition, `n + 1` rows) is solved with
/// the dense simplex and the allocation is read off its multipliers. With a
/// single player there are no proper coalitions; `eps = 0` is reported.
pub fn least_core(game: &CharacteristicGame) -> Result<LeastCore> {
    let n = game.n();
    let grand = game.grand();
    if n == 1 {
        return Ok(LeastCore {
            epsilon: 0.0,
            allocation: vec![game.cost(grand)],
        });
    }
    let coalitions: Vec<Coalition> = Coalition::all_nonempty(n).collect();
    let mut a = vec![vec![0.0; coalitions.len()]; n + 1];
    let mut cost = Vec::with_capacity(coalitions.len());
    for (j, &s) in coalitions.iter().enumerate() {
        if s == grand {
            (0..n).for_each(|i| a[i][j] = -1.0);
            cost.push(-game.cost(s));
        } else {
            s.indices().for_each(|i| a[i][j] = 1.0);
            a[n][j] = 1.0;
            cost.push(game.cost(s));
        }
    }
    let mut b = vec![0.0; n + 1];
    b[n] = 1.0;
    let sol = solve_standard(&cost, &a, &b)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("least-core dual ended as {:?}", sol.status)));
    }
    let mut x: Vec<f64> = sol.duals[..n].to_vec();
    let shortfall = (game.cost(grand) - x.iter().sum::<f64>()) / n as f64;
    x.iter_mut().for_each(|xi| *xi += shortfall);
    let epsilon = max_excess(game, &x);
    if (epsilon - -sol.objective).abs() > 1e-6 * (1.0 + epsilon.abs()) {
        return Err(Error::Lp(format!(
            "multipliers give excess {epsilon} but the dual optimum is {}",
            -sol.objective
        )));
    }
    Ok(LeastCore {
        epsilon,
        allocation: x,
    })
}

fn max_excess(game: &CharacteristicGame, x: &[f64]) -> f64 {
    let grand = game.grand();
    game.entries()
        .filter(|(s, _)| *s != grand)
        .map(|(s, c)| s.indices().map(|i| x[i]).sum::<f64>() - c)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactLeastCore {
    pub epsilon: BigRational,
    pub allocation: Vec<BigRational>,
}

impl ExactLeastCore {
    pub fn epsilon_f64(&self) -> f64 {
        self.epsilon.to_f64().unwrap_or(f64::NAN)
    }

    pub fn allocation_f64(&self) -> Vec<f64> {
        self.allocation.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

/// Least core by rational vertex enumeration (each cost converted exactly from
/// its binary value). Supports up to three players.
pub fn least_core_exact(game: &CharacteristicGame) -> Result<ExactLeastCore> {
    let n = game.n();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::SizeCap {
            what: "players for exact least core",
            actual: n as u128,
            limit: MAX_EXACT_PLAYERS as u128,
        });
    }
    let q = |v: f64| BigRational::from_f64(v).expect("finite cost");
    let grand = game.grand();
    if n == 1 {
        return Ok(ExactLeastCore {
            epsilon: BigRational::zero(),
            allocation: vec![q(game.cost(grand))],
        });
    }
    // variables (x_1..x_n, eps); constraint rows x(S) - eps <= c(S)
    let proper: Vec<Coalition> = Coalition::all_nonempty(n).filter(|&s| s != grand).collect();
    let row = |s: Coalition, eps: i64| -> Vec<BigRational> {
        (0..n)
            .map(|i| if s.contains_index(i) { BigRational::one() } else { BigRational::zero() })
            .chain(std::iter::once(BigRational::from_integer(BigInt::from(eps))))
            .collect()
    };
    let mut best: Option<ExactLeastCore> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut m: Vec<Vec<BigRational>> = idx.iter().map(|&p| row(proper[p], -1)).collect();
        let mut v: Vec<BigRational> = idx.iter().map(|&p| q(game.cost(proper[p]))).collect();
        m.push(row(grand, 0));
        v.push(q(game.cost(grand)));
        if let Some(sol) = solve_exact(m, v) {
            let eps = sol[n].clone();
            let feasible = proper.iter().all(|&s| {
                let load: BigRational = s.indices().map(|i| sol[i].clone()).sum();
                load - eps.clone() <= q(game.cost(s))
            });
            if feasible && best.as_ref().is_none_or(|b| eps < b.epsilon) {
                best = Some(ExactLeastCore {
                    epsilon: eps,
                    allocation: sol[..n].to_vec(),
                });
            }
        }
        if !next_combination(&mut idx, proper.len()) {
            break;
        }
    }
    best.ok_or_else(|| Error::Lp("no feasible vertex found".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreCheck {
    pub in_core: bool,
    /// `x(N) - c(N)`.
    pub efficiency_gap: f64,
    /// Coalitions with `x(S) > c(S) + tol`, with their excess `x(S) - c(S)`.
    pub violations: Vec<(Coalition, f64)>,
}

pub fn in_core(game: &CharacteristicGame, x: &[f64], tol: f64) -> Result<CoreCheck> {
    if x.len() != game.n() {
        return Err(Error::DimensionMismatch {
            expected: game.n(),
            actual: x.len(),
        });
    }
    let efficiency_gap = x.iter().sum::<f64>() - game.cost(game.grand());
    let violations: Vec<(Coalition, f64)> = game
        .entries()
        .map(|(s, c)| (s, s.indices().map(|i| x[i]).sum::<f64>() - c))
        .filter(|(_, e)| *e > tol)
        .collect();
    Ok(CoreCheck {
        in_core: efficiency_gap.abs() <= tol && violations.is_empty(),
        efficiency_gap,
        violations,
    })
}

/// Least core, core membership of its allocation and (for up to five
/// players) the balancedness inequalities, with both verdicts side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    pub least_core: LeastCore,
    /// Tolerance on `eps*` and on core membership: `max(tol, 10 max_S gap_S)`.
    pub tolerance: f64,
    pub core_nonempty: bool,
    pub allocation_check: CoreCheck,
    pub balancedness: Option<BalancednessReport>,
}

impl CoreReport {
    /// Whether the least-core and balancedness verdicts coincide, when both exist.
    pub fn verdicts_agree(&self) -> Option<bool> {
        self.balancedness.as_ref().map(|b| b.balanced == self.core_nonempty)
    }
}

pub fn analyze_core(game: &CharacteristicGame, tol: f64) -> Result<CoreReport> {
    let least_core = least_core(game)?;
    // Reported costs exceed the true ones by at most their gaps, which moves
    // eps* up by at most the grand coalition's gap.
    let tolerance = tol.max(10.0 * game.max_gap());
    let allocation_check = in_core(game, &least_core.allocation, tolerance)?;
    let balancedness = if game.n() <= MAX_ENUMERATION_PLAYERS {
        Some(check_balancedness(game, tol)?)
    } else {
        None
    };
    Ok(CoreReport {
        core_nonempty: least_core.epsilon <= tolerance,
        least_core,
        tolerance,
        allocation_check,
        balancedness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(ids: &[u32]) -> Coalition {
        Coalition::from_ids(ids.iter().copied()).unwrap()
    }

    fn game2(c1: f64, c2: f64, c12: f64) -> CharacteristicGame {
        CharacteristicGame::new(2, vec![c1, c2, c12]).unwrap()
    }

    #[test]
    fn counts_for_small_n() {
        let counts: Vec<usize> = (1..=5)
            .map(|n| enumerate_minimal_balanced(n).unwrap().len())
            .collect();
        assert_eq!(counts, vec![1, 2, 6, 42, 1292]);
        assert!(enumerate_minimal_balanced(6).is_err());
    }

    #[test]
    fn three_player_triangle() {
        let all = enumerate_minimal_balanced(3).unwrap();
        let tri = all
            .iter()
            .find(|b| b.sets == vec![c(&[1, 2]), c(&[1, 3]), c(&[2, 3])])
            .unwrap();
        assert_eq!(tri.kappa, vec![Rational64::new(1, 2); 3]);
        assert_eq!(tri.alpha, 2);
        assert_eq!(tri.weights, vec![1, 1, 1]);
        assert_eq!(all.iter().filter(|b| b.alpha == 1).count(), 5);
    }

    #[test]
    fn fake_game_fails_partition() {
        let report = check_balancedness(&game2(1.0, 1.0, 3.0), 1e-9).unwrap();
        assert!(!report.balanced);
        let failing: Vec<_> = report.failures().collect();
        assert_eq!(failing.len(), 1);
        assert_eq!(failing[0].collection.sets, vec![c(&[1]), c(&[2])]);
        assert_eq!(failing[0].slack, -1.0);
    }

    #[test]
    fn single_player_balancedness() {
        let g = CharacteristicGame::new(1, vec![2.5]).unwrap();
        let report = check_balancedness(&g, 1e-9).unwrap();
        assert!(report.balanced);
        assert_eq!(report.min_slack, 0.0);
        let lc = least_core(&g).unwrap();
        assert!(lc.epsilon <= 0.0);
        assert_eq!(lc.allocation, vec![2.5]);
    }

    #[test]
    fn least_core_examples() {
        let lc = least_core(&game2(2.0, 3.0, 4.0)).unwrap();
        assert!((lc.epsilon + 0.5).abs() < 1e-12);
        assert!((lc.allocation[0] - 1.5).abs() < 1e-12);
        assert!((lc.allocation[1] - 2.5).abs() < 1e-12);
        let lc = least_core(&game2(1.0, 1.0, 3.0)).unwrap();
        assert!((lc.epsilon - 0.5).abs() < 1e-12);

        let exact = least_core_exact(&game2(2.0, 3.0, 4.0)).unwrap();
        assert_eq!(exact.epsilon, BigRational::new((-1).into(), 2.into()));
        assert_eq!(exact.allocation_f64(), vec![1.5, 2.5]);
    }

    #[test]
    fn core_membership() {
        let g = game2(2.0, 3.0, 4.0);
        assert!(in_core(&g, &[1.5, 2.5], 1e-9).unwrap().in_core);
        let bad = in_core(&g, &[2.5, 1.5], 1e-9).unwrap();
        assert!(!bad.in_core);
        assert_eq!(bad.violations.len(), 1);
        assert_eq!(bad.violations[0].0, c(&[1]));
        let off = in_core(&g, &[1.0, 2.0], 1e-9).unwrap();
        assert!(!off.in_core && off.violations.is_empty());
        assert!((off.efficiency_gap + 1.0).abs() < 1e-15);
        assert!(in_core(&g, &[1.0], 1e-9).is_err());
    }

    #[test]
    fn collection_serializes_kappa_as_fractions() {
        let tri = BalancedCollection::from_sets(3, vec![c(&[1, 2]), c(&[1, 3]), c(&[2, 3])]).unwrap();
        let text = serde_json::to_string(&tri).unwrap();
        assert!(text.contains("\"1/2\""), "{text}");
        let back: BalancedCollection = serde_json::from_str(&text).unwrap();
        assert_eq!(back, tri);
    }
}
