//! Ground-truth engines that do not share code paths with value iteration:
//! exact birth-death stationary analysis, exhaustive policy enumeration and a
//! continuous-time event simulator.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::mdp::{ActionProfile, StationaryPolicy};
use crate::situation::{coalition_capacity, SparePartsSituation};

/// Continuous-time birth-death chain on states `0..=m`.
///
/// `up[y]` is the rate `y -> y+1` and `down[y]` the rate `y -> y-1`;
/// `down[0]` and `up[m]` are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct BirthDeathChain {
    up: Vec<f64>,
    down: Vec<f64>,
}

impl BirthDeathChain {
    pub fn new(up: Vec<f64>, down: Vec<f64>) -> Result<Self> {
        if up.len() != down.len() || up.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: up.len().max(1),
                actual: down.len(),
            });
        }
        if up.iter().chain(&down).any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Precondition("rates must be finite and nonnegative".into()));
        }
        Ok(BirthDeathChain { up, down })
    }

    pub fn max_state(&self) -> usize {
        self.up.len() - 1
    }

    fn up_at(&self, y: usize) -> f64 {
        if y == self.max_state() {
            0.0
        } else {
            self.up[y]
        }
    }

    fn down_at(&self, y: usize) -> f64 {
        if y == 0 {
            0.0
        } else {
            self.down[y]
        }
    }

    pub fn up_rate(&self, y: usize) -> f64 {
        self.up_at(y)
    }

    pub fn down_rate(&self, y: usize) -> f64 {
        self.down_at(y)
    }

    /// The closed communicating class eventually entered from `start`, as an
    /// inclusive range. Fails when `start` is transient and two different
    /// classes can absorb it.
    pub fn recurrent_class_from(&self, start: usize) -> Result<(usize, usize)> {
        let m = self.max_state();
        if start > m {
            return Err(Error::Precondition(format!("start state {start} > {m}")));
        }
        let floor = (0..=start).rev().find(|&y| self.down_at(y) == 0.0).unwrap_or(0);
        let ceiling = (start..=m).find(|&y| self.up_at(y) == 0.0).unwrap_or(m);
        let up_barrier = (floor..start).find(|&y| self.up_at(y) == 0.0);
        let down_barrier = (start + 1..=ceiling).rev().find(|&y| self.down_at(y) == 0.0);
        match (up_barrier, down_barrier) {
            (Some(a), Some(b)) => Err(Error::ReducibleChain(format!(
                "state {start} drains into both [{floor}, {a}] and [{b}, {ceiling}]"
            ))),
            (Some(a), None) => Ok((floor, a)),
            (None, Some(b)) => Ok((b, ceiling)),
            (None, None) => Ok((floor, ceiling)),
        }
    }

    /// Restriction to the states `lo..=hi`.
    pub fn restrict(&self, lo: usize, hi: usize) -> BirthDeathChain {
        let mut up = self.up[lo..=hi].to_vec();
        let mut down = self.down[lo..=hi].to_vec();
        *up.last_mut().unwrap() = 0.0;
        down[0] = 0.0;
        BirthDeathChain { up, down }
    }
}

/// Stationary distribution of an irreducible birth-death chain via detailed
/// balance `pi(y+1) / pi(y) = up(y) / down(y+1)`.
pub fn stationary_distribution(chain: &BirthDeathChain) -> Result<Vec<f64>> {
    let m = chain.max_state();
    for y in 0..m {
        if chain.up_at(y) == 0.0 || chain.down_at(y + 1) == 0.0 {
            return Err(Error::ReducibleChain(format!(
                "no two-way link between states {y} and {}",
                y + 1
            )));
        }
    }
    let mut weights = Vec::with_capacity(m + 1);
    weights.push(1.0f64);
    for y in 0..m {
        let next = weights[y] * chain.up_at(y) / chain.down_at(y + 1);
        weights.push(next);
        if next > 1e250 {
            weights.iter_mut().for_each(|w| *w *= 1e-250);
        }
    }
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Birth-death chain induced by a stationary policy (continuous-time rates).
pub fn policy_chain(
    situation: &SparePartsSituation,
    policy: &StationaryPolicy,
) -> Result<BirthDeathChain> {
    let members: Vec<usize> = policy.coalition.indices().collect();
    let mut up = Vec::with_capacity(policy.actions.len());
    let mut down = Vec::with_capacity(policy.actions.len());
    for a in &policy.actions {
        let mut u = 0.0;
        let mut d = 0.0;
        for (pos, &k) in members.iter().enumerate() {
            if a.repair[pos] {
                u += situation.players[k].repair_rate;
            }
            if a.accept[pos] {
                d += situation.players[k].arrival_rate;
            }
        }
        up.push(u);
        down.push(d);
    }
    BirthDeathChain::new(up, down)
}

fn check_policy(situation: &SparePartsSituation, coalition: Coalition, policy: &StationaryPolicy) -> Result<usize> {
    let capacity = coalition_capacity(situation, coalition)?;
    if policy.coalition != coalition {
        return Err(Error::Precondition(format!(
            "policy is for coalition {}, not {coalition}",
            policy.coalition
        )));
    }
    if policy.actions.len() != capacity + 1 {
        return Err(Error::DimensionMismatch {
            expected: capacity + 1,
            actual: policy.actions.len(),
        });
    }
    let m = coalition.len();
    for (y, a) in policy.actions.iter().enumerate() {
        if a.accept.len() != m || a.repair.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: a.accept.len().min(a.repair.len()),
            });
        }
        if y == 0 && a.accept.iter().any(|&x| x) {
            return Err(Error::InfeasibleAction {
                state: 0,
                reason: "accepts with empty stock".into(),
            });
        }
        if y == capacity && a.repair.iter().any(|&x| x) {
            return Err(Error::InfeasibleAction {
                state: y,
                reason: "shelves at full capacity".into(),
            });
        }
    }
    Ok(capacity)
}

/// Long-run cost per time unit of `policy`, evaluated on the recurrent class
/// entered from full stock `C_S`.
pub fn exact_policy_cost(
    situation: &SparePartsSituation,
    coalition: Coalition,
    policy: &StationaryPolicy,
) -> Result<f64> {
    let capacity = check_policy(situation, coalition, policy)?;
    let chain = policy_chain(situation, policy)?;
    let (lo, hi) = chain.recurrent_class_from(capacity)?;
    let pi = stationary_distribution(&chain.restrict(lo, hi))?;
    let members: Vec<usize> = coalition.indices().collect();
    let mut cost = 0.0;
    for (offset, p) in pi.iter().enumerate() {
        let y = lo + offset;
        let a = &policy.actions[y];
        let mut rate_cost = situation.holding_cost * y as f64;
        for (pos, &k) in members.iter().enumerate() {
            if !a.accept[pos] {
                rate_cost += situation.players[k].arrival_rate * situation.players[k].downtime_cost;
            }
        }
        cost += p * rate_cost;
    }
    Ok(cost)
}

/// Feasible action profiles in state `y` of a coalition with `members`
/// players and pooled capacity `capacity`.
fn feasible_profiles(members: usize, y: usize, capacity: usize) -> Vec<ActionProfile> {
    let accept_bits = if y > 0 { members } else { 0 };
    let repair_bits = if y < capacity { members } else { 0 };
    let total = 1usize << (accept_bits + repair_bits);
    (0..total)
        .map(|code| {
            let accept = (0..members)
                .map(|k| k < accept_bits && code & (1 << k) != 0)
                .collect();
            let repair = (0..members)
                .map(|k| k < repair_bits && code & (1 << (accept_bits + k)) != 0)
                .collect();
            ActionProfile { accept, repair }
        })
        .collect()
}

/// Upper limit on `4^(|S| (C_S + 1))` for exhaustive enumeration.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Minimum of [`exact_policy_cost`] over every deterministic stationary policy.
pub fn brute_force_optimum(
    situation: &SparePartsSituation,
    coalition: Coalition,
) -> Result<(f64, StationaryPolicy)> {
    let capacity = coalition_capacity(situation, coalition)?;
    let m = coalition.len();
    let exponent = (m * (capacity + 1)) as u32;
    let size = 4u128.checked_pow(exponent).unwrap_or(u128::MAX);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeCap {
            what: "policy enumeration size 4^(|S|(C_S+1))",
            actual: size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let per_state: Vec<Vec<ActionProfile>> = (0..=capacity)
        .map(|y| feasible_profiles(m, y, capacity))
        .collect();
    let mut choice = vec![0usize; capacity + 1];
    let mut best: Option<(f64, StationaryPolicy)> = None;
    loop {
        let policy = StationaryPolicy {
            coalition,
            actions: choice
                .iter()
                .enumerate()
                .map(|(y, &c)| per_state[y][c].clone())
                .collect(),
        };
        let cost = exact_policy_cost(situation, coalition, &policy)?;
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, policy));
        }
        // odometer over per-state choices
        let mut y = 0;
        loop {
            if y > capacity {
                return Ok(best.expect("at least one policy"));
            }
            choice[y] += 1;
            if choice[y] < per_state[y].len() {
                break;
            }
            choice[y] = 0;
            y += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Estimated cost per time unit.
    pub estimate: f64,
    /// Half-width of the 95% batch-means confidence interval.
    pub half_width: f64,
    pub events: u64,
    pub seed: u64,
}

impl SimulationResult {
    pub fn covers(&self, value: f64) -> bool {
        (self.estimate - value).abs() <= self.half_width
    }
}

pub const MIN_SIMULATION_EVENTS: u64 = 10_000;
const BATCHES: u64 = 20;
/// 0.975 quantile of Student's t with 19 degrees of freedom.
const T_QUANTILE_19: f64 = 2.093_024_054_408_263;

/// Simulates the pooled system of `coalition` in continuous time under
/// `policy`, starting from full stock.
///
/// Events are drawn from the superposition of all demand and repair clocks;
/// costs are the emergency charges plus time-integrated holding cost. The
/// run is split into 20 equal batches of events for the confidence interval.
pub fn simulate(
    situation: &SparePartsSituation,
    coalition: Coalition,
    policy: &StationaryPolicy,
    min_events: u64,
    seed: u64,
) -> Result<SimulationResult> {
    if min_events < MIN_SIMULATION_EVENTS {
        return Err(Error::Precondition(format!(
            "at least {MIN_SIMULATION_EVENTS} events are required, got {min_events}"
        )));
    }
    let capacity = check_policy(situation, coalition, policy)?;
    let members: Vec<usize> = coalition.indices().collect();
    // clock i < m: demand of member i; clock m + i: repair completion of member i
    let mut clocks: Vec<f64> = members
        .iter()
        .map(|&k| situation.players[k].arrival_rate)
        .chain(members.iter().map(|&k| situation.players[k].repair_rate))
        .collect();
    let total_rate: f64 = clocks.iter().sum();
    let mut acc = 0.0;
    for c in clocks.iter_mut() {
        acc += *c;
        *c = acc;
    }
    let m = members.len();

    let per_batch = min_events.div_ceil(BATCHES);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut y = capacity;
    let mut total_cost = 0.0;
    let mut total_time = 0.0;
    let mut batch_means = Vec::with_capacity(BATCHES as usize);
    for _ in 0..BATCHES {
        let mut cost = 0.0;
        let mut time = 0.0;
        for _ in 0..per_batch {
            let u: f64 = rng.gen();
            let dt = -(1.0 - u).ln() / total_rate;
            time += dt;
            cost += situation.holding_cost * y as f64 * dt;
            let pick = rng.gen::<f64>() * total_rate;
            let clock = clocks.partition_point(|&c| c <= pick).min(2 * m - 1);
            let action = &policy.actions[y];
            if clock < m {
                if action.accept[clock] {
                    y -= 1;
                } else {
                    cost += situation.players[members[clock]].downtime_cost;
                }
            } else if action.repair[clock - m] {
                y += 1;
            }
        }
        total_cost += cost;
        total_time += time;
        batch_means.push(cost / time);
    }
    let mean = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    let half_width = (T_QUANTILE_19 * (var / BATCHES as f64).sqrt()).max(f64::MIN_POSITIVE);
    Ok(SimulationResult {
        estimate: total_cost / total_time,
        half_width,
        events: per_batch * BATCHES,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::situation::PlayerSpec;

    fn single(capacity: u32, d: f64, lambda: f64, mu: f64, h: f64) -> SparePartsSituation {
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

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn stationary_examples() {
        let chain = BirthDeathChain::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert_close(&stationary_distribution(&chain).unwrap(), &[0.5, 0.5], 1e-15);

        let chain = BirthDeathChain::new(vec![1.0, 1.0, 0.0], vec![0.0, 2.0, 2.0]).unwrap();
        assert_close(
            &stationary_distribution(&chain).unwrap(),
            &[4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0],
            1e-15,
        );

        let chain = BirthDeathChain::new(vec![3.0; 5], vec![3.0; 5]).unwrap();
        assert_close(&stationary_distribution(&chain).unwrap(), &[0.2; 5], 1e-15);
    }

    #[test]
    fn global_balance_residual() {
        let up = vec![0.7, 1.3, 2.0, 0.1, 5.0, 0.0];
        let down = vec![0.0, 2.5, 0.4, 1.1, 3.3, 0.9];
        let chain = BirthDeathChain::new(up.clone(), down.clone()).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for y in 0..pi.len() {
            let outflow = pi[y] * (chain.up_rate(y) + chain.down_rate(y));
            let mut inflow = 0.0;
            if y > 0 {
                inflow += pi[y - 1] * chain.up_rate(y - 1);
            }
            if y + 1 < pi.len() {
                inflow += pi[y + 1] * chain.down_rate(y + 1);
            }
            assert!((outflow - inflow).abs() < 1e-12);
        }
    }

    #[test]
    fn reducible_chains() {
        let chain = BirthDeathChain::new(vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(stationary_distribution(&chain), Err(Error::ReducibleChain(_))));
        // from 3 the chain drifts down past 2 into the class {0, 1}
        assert_eq!(chain.recurrent_class_from(3).unwrap(), (0, 1));
        // state 2 is transient with two exits: {0,1} below and {3} above via down[3] = 0
        let chain = BirthDeathChain::new(vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(chain.recurrent_class_from(2).is_err());
        assert_eq!(chain.recurrent_class_from(3).unwrap(), (3, 3));
    }

    #[test]
    fn zero_capacity_policy_cost() {
        let s = single(0, 4.0, 0.5, 1.0, 0.3);
        let p = StationaryPolicy::always_serve(Coalition::singleton(1), 0);
        assert!((exact_policy_cost(&s, Coalition::singleton(1), &p).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_policy_cost_and_enumeration() {
        let s = single(1, 4.0, 1.0, 1.0, 0.0);
        let one = Coalition::singleton(1);
        let p = StationaryPolicy::always_serve(one, 1);
        assert!((exact_policy_cost(&s, one, &p).unwrap() - 2.0).abs() < 1e-15);
        let (best, policy) = brute_force_optimum(&s, one).unwrap();
        assert!((best - 2.0).abs() < 1e-15);
        assert_eq!(policy, p);
    }

    #[test]
    fn huge_holding_cost_never_repairs() {
        let s = single(1, 4.0, 1.0, 1.0, 100.0);
        let (best, policy) = brute_force_optimum(&s, Coalition::singleton(1)).unwrap();
        assert!((best - 4.0).abs() < 1e-12);
        assert!(policy.actions.iter().all(|a| !a.repair[0]));
    }

    #[test]
    fn enumeration_size_cap() {
        let s = single(20, 4.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            brute_force_optimum(&s, Coalition::singleton(1)),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn simulation_basics() {
        let s = single(0, 4.0, 0.5, 1.0, 0.0);
        let one = Coalition::singleton(1);
        let p = StationaryPolicy::always_serve(one, 0);
        let r = simulate(&s, one, &p, 100_000, 7).unwrap();
        assert!(r.covers(2.0), "{r:?}");
        assert_eq!(r, simulate(&s, one, &p, 100_000, 7).unwrap());
        assert!(simulate(&s, one, &p, 10, 7).is_err());
    }

    #[test]
    fn simulation_matches_exact_cost() {
        let s = single(1, 4.0, 1.0, 1.0, 0.0);
        let one = Coalition::singleton(1);
        let p = StationaryPolicy::always_serve(one, 1);
        let r = simulate(&s, one, &p, 1_000_000, 11).unwrap();
        assert!((r.estimate - 2.0).abs() < 4.0 * r.half_width, "{r:?}");
        assert!(r.events >= 1_000_000);
    }
}
