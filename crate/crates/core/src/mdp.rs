//! Uniformized discrete-time MDP of a single coalition.
//!
//! States are on-hand inventory levels `0..=C_S`. Per epoch a demand of
//! member `i` arrives with probability `lambda*_i` and may be accepted
//! (stock drops by one) or rejected (downtime cost `d_i`); a repair of
//! member `i` completes with probability `mu*_i` and may be put on the shelf
//! (stock rises by one) or not. All other probability mass is a self-loop.

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::oracle;
use crate::situation::{coalition_capacity, normalize, NormalizedRates, SparePartsSituation};

/// Largest pooled capacity a coalition solve will accept.
pub const MAX_COALITION_CAPACITY: usize = 10_000;

/// Per-member decisions in one state, indexed by member position (members of
/// the coalition in increasing id order).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionProfile {
    pub accept: Vec<bool>,
    pub repair: Vec<bool>,
}

impl ActionProfile {
    pub fn uniform(members: usize, accept: bool, repair: bool) -> Self {
        ActionProfile {
            accept: vec![accept; members],
            repair: vec![repair; members],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    pub coalition: Coalition,
    pub actions: Vec<ActionProfile>,
}

impl StationaryPolicy {
    pub fn capacity(&self) -> usize {
        self.actions.len() - 1
    }

    /// The reference policy that accepts and repairs wherever allowed.
    pub fn always_serve(coalition: Coalition, capacity: usize) -> Self {
        let m = coalition.len();
        let actions = (0..=capacity)
            .map(|y| ActionProfile::uniform(m, y > 0, y < capacity))
            .collect();
        StationaryPolicy { coalition, actions }
    }

    /// Short description of the policy: per state, accepted and repaired members.
    pub fn summary(&self) -> String {
        let ids: Vec<u32> = self.coalition.ids().collect();
        self.actions
            .iter()
            .enumerate()
            .map(|(y, a)| {
                let pick = |flags: &[bool]| {
                    let chosen: Vec<String> = flags
                        .iter()
                        .zip(&ids)
                        .filter(|(f, _)| **f)
                        .map(|(_, id)| id.to_string())
                        .collect();
                    if chosen.is_empty() {
                        "-".to_string()
                    } else {
                        chosen.join(",")
                    }
                };
                format!("y={y}: accept[{}] repair[{}]", pick(&a.accept), pick(&a.repair))
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Which recursion produced a value table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueFamily {
    Coalition(Coalition),
    Combined,
    Relaxed,
    Anonymized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub family: ValueFamily,
    pub horizon: usize,
    pub values: Vec<f64>,
}

/// One-step distribution from a state: probabilities of moving down, staying
/// and moving up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub down: f64,
    pub stay: f64,
    pub up: f64,
}

impl Transition {
    /// `(next_state, probability)` pairs with nonzero mass.
    pub fn support(&self, y: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(3);
        if self.down > 0.0 {
            out.push((y - 1, self.down));
        }
        if self.stay > 0.0 {
            out.push((y, self.stay));
        }
        if self.up > 0.0 {
            out.push((y + 1, self.up));
        }
        out
    }
}

/// The uniformized MDP of one coalition.
#[derive(Clone, Debug)]
pub struct CoalitionMdp {
    pub coalition: Coalition,
    pub capacity: usize,
    pub gamma: f64,
    pub lambda_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub downtime: Vec<f64>,
    pub h_star: f64,
    /// `1 - sum_{i in S} (lambda*_i + mu*_i)`.
    pub self_loop: f64,
}

impl CoalitionMdp {
    pub fn new(situation: &SparePartsSituation, coalition: Coalition) -> Result<Self> {
        let rates = normalize(situation);
        Self::with_rates(situation, &rates, coalition)
    }

    pub fn with_rates(
        situation: &SparePartsSituation,
        rates: &NormalizedRates,
        coalition: Coalition,
    ) -> Result<Self> {
        let capacity = coalition_capacity(situation, coalition)?;
        let members: Vec<usize> = coalition.indices().collect();
        let lambda_star: Vec<f64> = members.iter().map(|&k| rates.lambda_star[k]).collect();
        let mu_star: Vec<f64> = members.iter().map(|&k| rates.mu_star[k]).collect();
        let outflow: f64 = lambda_star.iter().zip(&mu_star).map(|(l, m)| l + m).sum();
        Ok(CoalitionMdp {
            coalition,
            capacity,
            gamma: rates.gamma,
            downtime: members
                .iter()
                .map(|&k| situation.players[k].downtime_cost)
                .collect(),
            lambda_star,
            mu_star,
            h_star: rates.h_star,
            self_loop: 1.0 - outflow,
        })
    }

    pub fn members(&self) -> usize {
        self.lambda_star.len()
    }

    pub fn states(&self) -> usize {
        self.capacity + 1
    }

    fn check_action(&self, y: usize, a: &ActionProfile) -> Result<()> {
        if y > self.capacity {
            return Err(Error::InfeasibleAction {
                state: y,
                reason: format!("state outside 0..={}", self.capacity),
            });
        }
        if a.accept.len() != self.members() || a.repair.len() != self.members() {
            return Err(Error::DimensionMismatch {
                expected: self.members(),
                actual: a.accept.len().min(a.repair.len()),
            });
        }
        if y == 0 && a.accept.iter().any(|&x| x) {
            return Err(Error::InfeasibleAction {
                state: y,
                reason: "cannot accept a demand with empty stock".into(),
            });
        }
        if y == self.capacity && a.repair.iter().any(|&x| x) {
            return Err(Error::InfeasibleAction {
                state: y,
                reason: "cannot shelve a repaired part at full capacity".into(),
            });
        }
        Ok(())
    }

    /// Expected cost over one epoch in state `y` under `a`.
    pub fn stage_cost(&self, y: usize, a: &ActionProfile) -> Result<f64> {
        self.check_action(y, a)?;
        let mut cost = 0.0;
        for (k, &accept) in a.accept.iter().enumerate() {
            if !accept {
                cost += self.lambda_star[k] * self.downtime[k];
            }
        }
        Ok(cost + self.h_star * y as f64)
    }

    pub fn transition(&self, y: usize, a: &ActionProfile) -> Result<Transition> {
        self.check_action(y, a)?;
        let mut down = 0.0;
        let mut up = 0.0;
        for k in 0..self.members() {
            if a.accept[k] {
                down += self.lambda_star[k];
            }
            if a.repair[k] {
                up += self.mu_star[k];
            }
        }
        Ok(Transition {
            down,
            stay: 1.0 - down - up,
            up,
        })
    }

    /// One application of the finite-horizon recursion: per-member minima over
    /// accept/reject and shelve/idle, holding cost, and the self-loop term.
    pub fn bellman_into(&self, v: &[f64], out: &mut [f64]) {
        let c = self.capacity;
        for y in 0..=c {
            let here = v[y];
            let mut sum = 0.0;
            for k in 0..self.members() {
                let reject = here + self.downtime[k];
                let demand = if y > 0 { v[y - 1].min(reject) } else { reject };
                let repair = if y < c { here.min(v[y + 1]) } else { here };
                sum += self.lambda_star[k] * demand + self.mu_star[k] * repair;
            }
            out[y] = sum + self.h_star * y as f64 + self.self_loop * here;
        }
    }

    pub fn bellman(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.bellman_into(v, &mut out);
        out
    }

    /// Value tables `V_0, ..., V_T`.
    pub fn history(&self, horizon: usize) -> Vec<Vec<f64>> {
        let mut tables = Vec::with_capacity(horizon + 1);
        tables.push(vec![0.0; self.states()]);
        for t in 0..horizon {
            let next = self.bellman(&tables[t]);
            tables.push(next);
        }
        tables
    }

    /// Greedy policy with respect to `values`; ties go to accepting and shelving.
    pub fn greedy_policy(&self, values: &[f64]) -> StationaryPolicy {
        let c = self.capacity;
        let actions = (0..=c)
            .map(|y| ActionProfile {
                accept: self
                    .downtime
                    .iter()
                    .map(|d| y > 0 && values[y - 1] <= values[y] + d)
                    .collect(),
                repair: vec![y < c && values[y + 1] <= values[y]; self.members()],
            })
            .collect();
        StationaryPolicy {
            coalition: self.coalition,
            actions,
        }
    }
}

pub fn stage_cost(
    situation: &SparePartsSituation,
    coalition: Coalition,
    y: usize,
    a: &ActionProfile,
) -> Result<f64> {
    CoalitionMdp::new(situation, coalition)?.stage_cost(y, a)
}

pub fn transition(
    situation: &SparePartsSituation,
    coalition: Coalition,
    y: usize,
    a: &ActionProfile,
) -> Result<Transition> {
    CoalitionMdp::new(situation, coalition)?.transition(y, a)
}

/// Finite-horizon value table `V^S_T` from `V^S_0 = 0`.
pub fn value_iterate(
    situation: &SparePartsSituation,
    coalition: Coalition,
    horizon: usize,
) -> Result<ValueTable> {
    let mdp = CoalitionMdp::new(situation, coalition)?;
    let mut v = vec![0.0; mdp.states()];
    let mut next = v.clone();
    for _ in 0..horizon {
        mdp.bellman_into(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    Ok(ValueTable {
        family: ValueFamily::Coalition(coalition),
        horizon,
        values: v,
    })
}

/// Argmin actions of the recursion at the table's values.
pub fn extract_policy(
    table: &ValueTable,
    situation: &SparePartsSituation,
    coalition: Coalition,
) -> Result<StationaryPolicy> {
    let mdp = CoalitionMdp::new(situation, coalition)?;
    if table.values.len() != mdp.states() {
        return Err(Error::DimensionMismatch {
            expected: mdp.states(),
            actual: table.values.len(),
        });
    }
    Ok(mdp.greedy_policy(&table.values))
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Target optimality gap per epoch.
    pub tol: f64,
    pub max_iterations: usize,
    /// Weight of the previous iterate in the damped g-estimation loop.
    pub damping: f64,
    /// How often (in iterations) the greedy policy is certified.
    pub certify_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iterations: 1_000_000,
            damping: 0.01,
            certify_every: 32,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageCostResult {
    pub coalition: Coalition,
    /// Optimal average cost per uniformized epoch.
    pub g_per_epoch: f64,
    /// Optimal average cost per time unit, `gamma * g`.
    pub c_per_time_unit: f64,
    /// Upper bound on `c_per_time_unit - c^*(S)`, per time unit.
    pub certified_gap: f64,
    /// Certified bracket on the optimal cost per time unit.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub iterations: usize,
    /// Width of the interval, shared by every start state, that is certified to
    /// contain `gamma * lim V_t(y) / t` (from the undamped recursion).
    pub state_spread: f64,
    /// `gamma * (max_y V_t(y) - min_y V_t(y)) / t` at the final undamped horizon.
    pub finite_spread: f64,
    pub policy: StationaryPolicy,
}

fn min_max_diff(new: &[f64], old: &[f64]) -> (f64, f64) {
    new.iter()
        .zip(old)
        .map(|(a, b)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

fn span(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

fn shift_to_zero(v: &mut [f64]) {
    let base = v[0];
    v.iter_mut().for_each(|x| *x -= base);
}

/// Optimal long-run average cost of a coalition.
///
/// A damped relative value iteration brackets `g` by the span method and
/// supplies a greedy policy, which is evaluated exactly through its
/// birth-death stationary distribution. The undamped recursion runs
/// alongside; its bracket certifies that `V_t(y)/t` has a common limit.
pub fn average_cost(
    situation: &SparePartsSituation,
    coalition: Coalition,
    opts: &SolveOptions,
) -> Result<AverageCostResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::Precondition("tol must be > 0".into()));
    }
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::Precondition("damping must lie in [0, 1)".into()));
    }
    let mdp = CoalitionMdp::new(situation, coalition)?;
    if mdp.capacity > MAX_COALITION_CAPACITY {
        return Err(Error::SizeCap {
            what: "coalition capacity",
            actual: mdp.capacity as u128,
            limit: MAX_COALITION_CAPACITY as u128,
        });
    }
    let gamma = mdp.gamma;
    let tau = opts.damping;
    let states = mdp.states();

    let mut damped = vec![0.0; states];
    let mut damped_next = vec![0.0; states];
    let mut plain = vec![0.0; states];
    let mut plain_next = vec![0.0; states];

    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut plain_lo = f64::NEG_INFINITY;
    let mut plain_hi = f64::INFINITY;
    let mut plain_span = 0.0;
    let mut certified: Option<(f64, StationaryPolicy)> = None;
    let mut last_gap = f64::INFINITY;

    let mut t = 0;
    while t < opts.max_iterations {
        t += 1;

        if certified.is_none() {
            mdp.bellman_into(&damped, &mut damped_next);
            for (next, old) in damped_next.iter_mut().zip(&damped) {
                *next = (1.0 - tau) * *next + tau * old;
            }
            let (lo, hi) = min_max_diff(&damped_next, &damped);
            lower = lower.max(lo / (1.0 - tau));
            upper = upper.min(hi / (1.0 - tau));
            shift_to_zero(&mut damped_next);
            std::mem::swap(&mut damped, &mut damped_next);
        }

        mdp.bellman_into(&plain, &mut plain_next);
        let (lo, hi) = min_max_diff(&plain_next, &plain);
        plain_lo = plain_lo.max(lo);
        plain_hi = plain_hi.min(hi);
        lower = lower.max(lo);
        upper = upper.min(hi);
        plain_span = span(&plain_next);
        shift_to_zero(&mut plain_next);
        std::mem::swap(&mut plain, &mut plain_next);

        if certified.is_none() && (upper - lower <= opts.tol || t % opts.certify_every == 0) {
            let policy = mdp.greedy_policy(&damped);
            let cost = oracle::exact_policy_cost(situation, coalition, &policy)?;
            last_gap = (cost / gamma - lower).max(0.0);
            if last_gap <= opts.tol {
                certified = Some((cost, policy));
            }
        }
        if certified.is_some() && plain_hi - plain_lo <= opts.tol {
            break;
        }
    }

    let Some((cost, policy)) = certified else {
        return Err(Error::NonConvergence {
            coalition,
            iterations: t,
            gap: last_gap,
            width: upper - lower,
        });
    };
    let lower_bound = gamma * lower;
    Ok(AverageCostResult {
        coalition,
        g_per_epoch: cost / gamma,
        c_per_time_unit: cost,
        certified_gap: (cost - lower_bound).max(0.0),
        lower_bound,
        upper_bound: gamma * upper.min(cost / gamma),
        iterations: t,
        state_spread: gamma * (plain_hi - plain_lo).max(0.0),
        finite_spread: gamma * plain_span / t as f64,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::situation::{parse_situation, PlayerSpec};

    fn canonical() -> SparePartsSituation {
        parse_situation(
            r#"{"players": [
                {"id": 1, "capacity": 1, "downtime_cost": 4, "arrival_rate": 0.5, "repair_rate": 1.0},
                {"id": 2, "capacity": 2, "downtime_cost": 2, "arrival_rate": 1.0, "repair_rate": 1.5}
            ], "holding_cost": 0.3}"#,
        )
        .unwrap()
    }

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

    #[test]
    fn stage_costs() {
        let s = canonical();
        let one = Coalition::singleton(1);
        let reject = ActionProfile::uniform(1, false, true);
        assert!((stage_cost(&s, one, 0, &reject).unwrap() - 0.5).abs() < 1e-15);
        let accept = ActionProfile::uniform(1, true, false);
        assert!((stage_cost(&s, one, 1, &accept).unwrap() - 0.075).abs() < 1e-15);
        let both = ActionProfile::uniform(2, true, true);
        let c = stage_cost(&s, Coalition::grand(2), 2, &both).unwrap();
        assert!((c - 0.15).abs() < 1e-15);
    }

    #[test]
    fn boundary_actions_are_enforced() {
        let s = canonical();
        let one = Coalition::singleton(1);
        let err = stage_cost(&s, one, 0, &ActionProfile::uniform(1, true, false)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleAction { state: 0, .. }));
        let err = transition(&s, one, 1, &ActionProfile::uniform(1, true, true)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleAction { state: 1, .. }));
    }

    #[test]
    fn transitions() {
        let s = canonical();
        let one = Coalition::singleton(1);
        let p = transition(&s, one, 1, &ActionProfile::uniform(1, true, false)).unwrap();
        assert_eq!((p.down, p.stay, p.up), (0.125, 0.875, 0.0));
        let p = transition(&s, one, 0, &ActionProfile::uniform(1, false, true)).unwrap();
        assert_eq!((p.down, p.stay, p.up), (0.0, 0.75, 0.25));
        let mdp = CoalitionMdp::new(&s, Coalition::grand(2)).unwrap();
        for y in 0..=3 {
            for bits in 0..16u8 {
                let a = ActionProfile {
                    accept: vec![y > 0 && bits & 1 != 0, y > 0 && bits & 2 != 0],
                    repair: vec![y < 3 && bits & 4 != 0, y < 3 && bits & 8 != 0],
                };
                let p = mdp.transition(y, &a).unwrap();
                let total: f64 = p.support(y).iter().map(|(_, q)| q).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_steps_of_the_recursion() {
        let s = canonical();
        let one = Coalition::singleton(1);
        let v0 = value_iterate(&s, one, 0).unwrap();
        assert_eq!(v0.values, vec![0.0, 0.0]);
        let v1 = value_iterate(&s, one, 1).unwrap();
        assert!((v1.values[0] - 0.5).abs() < 1e-15);
        assert!((v1.values[1] - 0.075).abs() < 1e-15);
    }

    /// Independent two-step evaluation: enumerate every action in each state
    /// and take the cheapest one-step lookahead.
    #[test]
    fn second_step_matches_enumeration() {
        let s = canonical();
        let one = Coalition::singleton(1);
        let mdp = CoalitionMdp::new(&s, one).unwrap();
        let mut v = vec![0.0, 0.0];
        for _ in 0..2 {
            let mut next = vec![0.0; 2];
            for y in 0..2usize {
                let mut best = f64::INFINITY;
                for accept in [false, true] {
                    for repair in [false, true] {
                        if (accept && y == 0) || (repair && y == 1) {
                            continue;
                        }
                        let a = ActionProfile::uniform(1, accept, repair);
                        let p = mdp.transition(y, &a).unwrap();
                        let cost = mdp.stage_cost(y, &a).unwrap()
                            + p.support(y).iter().map(|&(z, q)| q * v[z]).sum::<f64>();
                        best = best.min(cost);
                    }
                }
                next[y] = best;
            }
            v = next;
        }
        let table = value_iterate(&s, one, 2).unwrap();
        for y in 0..2 {
            assert!((table.values[y] - v[y]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_capacity_is_closed_form() {
        let s = single(0, 4.0, 0.5, 1.0, 0.3);
        let r = average_cost(&s, Coalition::singleton(1), &SolveOptions::default()).unwrap();
        assert!((r.c_per_time_unit - 2.0).abs() < 1e-12);
        assert_eq!(r.policy.actions, vec![ActionProfile::uniform(1, false, false)]);
    }

    #[test]
    fn symmetric_single_player() {
        let s = single(1, 4.0, 1.0, 1.0, 0.0);
        let r = average_cost(&s, Coalition::singleton(1), &SolveOptions::default()).unwrap();
        assert!((r.c_per_time_unit - 2.0).abs() < 1e-9);
        assert!(r.certified_gap <= 1e-9 * 2.0);
        assert_eq!(r.policy, StationaryPolicy::always_serve(Coalition::singleton(1), 1));
        assert!((r.c_per_time_unit - 2.0 * r.g_per_epoch).abs() < 1e-12);
    }

    #[test]
    fn expensive_holding_stops_repairs() {
        let s = single(1, 4.0, 1.0, 1.0, 100.0);
        let r = average_cost(&s, Coalition::singleton(1), &SolveOptions::default()).unwrap();
        assert!(r.policy.actions.iter().all(|a| a.repair.iter().all(|&x| !x)));
        assert!((r.c_per_time_unit - 4.0).abs() < 1e-9);
    }

    #[test]
    fn cost_bound_from_reference_policy() {
        let s = canonical();
        for c in Coalition::all_nonempty(2) {
            let r = average_cost(&s, c, &SolveOptions::default()).unwrap();
            let lambda_s: f64 = c.indices().map(|k| s.players[k].arrival_rate).sum();
            let dmax = c
                .indices()
                .map(|k| s.players[k].downtime_cost)
                .fold(0.0, f64::max);
            let cap = coalition_capacity(&s, c).unwrap() as f64;
            assert!(r.c_per_time_unit <= lambda_s * dmax + s.holding_cost * cap + 1e-9);
            assert!(r.lower_bound <= r.c_per_time_unit && r.c_per_time_unit <= r.upper_bound + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let s = canonical();
        let opts = SolveOptions::with_tol(0.0);
        assert!(matches!(
            average_cost(&s, Coalition::grand(2), &opts),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let s = canonical();
        let opts = SolveOptions {
            max_iterations: 3,
            ..Default::default()
        };
        assert!(matches!(
            average_cost(&s, Coalition::grand(2), &opts),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
    }
}
