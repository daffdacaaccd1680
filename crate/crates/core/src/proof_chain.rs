//! Finite-horizon value functions behind the balancedness argument, and a
//! state-by-state checker for the relations between them.
//!
//! For a minimal balanced collection `B` with weights `b_S` and scale
//! `alpha`, every `S in B` is copied `b_S` times. The *combined* recursion
//! runs all copies side by side on the product of their inventories; each
//! demand of player `i` may draw one part from any copy containing `i`, and
//! `alpha - (parts drawn)` copies pay the downtime cost. The *relaxed*
//! recursion lets demands draw (and repairs return) up to `alpha` parts from
//! any copies at all. The *anonymized* recursion tracks only total inventory
//! `j in 0..=alpha C_N`, with batch demands and returns of up to `alpha`.
//!
//! The relaxed and anonymized steps evaluate the same floating-point
//! expressions in the same order as the combined step, so the relations
//! between them that hold in exact arithmetic also hold bit for bit.

use num_bigint::BigInt;
use num_traits::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::core_solver::{enumerate_minimal_balanced, BalancedCollection};
use crate::error::{Error, Result};
use crate::exact::ExactRecursion;
use crate::mdp::{average_cost, CoalitionMdp, SolveOptions, ValueFamily, ValueTable};
use crate::situation::{coalition_capacity, normalize, SparePartsSituation};

/// Largest product state space the combined and relaxed recursions accept.
pub const MAX_PRODUCT_STATES: u128 = 2_000_000;
/// Largest horizon accepted by [`verify_chain`].
pub const MAX_HORIZON: usize = 1_000;
/// Tolerance for the inequalities.
pub const INEQUALITY_TOL: f64 = 1e-12;
/// States examined by the action-set inclusion check.
const INCLUSION_SAMPLE: usize = 10_000;
/// Product spaces at least this large are stepped in parallel.
const PARALLEL_STATES: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCoalition {
    pub coalition: Coalition,
    /// Copy number, `1..=b_S`.
    pub copy: u64,
    pub capacity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCoalitionSet {
    pub alpha: u64,
    /// Ordered by coalition bitmask, then copy number.
    pub entries: Vec<LabeledCoalition>,
}

impl LabeledCoalitionSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `prod_z (C_z + 1)`, saturating.
    pub fn product_states(&self) -> u128 {
        self.entries
            .iter()
            .fold(1u128, |acc, e| acc.saturating_mul(e.capacity as u128 + 1))
    }

    pub fn total_capacity(&self) -> usize {
        self.entries.iter().map(|e| e.capacity).sum()
    }
}

pub fn labeled_coalitions(
    situation: &SparePartsSituation,
    collection: &BalancedCollection,
) -> Result<LabeledCoalitionSet> {
    let mut pairs: Vec<(Coalition, u64)> = collection
        .sets
        .iter()
        .copied()
        .zip(collection.weights.iter().copied())
        .collect();
    pairs.sort_by_key(|(s, _)| s.mask());
    let mut entries = Vec::new();
    for (s, b) in pairs {
        let capacity = coalition_capacity(situation, s)?;
        for copy in 1..=b {
            entries.push(LabeledCoalition {
                coalition: s,
                copy,
                capacity,
            });
        }
    }
    Ok(LabeledCoalitionSet {
        alpha: collection.alpha,
        entries,
    })
}

/// Mixed-radix indexing of product states; the first labeled coalition is
/// the most significant digit.
#[derive(Clone, Debug)]
struct ProductSpace {
    caps: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
    /// Digits of every state, `size x caps.len()`.
    digits: Vec<usize>,
    norms: Vec<usize>,
}

impl ProductSpace {
    fn new(caps: Vec<usize>) -> Self {
        let l = caps.len();
        let mut strides = vec![1; l];
        for z in (0..l.saturating_sub(1)).rev() {
            strides[z] = strides[z + 1] * (caps[z + 1] + 1);
        }
        let size = caps.iter().map(|c| c + 1).product();
        let mut digits = Vec::with_capacity(size * l);
        let mut norms = Vec::with_capacity(size);
        let mut r = vec![0usize; l];
        for _ in 0..size {
            digits.extend_from_slice(&r);
            norms.push(r.iter().sum());
            for z in (0..l).rev() {
                if r[z] < caps[z] {
                    r[z] += 1;
                    break;
                }
                r[z] = 0;
            }
        }
        ProductSpace {
            caps,
            strides,
            size,
            digits,
            norms,
        }
    }

    fn state(&self, s: usize) -> &[usize] {
        let l = self.caps.len();
        &self.digits[s * l..(s + 1) * l]
    }

    fn index(&self, r: &[usize]) -> usize {
        r.iter().zip(&self.strides).map(|(a, b)| a * b).sum()
    }
}

fn fill(out: &mut [f64], f: impl Fn(usize) -> f64 + Sync) {
    if out.len() >= PARALLEL_STATES {
        out.par_iter_mut().enumerate().for_each(|(s, o)| *o = f(s));
    } else {
        out.iter_mut().enumerate().for_each(|(s, o)| *o = f(s));
    }
}

/// Everything the three recursions share for one situation and collection.
#[derive(Clone, Debug)]
pub struct ChainModel {
    pub labeled: LabeledCoalitionSet,
    pub gamma: f64,
    lambda_star: Vec<f64>,
    mu_star: Vec<f64>,
    downtime: Vec<f64>,
    h_star: f64,
    alpha: usize,
    grand_capacity: usize,
    /// Per player, the labeled coalitions containing it.
    copies_of: Vec<Vec<usize>>,
    space: ProductSpace,
}

impl ChainModel {
    pub fn new(situation: &SparePartsSituation, collection: &BalancedCollection) -> Result<Self> {
        let labeled = labeled_coalitions(situation, collection)?;
        let states = labeled.product_states();
        if states > MAX_PRODUCT_STATES {
            return Err(Error::SizeCap {
                what: "product state space of the labeled coalitions",
                actual: states,
                limit: MAX_PRODUCT_STATES,
            });
        }
        let rates = normalize(situation);
        let n = situation.n();
        let copies_of = (0..n)
            .map(|i| {
                labeled
                    .entries
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.coalition.contains_index(i))
                    .map(|(z, _)| z)
                    .collect()
            })
            .collect();
        let space = ProductSpace::new(labeled.entries.iter().map(|e| e.capacity).collect());
        Ok(ChainModel {
            alpha: labeled.alpha as usize,
            grand_capacity: coalition_capacity(situation, situation.grand_coalition())?,
            labeled,
            gamma: rates.gamma,
            lambda_star: rates.lambda_star,
            mu_star: rates.mu_star,
            downtime: situation.players.iter().map(|p| p.downtime_cost).collect(),
            h_star: rates.h_star,
            copies_of,
            space,
        })
    }

    pub fn product_states(&self) -> usize {
        self.space.size
    }

    /// Largest total inventory, `alpha C_N`.
    pub fn anonymized_max(&self) -> usize {
        self.alpha * self.grand_capacity
    }

    /// Product state index of an inventory vector.
    pub fn state_index(&self, r: &[usize]) -> Option<usize> {
        (r.len() == self.space.caps.len() && r.iter().zip(&self.space.caps).all(|(a, c)| a <= c))
            .then(|| self.space.index(r))
    }

    pub fn state(&self, s: usize) -> Vec<usize> {
        self.space.state(s).to_vec()
    }

    /// Withdrawal (`sign = -1`) or return (`+1`) vectors allowed for player
    /// `i` in the combined recursion: one part per copy containing `i`, where
    /// stock (or room) allows.
    pub fn combined_actions(&self, s: usize, i: usize, sign: i32) -> Vec<Vec<usize>> {
        let r = self.space.state(s);
        let open: Vec<usize> = self.copies_of[i]
            .iter()
            .copied()
            .filter(|&z| if sign < 0 { r[z] >= 1 } else { r[z] < self.space.caps[z] })
            .collect();
        (0..1usize << open.len())
            .map(|mask| {
                let mut l = vec![0; r.len()];
                for (b, &z) in open.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        l[z] = 1;
                    }
                }
                l
            })
            .collect()
    }

    /// Membership in the relaxed action set: at most `alpha` parts in total,
    /// and the resulting inventory stays within every copy's bounds.
    pub fn relaxed_admissible(&self, s: usize, l: &[usize], sign: i32) -> bool {
        let r = self.space.state(s);
        l.len() == r.len()
            && l.iter().sum::<usize>() <= self.alpha
            && l.iter().zip(r).zip(&self.space.caps).all(|((&lz, &rz), &cz)| {
                if sign < 0 {
                    lz <= rz
                } else {
                    rz + lz <= cz
                }
            })
    }

    fn player_term(&self, i: usize, demand: f64, ret: f64) -> f64 {
        self.lambda_star[i] * demand + self.mu_star[i] * ret
    }

    fn demand_cost(&self, i: usize, drawn: usize, next: f64) -> f64 {
        (self.alpha - drawn) as f64 * self.downtime[i] + next
    }

    pub fn combined_step(&self, v: &[f64], out: &mut [f64]) {
        fill(out, |s| {
            let r = self.space.state(s);
            let mut sum = 0.0;
            for (i, copies) in self.copies_of.iter().enumerate() {
                let down: Vec<usize> = copies.iter().copied().filter(|&z| r[z] >= 1).collect();
                let mut demand = f64::INFINITY;
                for mask in 0..1usize << down.len() {
                    let offset: usize = bits(mask, &down).map(|z| self.space.strides[z]).sum();
                    let drawn = mask.count_ones() as usize;
                    demand = demand.min(self.demand_cost(i, drawn, v[s - offset]));
                }
                let up: Vec<usize> = copies
                    .iter()
                    .copied()
                    .filter(|&z| r[z] < self.space.caps[z])
                    .collect();
                let mut ret = f64::INFINITY;
                for mask in 0..1usize << up.len() {
                    let offset: usize = bits(mask, &up).map(|z| self.space.strides[z]).sum();
                    ret = ret.min(v[s + offset]);
                }
                sum += self.player_term(i, demand, ret);
            }
            sum + self.h_star * self.space.norms[s] as f64
        });
    }

    /// Minimum of `v` over states reachable by moving exactly `k` parts, for
    /// every `k <= alpha`, searching withdrawal (`sign < 0`) or return vectors.
    fn moved_minima(&self, v: &[f64], s: usize, sign: i32) -> Vec<f64> {
        let r = self.space.state(s);
        let room: Vec<usize> = r
            .iter()
            .zip(&self.space.caps)
            .map(|(&rz, &cz)| if sign < 0 { rz } else { cz - rz })
            .collect();
        let reach = self.alpha.min(room.iter().sum());
        let mut best = vec![f64::INFINITY; reach + 1];
        self.compositions(v, s, sign, &room, 0, 0, 0, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn compositions(
        &self,
        v: &[f64],
        s: usize,
        sign: i32,
        room: &[usize],
        z: usize,
        used: usize,
        offset: usize,
        best: &mut [f64],
    ) {
        if z == room.len() {
            let next = if sign < 0 { s - offset } else { s + offset };
            best[used] = best[used].min(v[next]);
            return;
        }
        let most = room[z].min(best.len() - 1 - used);
        for k in 0..=most {
            let step = offset + k * self.space.strides[z];
            self.compositions(v, s, sign, room, z + 1, used + k, step, best);
        }
    }

    pub fn relaxed_step(&self, v: &[f64], out: &mut [f64]) {
        fill(out, |s| {
            let down = self.moved_minima(v, s, -1);
            let up = self.moved_minima(v, s, 1);
            let ret = up.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for i in 0..self.downtime.len() {
                let demand = down
                    .iter()
                    .enumerate()
                    .map(|(k, &m)| self.demand_cost(i, k, m))
                    .fold(f64::INFINITY, f64::min);
                sum += self.player_term(i, demand, ret);
            }
            sum + self.h_star * self.space.norms[s] as f64
        });
    }

    pub fn anonymized_step(&self, v: &[f64], out: &mut [f64]) {
        let top = self.anonymized_max();
        let a = self.alpha;
        fill(out, |j| {
            let ret = (0..=a.min(top - j)).map(|l| v[j + l]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for i in 0..self.downtime.len() {
                let demand = (0..=a.min(j))
                    .map(|l| self.demand_cost(i, l, v[j - l]))
                    .fold(f64::INFINITY, f64::min);
                sum += self.player_term(i, demand, ret);
            }
            sum + self.h_star * j as f64
        });
    }
}

fn bits(mask: usize, items: &[usize]) -> impl Iterator<Item = usize> + '_ {
    items
        .iter()
        .enumerate()
        .filter(move |(b, _)| mask & (1 << b) != 0)
        .map(|(_, &z)| z)
}

fn iterate(
    states: usize,
    horizon: usize,
    family: ValueFamily,
    step: impl Fn(&[f64], &mut [f64]),
) -> ValueTable {
    let mut v = vec![0.0; states];
    let mut next = v.clone();
    for _ in 0..horizon {
        step(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    ValueTable {
        family,
        horizon,
        values: v,
    }
}

/// Combined value table at horizon `T`, indexed by product state.
pub fn combined_value(
    situation: &SparePartsSituation,
    collection: &BalancedCollection,
    horizon: usize,
) -> Result<ValueTable> {
    let m = ChainModel::new(situation, collection)?;
    Ok(iterate(m.product_states(), horizon, ValueFamily::Combined, |v, o| {
        m.combined_step(v, o)
    }))
}

/// Relaxed value table at horizon `T`, indexed by product state.
pub fn relaxed_value(
    situation: &SparePartsSituation,
    collection: &BalancedCollection,
    horizon: usize,
) -> Result<ValueTable> {
    let m = ChainModel::new(situation, collection)?;
    Ok(iterate(m.product_states(), horizon, ValueFamily::Relaxed, |v, o| {
        m.relaxed_step(v, o)
    }))
}

/// Anonymized value table at horizon `T`, indexed by total inventory `j`.
pub fn anonymized_value(
    situation: &SparePartsSituation,
    collection: &BalancedCollection,
    horizon: usize,
) -> Result<ValueTable> {
    let m = ChainModel::new(situation, collection)?;
    Ok(iterate(m.anonymized_max() + 1, horizon, ValueFamily::Anonymized, |v, o| {
        m.anonymized_step(v, o)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Equality,
    Inequality,
    Inclusion,
}

/// Number system a check was evaluated in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    Float,
    /// Integer-scaled exact rationals (see [`crate::exact`]).
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub id: String,
    pub kind: CheckKind,
    pub arithmetic: Arithmetic,
    pub t_max: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Where the largest violation occurred, when the check fails.
    pub witness: Option<String>,
    /// For exactly evaluated checks, the largest violation seen in the
    /// binary64 tables (rounding noise only).
    pub float_violation: Option<f64>,
}

/// Horizon-`T` rates against the limit they approach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub horizon: usize,
    /// `gamma / T * sum over copies of V^S_T(C_S)`.
    pub copies_rate: f64,
    /// `gamma / T * alpha V^N_T(C_N)`.
    pub grand_rate: f64,
    /// `sum_S b_S c(S)` from the average-cost solver.
    pub limit: Option<f64>,
    /// `|copies_rate - limit|`.
    pub drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub collection: BalancedCollection,
    pub horizon: usize,
    pub labeled_copies: usize,
    pub product_states: usize,
    pub checks: Vec<LemmaCheck>,
    pub rate: Option<RateCheck>,
    pub pass: bool,
}

impl LemmaReport {
    pub fn check(&self, id: &str) -> Option<&LemmaCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Identifiers of the checks, in report order.
pub const CHECK_IDS: [&str; 8] = [
    "copy_sum",
    "action_inclusion",
    "relaxation_bound",
    "anonymization",
    "convexity",
    "block_linearity",
    "uncopy",
    "conclusion",
];

struct Tracker {
    id: &'static str,
    kind: CheckKind,
    arithmetic: Arithmetic,
    float_violation: Option<f64>,
    tolerance: f64,
    worst: f64,
    witness: Option<String>,
}

impl Tracker {
    fn new(id: &'static str, kind: CheckKind, tolerance: f64) -> Self {
        Tracker {
            id,
            kind,
            arithmetic: Arithmetic::Float,
            float_violation: None,
            tolerance,
            worst: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, violation: f64, at: impl FnOnce() -> String) {
        if violation > self.worst || violation.is_nan() {
            self.worst = if violation.is_nan() { f64::INFINITY } else { violation };
            self.witness = Some(at());
        }
    }

    fn exact(mut self) -> Self {
        self.arithmetic = Arithmetic::Exact;
        self.float_violation = Some(0.0);
        self
    }

    fn record_float(&mut self, violation: f64) {
        if let Some(v) = self.float_violation.as_mut() {
            *v = v.max(violation);
        }
    }

    fn finish(self, t_max: usize) -> LemmaCheck {
        let pass = self.worst <= self.tolerance;
        LemmaCheck {
            id: self.id.to_string(),
            kind: self.kind,
            arithmetic: self.arithmetic,
            t_max,
            max_violation: self.worst,
            tolerance: self.tolerance,
            pass,
            witness: if pass { None } else { self.witness },
            float_violation: self.float_violation,
        }
    }
}

fn fmt_state(r: &[usize]) -> String {
    let parts: Vec<String> = r.iter().map(|x| x.to_string()).collect();
    format!("r=({})", parts.join(","))
}

/// Runs every recursion up to `horizon` and checks, at each `t` and every
/// state, the relations between them. `tol` applies to equalities; the
/// inequalities use [`INEQUALITY_TOL`].
///
/// The convexity and conclusion inequalities are tight (zero slack) on some
/// instances, e.g. when no player stores parts, so they are evaluated on
/// exact tables; binary64 rounding alone can exceed `1e-12` there at long
/// horizons. The float violation is still reported alongside.
pub fn verify_chain(
    situation: &SparePartsSituation,
    collection: &BalancedCollection,
    horizon: usize,
    tol: f64,
) -> Result<LemmaReport> {
    if horizon > MAX_HORIZON {
        return Err(Error::SizeCap {
            what: "horizon",
            actual: horizon as u128,
            limit: MAX_HORIZON as u128,
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be > 0, got {tol}")));
    }
    let model = ChainModel::new(situation, collection)?;
    let rates = normalize(situation);
    let grand = situation.grand_coalition();
    let alpha = model.alpha;
    let cn = model.grand_capacity;
    let top = model.anonymized_max();

    // coalition recursions: every distinct S in B, plus N
    let mut coalitions: Vec<Coalition> = collection.sets.clone();
    if !coalitions.contains(&grand) {
        coalitions.push(grand);
    }
    let mdps: Vec<CoalitionMdp> = coalitions
        .iter()
        .map(|&s| CoalitionMdp::with_rates(situation, &rates, s))
        .collect::<Result<_>>()?;
    let grand_pos = coalitions.iter().position(|&s| s == grand).unwrap();
    let copy_owner: Vec<usize> = model
        .labeled
        .entries
        .iter()
        .map(|e| coalitions.iter().position(|&s| s == e.coalition).unwrap())
        .collect();

    let mut coal: Vec<Vec<f64>> = mdps.iter().map(|m| vec![0.0; m.states()]).collect();
    let mut coal_next = coal.clone();
    let size = model.product_states();
    let (mut comb, mut comb_next) = (vec![0.0; size], vec![0.0; size]);
    let (mut relax, mut relax_next) = (vec![0.0; size], vec![0.0; size]);
    let (mut anon, mut anon_next) = (vec![0.0; top + 1], vec![0.0; top + 1]);

    let mut copy_sum = Tracker::new(CHECK_IDS[0], CheckKind::Equality, tol);
    let mut inclusion = Tracker::new(CHECK_IDS[1], CheckKind::Inclusion, 0.0);
    let mut relaxation = Tracker::new(CHECK_IDS[2], CheckKind::Inequality, INEQUALITY_TOL);
    let mut anonymization = Tracker::new(CHECK_IDS[3], CheckKind::Equality, tol);
    let mut convexity = Tracker::new(CHECK_IDS[4], CheckKind::Inequality, INEQUALITY_TOL).exact();
    let mut linearity = Tracker::new(CHECK_IDS[5], CheckKind::Equality, tol);
    let mut uncopy = Tracker::new(CHECK_IDS[6], CheckKind::Equality, tol);
    let mut conclusion = Tracker::new(CHECK_IDS[7], CheckKind::Inequality, INEQUALITY_TOL).exact();
    let mut exact_coal: Vec<ExactRecursion> = coalitions
        .iter()
        .map(|&s| ExactRecursion::coalition(situation, s))
        .collect::<Result<_>>()?;
    let mut exact_anon = ExactRecursion::anonymized(situation, alpha)?;

    // action-set inclusion does not depend on t
    let stride = (size / INCLUSION_SAMPLE).max(1);
    for s in (0..size).step_by(stride) {
        for i in 0..situation.n() {
            for sign in [-1, 1] {
                let bad = model
                    .combined_actions(s, i, sign)
                    .iter()
                    .filter(|l| !model.relaxed_admissible(s, l, sign))
                    .count();
                inclusion.record(bad as f64, || {
                    format!("{} player {} {}", fmt_state(model.space.state(s)), i + 1, if sign < 0 { "demand" } else { "return" })
                });
            }
        }
    }

    let full: Vec<usize> = model.labeled.entries.iter().map(|e| e.capacity).collect();
    for t in 0..=horizon {
        if t > 0 {
            for (k, m) in mdps.iter().enumerate() {
                m.bellman_into(&coal[k], &mut coal_next[k]);
            }
            std::mem::swap(&mut coal, &mut coal_next);
            model.combined_step(&comb, &mut comb_next);
            std::mem::swap(&mut comb, &mut comb_next);
            model.relaxed_step(&relax, &mut relax_next);
            std::mem::swap(&mut relax, &mut relax_next);
            model.anonymized_step(&anon, &mut anon_next);
            std::mem::swap(&mut anon, &mut anon_next);
            exact_coal.par_iter_mut().for_each(|e| e.step());
            exact_anon.step();
        }

        for s in 0..size {
            let r = model.space.state(s);
            let copies: f64 = r
                .iter()
                .zip(&copy_owner)
                .map(|(&rz, &k)| coal[k][rz])
                .sum();
            copy_sum.record((copies - comb[s]).abs(), || format!("t={t} {}", fmt_state(r)));
            relaxation.record(relax[s] - comb[s], || format!("t={t} {}", fmt_state(r)));
            anonymization.record((relax[s] - anon[model.space.norms[s]]).abs(), || {
                format!("t={t} {}", fmt_state(r))
            });
        }
        let w = &exact_anon.values;
        for j in 0..top.saturating_sub(1) {
            convexity.record_float(2.0 * anon[j + 1] - anon[j] - anon[j + 2]);
            let excess = BigInt::from(2) * &w[j + 1] - &w[j] - &w[j + 2];
            if excess.is_positive() {
                convexity.record(exact_anon.to_f64(&excess), || format!("t={t} j={j}"));
            }
        }
        for k in 0..cn {
            for j in 0..alpha.saturating_sub(1) {
                let at = k * alpha + j;
                let second = anon[at] + anon[at + 2] - 2.0 * anon[at + 1];
                linearity.record(second.abs(), || format!("t={t} j={at}"));
            }
        }
        let vn = &coal[grand_pos];
        for k in 0..=cn {
            uncopy.record((anon[k * alpha] - alpha as f64 * vn[k]).abs(), || {
                format!("t={t} j={}", k * alpha)
            });
        }
        let lhs: f64 = full.iter().zip(&copy_owner).map(|(&c, &k)| coal[k][c]).sum();
        conclusion.record_float(alpha as f64 * vn[cn] - lhs);
        let exact_lhs: BigInt = full
            .iter()
            .zip(&copy_owner)
            .map(|(&c, &k)| &exact_coal[k].values[c])
            .sum();
        let shortfall = BigInt::from(alpha) * &exact_coal[grand_pos].values[cn] - exact_lhs;
        if shortfall.is_positive() {
            conclusion.record(exact_anon.to_f64(&shortfall), || format!("t={t} {}", fmt_state(&full)));
        }
    }

    let rate = (horizon > 0).then(|| {
        let scale = model.gamma / horizon as f64;
        let lhs: f64 = full.iter().zip(&copy_owner).map(|(&c, &k)| coal[k][c]).sum();
        let opts = SolveOptions::with_tol(1e-9);
        let limit = collection
            .sets
            .iter()
            .zip(&collection.weights)
            .map(|(&s, &b)| average_cost(situation, s, &opts).map(|r| b as f64 * r.c_per_time_unit))
            .sum::<Result<f64>>()
            .ok();
        let copies_rate = scale * lhs;
        RateCheck {
            horizon,
            copies_rate,
            grand_rate: scale * alpha as f64 * coal[grand_pos][cn],
            limit,
            drift: limit.map(|l| (copies_rate - l).abs()),
        }
    });

    let checks: Vec<LemmaCheck> = [
        copy_sum,
        inclusion,
        relaxation,
        anonymization,
        convexity,
        linearity,
        uncopy,
        conclusion,
    ]
    .into_iter()
    .map(|c| c.finish(horizon))
    .collect();
    Ok(LemmaReport {
        collection: collection.clone(),
        horizon,
        labeled_copies: model.labeled.len(),
        product_states: size,
        pass: checks.iter().all(|c| c.pass),
        checks,
        rate,
    })
}

/// Verifies every minimal balanced collection of the situation, in
/// enumeration order.
pub fn verify_all(situation: &SparePartsSituation, horizon: usize, tol: f64) -> Result<Vec<LemmaReport>> {
    enumerate_minimal_balanced(situation.n())?
        .par_iter()
        .map(|b| verify_chain(situation, b, horizon, tol))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidpointCheck {
    /// `min f(x) + f(y)` over `x in a..=b`, `y in a+c..=b+d`.
    pub lhs: f64,
    /// `2 min f(z)` over `z in a+c/2..=b+d/2`.
    pub rhs: f64,
    pub holds: bool,
}

/// Midpoint inequality for a discretely convex sequence `f`.
pub fn midpoint_convex_min(f: &[f64], a: usize, b: usize, c: usize, d: usize) -> Result<MidpointCheck> {
    if !(c == 0 || c == 2) || !(d == 0 || d == 2) {
        return Err(Error::Precondition(format!("c and d must be 0 or 2, got {c} and {d}")));
    }
    if a > b || a + c > b + d {
        return Err(Error::Precondition(format!(
            "need a <= b and a + c <= b + d, got a={a} b={b} c={c} d={d}"
        )));
    }
    if b + d >= f.len() {
        return Err(Error::Precondition(format!(
            "index {} is outside the sequence of length {}",
            b + d,
            f.len()
        )));
    }
    if let Some(x) = (0..f.len().saturating_sub(2)).find(|&x| f[x] + f[x + 2] < 2.0 * f[x + 1]) {
        return Err(Error::Precondition(format!("sequence is not convex at {x}")));
    }
    let min_on = |lo: usize, hi: usize| f[lo..=hi].iter().cloned().fold(f64::INFINITY, f64::min);
    let lhs = min_on(a, b) + min_on(a + c, b + d);
    let rhs = 2.0 * min_on(a + c / 2, b + d / 2);
    Ok(MidpointCheck {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}
