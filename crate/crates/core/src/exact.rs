//! Exact evaluation of the one-dimensional recursions (coalition and
//! anonymized) in integer arithmetic.
//!
//! Every binary64 input is an exact dyadic rational, so with `R` a common
//! power-of-two denominator of all rates and `h`, the integers
//! `L_i = R lambda_i`, `M_i = R mu_i`, `H = R h` and `G = sum (L_i + M_i)`
//! give `lambda*_i = L_i / G` etc. exactly. With `P` a common denominator of
//! the downtime costs, `W_t = G^t P V_t` is an integer and satisfies
//!
//! ```text
//! W_{t+1}(y) = sum_i [ L_i min_l ((a - l) D_i G^t + W_t(y - l)) + M_i min_l W_t(y + l) ]
//!              + H y G^t P + (G - sum_i (L_i + M_i)) W_t(y)
//! ```
//!
//! so comparisons between tables at the same `t` need no rounding at all.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};

use crate::coalition::Coalition;
use crate::error::Result;
use crate::situation::{coalition_capacity, SparePartsSituation};

fn exact(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite input")
}

fn common_denominator(xs: &[BigRational]) -> BigInt {
    xs.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

fn scaled(x: &BigRational, by: &BigInt) -> BigInt {
    (x * BigRational::from_integer(by.clone())).to_integer()
}

/// Integer form of a situation's uniformized parameters.
#[derive(Clone, Debug)]
pub struct ExactParameters {
    g: BigInt,
    p: BigInt,
    lambda: Vec<BigInt>,
    mu: Vec<BigInt>,
    downtime: Vec<BigInt>,
    holding: BigInt,
}

impl ExactParameters {
    pub fn new(situation: &SparePartsSituation) -> Self {
        let rates: Vec<BigRational> = situation
            .players
            .iter()
            .flat_map(|p| [exact(p.arrival_rate), exact(p.repair_rate)])
            .chain(std::iter::once(exact(situation.holding_cost)))
            .collect();
        let r = common_denominator(&rates);
        let costs: Vec<BigRational> = situation.players.iter().map(|p| exact(p.downtime_cost)).collect();
        let p = common_denominator(&costs);
        let lambda: Vec<BigInt> = situation
            .players
            .iter()
            .map(|q| scaled(&exact(q.arrival_rate), &r))
            .collect();
        let mu: Vec<BigInt> = situation
            .players
            .iter()
            .map(|q| scaled(&exact(q.repair_rate), &r))
            .collect();
        let g = lambda.iter().chain(&mu).sum();
        ExactParameters {
            g,
            downtime: costs.iter().map(|d| scaled(d, &p)).collect(),
            holding: scaled(&exact(situation.holding_cost), &r),
            p,
            lambda,
            mu,
        }
    }
}

/// Exact finite-horizon recursion on `0..=top` where each demand of a member
/// draws up to `batch` parts and each repair returns up to `batch` parts.
#[derive(Clone, Debug)]
pub struct ExactRecursion {
    params: ExactParameters,
    members: Vec<usize>,
    batch: usize,
    self_loop: BigInt,
    /// `G^t`.
    g_pow: BigInt,
    pub t: usize,
    /// `W_t = G^t P V_t`.
    pub values: Vec<BigInt>,
}

impl ExactRecursion {
    /// The recursion of a single coalition on `0..=C_S`.
    pub fn coalition(situation: &SparePartsSituation, coalition: Coalition) -> Result<Self> {
        let top = coalition_capacity(situation, coalition)?;
        Ok(Self::new(ExactParameters::new(situation), coalition.indices().collect(), 1, top))
    }

    /// The anonymized recursion with batch size `alpha` on `0..=alpha C_N`.
    pub fn anonymized(situation: &SparePartsSituation, alpha: usize) -> Result<Self> {
        let grand = situation.grand_coalition();
        let top = alpha * coalition_capacity(situation, grand)?;
        Ok(Self::new(ExactParameters::new(situation), grand.indices().collect(), alpha, top))
    }

    fn new(params: ExactParameters, members: Vec<usize>, batch: usize, top: usize) -> Self {
        let outflow: BigInt = members.iter().map(|&i| &params.lambda[i] + &params.mu[i]).sum();
        ExactRecursion {
            self_loop: &params.g - outflow,
            params,
            members,
            batch,
            g_pow: BigInt::one(),
            t: 0,
            values: vec![BigInt::zero(); top + 1],
        }
    }

    pub fn top(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&mut self) {
        let top = self.top();
        let a = self.batch;
        let pr = &self.params;
        let w = &self.values;
        let base = &self.g_pow * &pr.p;
        let next: Vec<BigInt> = (0..=top)
            .map(|y| {
                let ret = (0..=a.min(top - y)).map(|l| &w[y + l]).min().expect("nonempty");
                let mut sum = &pr.holding * BigInt::from(y) * &base + &self.self_loop * &w[y];
                for &i in &self.members {
                    let unit = &pr.downtime[i] * &self.g_pow;
                    let demand = (0..=a.min(y))
                        .map(|l| &unit * BigInt::from(a - l) + &w[y - l])
                        .min()
                        .expect("nonempty");
                    sum += &pr.lambda[i] * demand + &pr.mu[i] * ret;
                }
                sum
            })
            .collect();
        self.values = next;
        self.g_pow *= &self.params.g;
        self.t += 1;
    }

    /// `G^t P`: the factor between `W_t` and `V_t`.
    pub fn scale(&self) -> BigInt {
        &self.g_pow * &self.params.p
    }

    /// Converts a numerator on this recursion's current scale to a float.
    pub fn to_f64(&self, w: &BigInt) -> f64 {
        BigRational::new(w.clone(), self.scale()).to_f64().unwrap_or(f64::NAN)
    }

    pub fn value_f64(&self, y: usize) -> f64 {
        self.to_f64(&self.values[y])
    }
}
