//! The optimized pooling game: coalition costs from per-coalition MDP solves.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::mdp::{average_cost, AverageCostResult, SolveOptions};
use crate::situation::SparePartsSituation;

/// Largest player count for which every coalition is solved.
pub const MAX_GAME_PLAYERS: usize = 12;

/// Characteristic cost function over the `2^n - 1` nonempty coalitions.
///
/// `costs[mask - 1]` is the cost of the coalition with bitmask `mask`;
/// the empty coalition has cost 0 by convention.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicGame {
    n: usize,
    costs: Vec<f64>,
    /// Certified optimality gaps per coalition, when the costs came from solves.
    gaps: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameDocument {
    n: usize,
    costs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gaps: Option<BTreeMap<String, f64>>,
}

impl CharacteristicGame {
    pub fn new(n: usize, costs: Vec<f64>) -> Result<Self> {
        Self::build(n, costs, None)
    }

    pub fn with_gaps(n: usize, costs: Vec<f64>, gaps: Vec<f64>) -> Result<Self> {
        Self::build(n, costs, Some(gaps))
    }

    fn build(n: usize, costs: Vec<f64>, gaps: Option<Vec<f64>>) -> Result<Self> {
        if n == 0 || n > MAX_GAME_PLAYERS {
            return Err(Error::Precondition(format!(
                "games need 1..={MAX_GAME_PLAYERS} players, got {n}"
            )));
        }
        let expected = (1usize << n) - 1;
        if costs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: costs.len(),
            });
        }
        if let Some(pos) = costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::validation(
                None,
                "costs",
                format!("cost of {} is not finite", Coalition::from_mask(pos as u32 + 1)),
            ));
        }
        if let Some(g) = &gaps {
            if g.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: g.len(),
                });
            }
            if g.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::validation(None, "gaps", "gaps must be finite and >= 0"));
            }
        }
        Ok(CharacteristicGame { n, costs, gaps })
    }

    /// Builds a game from `(coalition, cost)` pairs covering every nonempty coalition.
    pub fn from_pairs(n: usize, pairs: &[(Coalition, f64)]) -> Result<Self> {
        if n == 0 || n > MAX_GAME_PLAYERS {
            return Err(Error::Precondition(format!(
                "games need 1..={MAX_GAME_PLAYERS} players, got {n}"
            )));
        }
        let mut costs = vec![f64::NAN; (1 << n) - 1];
        for &(s, c) in pairs {
            if s.is_empty() || !s.is_subset_of(Coalition::grand(n)) {
                return Err(Error::UnknownPlayers { coalition: s, n });
            }
            costs[s.mask() as usize - 1] = c;
        }
        if let Some(pos) = costs.iter().position(|c| c.is_nan()) {
            return Err(Error::validation(
                None,
                "costs",
                format!("missing cost for {}", Coalition::from_mask(pos as u32 + 1)),
            ));
        }
        Self::new(n, costs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grand(&self) -> Coalition {
        Coalition::grand(self.n)
    }

    pub fn cost(&self, s: Coalition) -> f64 {
        if s.is_empty() {
            0.0
        } else {
            self.costs[s.mask() as usize - 1]
        }
    }

    pub fn gap(&self, s: Coalition) -> f64 {
        match &self.gaps {
            Some(g) if !s.is_empty() => g[s.mask() as usize - 1],
            _ => 0.0,
        }
    }

    pub fn has_gaps(&self) -> bool {
        self.gaps.is_some()
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps
            .as_ref()
            .map_or(0.0, |g| g.iter().cloned().fold(0.0, f64::max))
    }

    /// Coalitions in increasing bitmask order with their costs.
    pub fn entries(&self) -> impl Iterator<Item = (Coalition, f64)> + '_ {
        self.costs
            .iter()
            .enumerate()
            .map(|(pos, &c)| (Coalition::from_mask(pos as u32 + 1), c))
    }

    /// Game with players relabeled: player `i` of `self` becomes player
    /// `perm[i]` (0-based indices).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: perm.len(),
            });
        }
        let mut costs = vec![0.0; self.costs.len()];
        let mut gaps = self.gaps.as_ref().map(|g| vec![0.0; g.len()]);
        for (s, c) in self.entries() {
            let image = s.indices().fold(0u32, |m, k| m | 1 << perm[k]);
            costs[image as usize - 1] = c;
            if let (Some(out), Some(src)) = (gaps.as_mut(), self.gaps.as_ref()) {
                out[image as usize - 1] = src[s.mask() as usize - 1];
            }
        }
        Self::build(self.n, costs, gaps)
    }

    pub fn to_json(&self) -> String {
        let key = |pos: usize| Coalition::from_mask(pos as u32 + 1).to_string();
        let doc = GameDocument {
            n: self.n,
            costs: self.costs.iter().enumerate().map(|(p, &c)| (key(p), c)).collect(),
            gaps: self
                .gaps
                .as_ref()
                .map(|g| g.iter().enumerate().map(|(p, &x)| (key(p), x)).collect()),
        };
        serde_json::to_string_pretty(&doc).expect("game serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GameDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.n == 0 || doc.n > MAX_GAME_PLAYERS {
            return Err(Error::validation(
                None,
                "n",
                format!("must be in 1..={MAX_GAME_PLAYERS}"),
            ));
        }
        let size = (1usize << doc.n) - 1;
        let fill = |map: &BTreeMap<String, f64>, field: &str| -> Result<Vec<f64>> {
            let mut out = vec![f64::NAN; size];
            for (k, &v) in map {
                let s: Coalition = k.parse()?;
                if s.is_empty() || !s.is_subset_of(Coalition::grand(doc.n)) {
                    return Err(Error::validation(None, field, format!("unknown coalition \"{k}\"")));
                }
                out[s.mask() as usize - 1] = v;
            }
            if let Some(pos) = out.iter().position(|c| c.is_nan()) {
                return Err(Error::validation(
                    None,
                    field,
                    format!("missing entry for {}", Coalition::from_mask(pos as u32 + 1)),
                ));
            }
            Ok(out)
        };
        let costs = fill(&doc.costs, "costs")?;
        let gaps = doc.gaps.as_ref().map(|g| fill(g, "gaps")).transpose()?;
        Self::build(doc.n, costs, gaps)
    }
}

/// A game together with the per-coalition solver output it was built from.
#[derive(Clone, Debug)]
pub struct SolvedGame {
    pub game: CharacteristicGame,
    pub solves: Vec<AverageCostResult>,
}

/// Solves every nonempty coalition (in parallel) and assembles the game.
pub fn build_game(situation: &SparePartsSituation, tol: f64) -> Result<CharacteristicGame> {
    Ok(build_game_with(situation, &SolveOptions::with_tol(tol))?.game)
}

pub fn build_game_with(situation: &SparePartsSituation, opts: &SolveOptions) -> Result<SolvedGame> {
    let n = situation.n();
    if n > MAX_GAME_PLAYERS {
        return Err(Error::SizeCap {
            what: "player count for a full game",
            actual: n as u128,
            limit: MAX_GAME_PLAYERS as u128,
        });
    }
    let solves: Vec<AverageCostResult> = Coalition::all_nonempty(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| average_cost(situation, s, opts))
        .collect::<Result<_>>()?;
    let game = CharacteristicGame::with_gaps(
        n,
        solves.iter().map(|r| r.c_per_time_unit).collect(),
        solves.iter().map(|r| r.certified_gap).collect(),
    )?;
    Ok(SolvedGame { game, solves })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityViolation {
    pub first: Coalition,
    pub second: Coalition,
    /// `c(S ∪ T) - c(S) - c(T)`.
    pub excess: f64,
}

/// Disjoint pairs `S, T` (with `S` before `T` in bitmask order) whose union
/// costs more than `c(S) + c(T) + tol`.
pub fn is_subadditive(game: &CharacteristicGame, tol: f64) -> Vec<SubadditivityViolation> {
    let full = game.grand().mask();
    let mut out = Vec::new();
    for s in 1..=full {
        let rest = full & !s;
        // submasks of the complement that come after s
        let mut t = rest;
        while t > 0 {
            if t > s {
                let (a, b) = (Coalition::from_mask(s), Coalition::from_mask(t));
                let excess = game.cost(a.union(b)) - game.cost(a) - game.cost(b);
                if excess > tol {
                    out.push(SubadditivityViolation {
                        first: a,
                        second: b,
                        excess,
                    });
                }
            }
            t = (t - 1) & rest;
        }
    }
    out.sort_by_key(|v| (v.first.mask(), v.second.mask()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(ids: &[u32]) -> Coalition {
        Coalition::from_ids(ids.iter().copied()).unwrap()
    }

    #[test]
    fn fake_game_violation() {
        let g = CharacteristicGame::from_pairs(2, &[(c(&[1]), 2.0), (c(&[2]), 3.0), (c(&[1, 2]), 6.0)]).unwrap();
        let v = is_subadditive(&g, 1e-9);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].first, v[0].second), (c(&[1]), c(&[2])));
        assert!((v[0].excess - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_player_is_subadditive() {
        let g = CharacteristicGame::new(1, vec![3.0]).unwrap();
        assert!(is_subadditive(&g, 0.0).is_empty());
    }

    #[test]
    fn json_round_trip() {
        let g = CharacteristicGame::with_gaps(2, vec![1.0, 2.5, 3.0], vec![0.0, 1e-10, 2e-10]).unwrap();
        let back = CharacteristicGame::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        assert!(CharacteristicGame::from_json(r#"{"n":2,"costs":{"1":1,"2":2}}"#).is_err());
        assert!(CharacteristicGame::from_json(r#"{"n":1,"costs":{"1":1},"x":0}"#).is_err());
    }

    #[test]
    fn permutation_moves_costs() {
        let g = CharacteristicGame::new(2, vec![1.0, 2.0, 2.5]).unwrap();
        let p = g.permuted(&[1, 0]).unwrap();
        assert_eq!(p.cost(c(&[1])), 2.0);
        assert_eq!(p.cost(c(&[2])), 1.0);
        assert_eq!(p.cost(c(&[1, 2])), 2.5);
    }
}
