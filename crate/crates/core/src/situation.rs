//! Spare-parts situations: players with demand, repair and downtime data that
//! share a holding cost, plus the uniformized rates every coalition MDP uses.

use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, MAX_PLAYERS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSpec {
    pub id: u32,
    /// Storage capacity in parts.
    pub capacity: u32,
    /// Cost per stockout (emergency procedure).
    pub downtime_cost: f64,
    /// Demand (failure) rate per time unit.
    pub arrival_rate: f64,
    /// Repair completion rate per time unit.
    pub repair_rate: f64,
}

/// A validated spare-parts situation. Players are stored in id order with
/// ids `1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparePartsSituation {
    pub players: Vec<PlayerSpec>,
    pub holding_cost: f64,
}

/// Rates divided by the uniformization rate `gamma = sum_i (lambda_i + mu_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRates {
    pub gamma: f64,
    pub lambda_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub h_star: f64,
}

impl SparePartsSituation {
    /// Builds a situation, sorting players by id and validating every invariant.
    pub fn new(mut players: Vec<PlayerSpec>, holding_cost: f64) -> Result<Self> {
        players.sort_by_key(|p| p.id);
        let situation = SparePartsSituation {
            players,
            holding_cost,
        };
        situation.validate()?;
        Ok(situation)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.players.len();
        if n == 0 {
            return Err(Error::validation(None, "players", "at least one player is required"));
        }
        if n > MAX_PLAYERS {
            return Err(Error::validation(
                None,
                "players",
                format!("at most {MAX_PLAYERS} players are supported"),
            ));
        }
        if !self.holding_cost.is_finite() {
            return Err(Error::validation(None, "holding_cost", "must be finite"));
        }
        for (pos, p) in self.players.iter().enumerate() {
            if pos > 0 && self.players[pos - 1].id == p.id {
                return Err(Error::validation(Some(p.id), "id", "duplicate id"));
            }
            if p.id as usize != pos + 1 {
                return Err(Error::validation(
                    Some(p.id),
                    "id",
                    format!("ids must be consecutive integers 1..{n}"),
                ));
            }
            check_positive(p.id, "arrival_rate", p.arrival_rate)?;
            check_positive(p.id, "repair_rate", p.repair_rate)?;
            check_positive(p.id, "downtime_cost", p.downtime_cost)?;
        }
        Ok(())
    }

    /// Non-fatal observations about the situation.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.holding_cost < 0.0 {
            out.push(format!(
                "holding_cost {} is negative; stocking parts earns money",
                self.holding_cost
            ));
        }
        out
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn grand_coalition(&self) -> Coalition {
        Coalition::grand(self.n())
    }

    pub fn player(&self, index: usize) -> &PlayerSpec {
        &self.players[index]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("situation serializes")
    }

    /// Checks that `coalition` is a nonempty subset of the players.
    pub fn check_coalition(&self, coalition: Coalition) -> Result<()> {
        if coalition.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        if !coalition.is_subset_of(self.grand_coalition()) {
            return Err(Error::UnknownPlayers {
                coalition,
                n: self.n(),
            });
        }
        Ok(())
    }
}

fn check_positive(id: u32, field: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::validation(
            Some(id),
            field,
            format!("must be a finite number > 0, got {value}"),
        ));
    }
    Ok(())
}

/// Parses and validates a model document.
pub fn parse_situation(text: &str) -> Result<SparePartsSituation> {
    let raw: SparePartsSituation =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    SparePartsSituation::new(raw.players, raw.holding_cost)
}

pub fn normalize(situation: &SparePartsSituation) -> NormalizedRates {
    let gamma: f64 = situation
        .players
        .iter()
        .map(|p| p.arrival_rate + p.repair_rate)
        .sum();
    NormalizedRates {
        gamma,
        lambda_star: situation.players.iter().map(|p| p.arrival_rate / gamma).collect(),
        mu_star: situation.players.iter().map(|p| p.repair_rate / gamma).collect(),
        h_star: situation.holding_cost / gamma,
    }
}

/// Pooled capacity `C_S = sum_{i in S} C_i`.
pub fn coalition_capacity(situation: &SparePartsSituation, coalition: Coalition) -> Result<usize> {
    situation.check_coalition(coalition)?;
    Ok(coalition
        .indices()
        .map(|k| situation.players[k].capacity as usize)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"{
        "players": [
            {"id": 2, "capacity": 2, "downtime_cost": 2, "arrival_rate": 1.0, "repair_rate": 1.5},
            {"id": 1, "capacity": 1, "downtime_cost": 4, "arrival_rate": 0.5, "repair_rate": 1.0}
        ],
        "holding_cost": 0.3
    }"#;

    #[test]
    fn parses_and_sorts_by_id() {
        let s = parse_situation(CANONICAL).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.players[0].id, 1);
        assert_eq!(s.players[0].capacity, 1);
        assert_eq!(s.players[1].downtime_cost, 2.0);
        assert_eq!(s.holding_cost, 0.3);
    }

    #[test]
    fn rejects_zero_arrival_rate() {
        let text = CANONICAL.replace("\"arrival_rate\": 0.5", "\"arrival_rate\": 0");
        match parse_situation(&text) {
            Err(Error::Validation { player, field, .. }) => {
                assert_eq!(player, Some(1));
                assert_eq!(field, "arrival_rate");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_id() {
        let text = CANONICAL.replace("\"id\": 2", "\"id\": 1");
        let err = parse_situation(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_gaps() {
        let text = CANONICAL.replace("\"holding_cost\"", "\"extra\": 1, \"holding_cost\"");
        assert!(matches!(parse_situation(&text), Err(Error::Parse(_))));
        let text = CANONICAL.replace("\"id\": 2", "\"id\": 3");
        assert!(matches!(parse_situation(&text), Err(Error::Validation { .. })));
        assert!(matches!(parse_situation("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_zero_downtime_cost_and_fractional_capacity() {
        let text = CANONICAL.replace("\"downtime_cost\": 4", "\"downtime_cost\": 0");
        assert!(matches!(parse_situation(&text), Err(Error::Validation { .. })));
        let text = CANONICAL.replace("\"capacity\": 1", "\"capacity\": 1.5");
        assert!(matches!(parse_situation(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn negative_holding_cost_is_a_warning() {
        let text = CANONICAL.replace("0.3", "-0.3");
        let s = parse_situation(&text).unwrap();
        assert_eq!(s.warnings().len(), 1);
    }

    #[test]
    fn normalization_of_canonical_instance() {
        let s = parse_situation(CANONICAL).unwrap();
        let r = normalize(&s);
        assert_eq!(r.gamma, 4.0);
        assert_eq!(r.lambda_star, vec![0.125, 0.25]);
        assert_eq!(r.mu_star, vec![0.25, 0.375]);
        assert!((r.h_star - 0.075).abs() < 1e-15);
        let total: f64 = r.lambda_star.iter().chain(&r.mu_star).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_player_normalization() {
        let s = SparePartsSituation::new(
            vec![PlayerSpec {
                id: 1,
                capacity: 0,
                downtime_cost: 1.0,
                arrival_rate: 1.0,
                repair_rate: 1.0,
            }],
            0.0,
        )
        .unwrap();
        let r = normalize(&s);
        assert_eq!(r.gamma, 2.0);
        assert_eq!(r.lambda_star, vec![0.5]);
        assert_eq!(r.mu_star, vec![0.5]);
    }

    #[test]
    fn capacities() {
        let s = parse_situation(CANONICAL).unwrap();
        assert_eq!(coalition_capacity(&s, Coalition::grand(2)).unwrap(), 3);
        assert_eq!(coalition_capacity(&s, Coalition::singleton(2)).unwrap(), 2);
        assert!(matches!(
            coalition_capacity(&s, Coalition::EMPTY),
            Err(Error::EmptyCoalition)
        ));
        let mut zero = s.clone();
        zero.players.iter_mut().for_each(|p| p.capacity = 0);
        assert_eq!(coalition_capacity(&zero, Coalition::grand(2)).unwrap(), 0);
    }
}
