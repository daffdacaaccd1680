//! Coalitions as bitmasks over player indices.
//!
//! Bit `k` stands for the player with id `k + 1`. Ids are 1-based everywhere
//! user-facing; bit positions never leak into documents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported player count for bitmask coalitions.
pub const MAX_PLAYERS: usize = 31;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Coalition(u32);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn from_mask(mask: u32) -> Self {
        Coalition(mask)
    }

    /// Grand coalition on `n` players.
    pub fn grand(n: usize) -> Self {
        assert!(n <= MAX_PLAYERS);
        if n == 0 {
            Coalition(0)
        } else {
            Coalition(u32::MAX >> (32 - n))
        }
    }

    pub fn singleton(id: u32) -> Self {
        assert!(id >= 1 && id as usize <= MAX_PLAYERS);
        Coalition(1 << (id - 1))
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I) -> Result<Self> {
        let mut mask = 0u32;
        for id in ids {
            if id == 0 || id as usize > MAX_PLAYERS {
                return Err(Error::Parse(format!("player id {id} out of range")));
            }
            mask |= 1 << (id - 1);
        }
        Ok(Coalition(mask))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Membership by 0-based player index.
    pub fn contains_index(self, index: usize) -> bool {
        index < 32 && self.0 & (1 << index) != 0
    }

    pub fn contains(self, id: u32) -> bool {
        id >= 1 && self.contains_index(id as usize - 1)
    }

    pub fn union(self, other: Coalition) -> Coalition {
        Coalition(self.0 | other.0)
    }

    pub fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    /// 0-based player indices in increasing order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32usize).filter(move |k| mask & (1 << k) != 0)
    }

    /// 1-based player ids in increasing order.
    pub fn ids(self) -> impl Iterator<Item = u32> {
        self.indices().map(|k| k as u32 + 1)
    }

    /// All nonempty coalitions on `n` players in increasing mask order.
    pub fn all_nonempty(n: usize) -> impl Iterator<Item = Coalition> {
        let top = Coalition::grand(n).0;
        (1..=top).map(Coalition)
    }

    /// Parses a selector: comma-separated ids, or `all` for the grand coalition.
    pub fn parse_selector(text: &str, n: usize) -> Result<Coalition> {
        let trimmed = text.trim();
        let coalition = if trimmed.eq_ignore_ascii_case("all") {
            Coalition::grand(n)
        } else {
            trimmed.parse::<Coalition>()?
        };
        if coalition.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        if !coalition.is_subset_of(Coalition::grand(n)) {
            return Err(Error::UnknownPlayers { coalition, n });
        }
        Ok(coalition)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for id in self.ids() {
            if !first {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
            first = false;
        }
        Ok(())
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for Coalition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Ok(Coalition::EMPTY);
        }
        let ids = trimmed
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Parse(format!("invalid player id '{}'", part.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Coalition::from_ids(ids)
    }
}

impl Serialize for Coalition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Coalition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let c = Coalition::from_ids([3, 1]).unwrap();
        assert_eq!(c.to_string(), "1,3");
        assert_eq!("1, 3".parse::<Coalition>().unwrap(), c);
        assert_eq!(c.len(), 2);
        assert!(c.contains(3) && !c.contains(2));
    }

    #[test]
    fn selector() {
        assert_eq!(Coalition::parse_selector("all", 3).unwrap(), Coalition::grand(3));
        assert!(matches!(
            Coalition::parse_selector("1,4", 3),
            Err(Error::UnknownPlayers { .. })
        ));
        assert!(matches!(Coalition::parse_selector("", 3), Err(Error::EmptyCoalition)));
        assert!(Coalition::parse_selector("x", 3).is_err());
    }

    #[test]
    fn enumeration_order() {
        let all: Vec<_> = Coalition::all_nonempty(2).map(|c| c.to_string()).collect();
        assert_eq!(all, ["1", "2", "1,2"]);
    }
}
