//! Optimized spare-parts pooling games.
//!
//! Coalitional costs come from uniformized average-cost MDPs
//! ([`mdp::average_cost`]); the resulting game is tested for balancedness and
//! core non-emptiness ([`core_solver`]); the copy, combination, relaxation,
//! anonymization and uncopy value functions behind the balancedness argument
//! are tabulated and checked state by state in [`proof_chain`].

pub mod coalition;
pub mod core_solver;
pub mod error;
pub mod exact;
pub mod game;
pub mod mdp;
pub mod oracle;
pub mod proof_chain;
pub mod sampling;
pub mod simplex;
pub mod situation;

pub use coalition::Coalition;
pub use error::{Error, Result};
pub use situation::{parse_situation, PlayerSpec, SparePartsSituation};
