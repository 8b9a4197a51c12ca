//! Energy trading between prosumers and a utility company, modeled as a
//! Stackelberg game whose followers play either an expected-utility
//! concave game or a prospect-theoretic game.

pub mod cgt;
pub mod config;
pub mod error;
pub mod game;
pub mod market;
pub mod prospect;
pub mod pt_solver;
pub mod stackelberg;
pub mod sweep;

pub use error::{Error, Result};
pub use game::{Behavior, EquilibriumReport, FollowerGame, InitialProfile, RelaxationSettings};
pub use market::{ActionProfile, MarketParams, ProsumerParams, ProspectParams, Scenario};
pub use pt_solver::PtSearchSettings;
pub use stackelberg::{FollowerModel, FollowerSettings, FollowerSolver, StackelbergResult};
