//! Uncoupled learning in two-player zero-sum matrix and Markov games under
//! bandit feedback.
//!
//! Each player runs its own learner and sees only its own action, its own
//! loss and the state sequence. The [`env`] module runs the protocol,
//! [`oracles`] and [`metrics`] measure convergence, and [`harness`] drives
//! configured multi-seed experiments.

pub mod env;
pub mod error;
pub mod game;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod oracles;
pub mod par;
pub mod schedule;
pub mod simplex;

pub use error::{Error, Result};
pub use game::{MarkovGame, Matrix, MatrixGame, StationaryPolicy};
pub use simplex::{ClippedSimplex, MixedStrategy};
