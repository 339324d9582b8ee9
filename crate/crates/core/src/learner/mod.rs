//! Uncoupled per-player learners.
//!
//! A learner sees only its own action, its own loss in `[0, 1]` and the
//! state sequence. The environment is responsible for handing the y-player
//! `1 - sigma` so that every learner can minimize.

mod markov;
mod matrix;

use rand::RngCore;

pub use markov::{
    averaging_weights, default_exponents_irreducible, GeneralConfig, GeneralLearner, GeneralSnapshot,
    IrreducibleLearner, IrreducibleSnapshot,
};
pub use matrix::{MatrixLearner, MatrixSnapshot, MatrixVariant};

use crate::error::{Error, Result};
use crate::game::StationaryPolicy;
use crate::simplex::MixedStrategy;

/// What one player observes after a round. Nothing here is derived from the
/// opponent's action or policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub state: usize,
    pub action: usize,
    pub loss: f64,
    pub next_state: usize,
}

/// A participant in the interaction protocol.
pub trait Player {
    fn num_actions(&self) -> usize;

    fn num_states(&self) -> usize;

    /// Draws an action in `state`. Does not change the player.
    fn act(&self, state: usize, rng: &mut dyn RngCore) -> Result<usize>;

    fn observe(&mut self, obs: &Observation) -> Result<()>;

    /// Current strategy in `state`.
    fn strategy(&self, state: usize) -> &MixedStrategy;

    fn policy(&self) -> StationaryPolicy {
        StationaryPolicy::new((0..self.num_states()).map(|s| self.strategy(s).clone()).collect())
            .expect("at least one state")
    }

    /// Value table, in the player's own loss scale, when the learner keeps one.
    fn values(&self) -> Option<&[f64]> {
        None
    }
}

/// A fixed stationary policy that ignores feedback.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    policy: StationaryPolicy,
}

impl FixedPolicy {
    pub fn new(policy: StationaryPolicy) -> Self {
        Self { policy }
    }
}

impl Player for FixedPolicy {
    fn num_actions(&self) -> usize {
        self.policy.state(0).len()
    }

    fn num_states(&self) -> usize {
        self.policy.num_states()
    }

    fn act(&self, state: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_state(state, self.num_states())?;
        Ok(self.policy.state(state).sample(rng))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        check_state(obs.state, self.num_states())
    }

    fn strategy(&self, state: usize) -> &MixedStrategy {
        self.policy.state(state)
    }
}

pub(crate) fn check_loss(loss: f64) -> Result<()> {
    if (0.0..=1.0).contains(&loss) {
        Ok(())
    } else {
        Err(Error::LossOutOfRange(loss))
    }
}

pub(crate) fn check_state(state: usize, num_states: usize) -> Result<()> {
    if state < num_states {
        Ok(())
    } else {
        Err(Error::StateOutOfRange { state, num_states })
    }
}

pub(crate) fn check_action(action: usize, num_actions: usize) -> Result<()> {
    if action < num_actions {
        Ok(())
    } else {
        Err(Error::ActionOutOfRange { action, num_actions })
    }
}
