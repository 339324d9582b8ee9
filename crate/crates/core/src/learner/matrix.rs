use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_action, check_loss, check_state, Observation, Player};
use crate::error::{Error, Result};
use crate::schedule::{Scaling, ScheduleParams};
use crate::simplex::{ix_loss_estimator, omd_step, ClippedSimplex, MixedStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixVariant {
    /// IX estimator with `beta_t`; high-probability guarantee.
    HighProbability,
    /// Plain importance weighting (`beta = 0`); expected-rate tuning.
    Expected,
}

impl MatrixVariant {
    pub fn default_params(self) -> ScheduleParams {
        match self {
            MatrixVariant::HighProbability => ScheduleParams::matrix_high_probability(),
            MatrixVariant::Expected => ScheduleParams::matrix_expected(),
        }
    }
}

/// Bandit-feedback learner for one player of a matrix game.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixLearner {
    variant: MatrixVariant,
    params: ScheduleParams,
    t: u64,
    x: MixedStrategy,
}

/// Persistable learner state: step counter and current strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSnapshot {
    pub t: u64,
    pub policy: Vec<f64>,
}

impl MatrixLearner {
    pub fn new(num_actions: usize, variant: MatrixVariant) -> Self {
        Self::with_params(num_actions, variant, variant.default_params()).expect("default params are valid")
    }

    pub fn with_params(num_actions: usize, variant: MatrixVariant, params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        if params.scaling != Scaling::Matrix {
            return Err(Error::Parameter("matrix learner needs matrix scaling".into()));
        }
        if num_actions == 0 {
            return Err(Error::Parameter("need at least one action".into()));
        }
        Ok(Self {
            variant,
            params,
            t: 1,
            x: MixedStrategy::uniform(num_actions),
        })
    }

    pub fn restore(snapshot: &MatrixSnapshot, variant: MatrixVariant, params: ScheduleParams) -> Result<Self> {
        let mut learner = Self::with_params(snapshot.policy.len(), variant, params)?;
        if snapshot.t == 0 {
            return Err(Error::Parameter("step counter starts at 1".into()));
        }
        learner.t = snapshot.t;
        learner.x = MixedStrategy::new(snapshot.policy.clone())?;
        Ok(learner)
    }

    pub fn snapshot(&self) -> MatrixSnapshot {
        MatrixSnapshot {
            t: self.t,
            policy: self.x.probs().to_vec(),
        }
    }

    /// Index of the next update (starts at 1).
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn variant(&self) -> MatrixVariant {
        self.variant
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn x(&self) -> &MixedStrategy {
        &self.x
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        self.x.sample(rng)
    }

    /// The domain the current strategy lives in: floor `1 / (A t^2)`.
    pub fn domain(&self) -> ClippedSimplex {
        ClippedSimplex::time_indexed(self.x.len(), self.t)
    }

    /// Consumes the learner's own action and its own loss.
    pub fn update(&mut self, action: usize, loss: f64) -> Result<()> {
        check_loss(loss)?;
        check_action(action, self.x.len())?;
        let sched = self.params.at(self.t, 0.0);
        let beta = match self.variant {
            MatrixVariant::HighProbability => sched.beta,
            MatrixVariant::Expected => 0.0,
        };
        let g = ix_loss_estimator(action, loss, &self.x, beta, sched.epsilon)?;
        let next_domain = ClippedSimplex::time_indexed(self.x.len(), self.t + 1);
        self.x = omd_step(&self.x, &g, sched.eta, &next_domain)?;
        self.t += 1;
        Ok(())
    }
}

impl Player for MatrixLearner {
    fn num_actions(&self) -> usize {
        self.x.len()
    }

    fn num_states(&self) -> usize {
        1
    }

    fn act(&self, state: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_state(state, 1)?;
        Ok(self.x.sample(rng))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        check_state(obs.state, 1)?;
        self.update(obs.action, obs.loss)
    }

    fn strategy(&self, _state: usize) -> &MixedStrategy {
        &self.x
    }
}
