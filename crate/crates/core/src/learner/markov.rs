//! Per-state learners for Markov games: the irreducible-game learner with
//! polynomial schedules indexed by visit count, and the general-game learner
//! with fixed constants, a fixed-horizon domain and an optimism bonus.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_action, check_loss, check_state, Observation, Player};
use crate::error::{Error, Result};
use crate::schedule::{Scaling, ScheduleParams};
use crate::simplex::{ix_loss_estimator, omd_step, ClippedSimplex, MixedStrategy};

/// Irreducible-game exponents for a given `varepsilon`.
pub fn default_exponents_irreducible(varepsilon: f64) -> Result<ScheduleParams> {
    ScheduleParams::irreducible(varepsilon)
}

/// Weights `alpha^i_tau = alpha_i prod_{j=i+1..tau} (1 - alpha_j)` for
/// `i = 1..=tau`, which express the running value as a weighted average of
/// its targets. `alpha` is indexed from 1.
pub fn averaging_weights(alpha: impl Fn(u64) -> f64, tau: u64) -> Vec<f64> {
    let mut weights = vec![0.0; tau as usize];
    let mut tail = 1.0;
    for i in (1..=tau).rev() {
        let a = alpha(i);
        weights[(i - 1) as usize] = a * tail;
        tail *= 1.0 - a;
    }
    weights
}

fn mixed_uniform(num_states: usize, num_actions: usize) -> Vec<MixedStrategy> {
    vec![MixedStrategy::uniform(num_actions); num_states]
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrreducibleLearner {
    gamma: f64,
    params: ScheduleParams,
    policies: Vec<MixedStrategy>,
    visits: Vec<u64>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibleSnapshot {
    pub policies: Vec<Vec<f64>>,
    pub visits: Vec<u64>,
    pub values: Vec<f64>,
}

impl IrreducibleLearner {
    pub fn new(num_states: usize, num_actions: usize, gamma: f64, params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        if params.scaling != Scaling::Markov {
            return Err(Error::Parameter("irreducible learner needs Markov scaling".into()));
        }
        check_discount(gamma)?;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Parameter("need at least one state and one action".into()));
        }
        Ok(Self {
            gamma,
            params,
            policies: mixed_uniform(num_states, num_actions),
            visits: vec![0; num_states],
            values: vec![0.5 / (1.0 - gamma); num_states],
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn value_table(&self) -> &[f64] {
        &self.values
    }

    pub fn snapshot(&self) -> IrreducibleSnapshot {
        IrreducibleSnapshot {
            policies: self.policies.iter().map(|p| p.probs().to_vec()).collect(),
            visits: self.visits.clone(),
            values: self.values.clone(),
        }
    }

    /// One visit to `s`: policy step at `s` with the bootstrapped loss
    /// `loss + gamma V(s_next)`, then the value average at `s`.
    pub fn step(&mut self, s: usize, action: usize, loss: f64, s_next: usize) -> Result<()> {
        check_loss(loss)?;
        check_state(s, self.policies.len())?;
        check_state(s_next, self.policies.len())?;
        check_action(action, self.policies[s].len())?;

        let tau = self.visits[s] + 1;
        let sched = self.params.at(tau, self.gamma);
        let target = loss + self.gamma * self.values[s_next];
        let x = &self.policies[s];
        let g = ix_loss_estimator(action, target, x, sched.beta, sched.epsilon)?;
        let domain = ClippedSimplex::time_indexed(x.len(), tau + 1);
        let next = omd_step(x, &g, sched.eta, &domain)?;

        self.policies[s] = next;
        self.values[s] = (1.0 - sched.alpha) * self.values[s] + sched.alpha * target;
        self.visits[s] = tau;
        Ok(())
    }
}

impl Player for IrreducibleLearner {
    fn num_actions(&self) -> usize {
        self.policies[0].len()
    }

    fn num_states(&self) -> usize {
        self.policies.len()
    }

    fn act(&self, state: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_state(state, self.policies.len())?;
        Ok(self.policies[state].sample(rng))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.step(obs.state, obs.action, obs.loss, obs.next_state)
    }

    fn strategy(&self, state: usize) -> &MixedStrategy {
        &self.policies[state]
    }

    fn values(&self) -> Option<&[f64]> {
        Some(&self.values)
    }
}

/// Constants of the general-game learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralConfig {
    pub horizon: u64,
    pub eta: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub delta: f64,
}

impl GeneralConfig {
    /// Desk-scale preset `eps = 0.05`, `beta = 0.05`, `eta = 0.01`, `kappa = 0.01`, `delta = 0.05`.
    pub fn practical(horizon: u64) -> Self {
        Self {
            horizon,
            eta: 0.01,
            beta: 0.05,
            epsilon: 0.05,
            kappa: 0.01,
            delta: 0.05,
        }
    }

    /// Tuning for target accuracy `u` with unit constants, writing
    /// `L = ln(S A T / delta)`: `eps = u (1-gamma) / L`,
    /// `beta = u^3 (1-gamma)^6 / (A L^6)`, `eta = u^5 (1-gamma)^9 / (A^2 L^11)`.
    pub fn theoretical(
        u: f64,
        gamma: f64,
        num_states: usize,
        num_actions: usize,
        horizon: u64,
        kappa: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(u > 0.0 && u <= 1.0 / (1.0 - gamma)) {
            return Err(Error::Parameter(format!("u = {u} outside (0, 1/(1-gamma)]")));
        }
        let log = log_term(num_states, num_actions, horizon, delta);
        let a = num_actions as f64;
        let c = 1.0 - gamma;
        let cfg = Self {
            horizon,
            epsilon: u * c / log,
            beta: u.powi(3) * c.powi(6) / (a * log.powi(6)),
            eta: u.powi(5) * c.powi(9) / (a * a * log.powi(11)),
            kappa,
            delta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.beta > 0.0 && self.epsilon > 0.0) {
            return Err(Error::Parameter("eta, beta and epsilon must be positive".into()));
        }
        if !(self.eta <= self.beta && self.beta <= self.epsilon) {
            return Err(Error::Parameter(format!(
                "need eta <= beta <= epsilon, got eta = {}, beta = {}, epsilon = {}",
                self.eta, self.beta, self.epsilon
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Parameter(format!("kappa {} must be nonnegative", self.kappa)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!("delta {} outside (0, 1)", self.delta)));
        }
        Ok(())
    }
}

// ln(S A T / delta)
fn log_term(num_states: usize, num_actions: usize, horizon: u64, delta: f64) -> f64 {
    (num_states as f64 * num_actions as f64 * horizon as f64 / delta).ln()
}

/// General-game learner. Holds the running value `V~` and its clamp
/// `V_lower = max(V~, 0)` in the learner's own loss scale.
///
/// Run as the y-player on losses `1 - sigma`, its clamped table maps to the
/// upper value `V_upper = 1/(1-gamma) - V_lower`, see [`GeneralLearner::upper_values`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralLearner {
    gamma: f64,
    config: GeneralConfig,
    num_states: usize,
    h: f64,
    log_sq: f64,
    domain: ClippedSimplex,
    policies: Vec<MixedStrategy>,
    visits: Vec<u64>,
    raw_values: Vec<f64>,
    values: Vec<f64>,
    steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralSnapshot {
    pub policies: Vec<Vec<f64>>,
    pub visits: Vec<u64>,
    pub raw_values: Vec<f64>,
    pub values: Vec<f64>,
    pub steps: u64,
}

impl GeneralLearner {
    pub fn new(num_states: usize, num_actions: usize, gamma: f64, config: GeneralConfig) -> Result<Self> {
        config.validate()?;
        check_discount(gamma)?;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Parameter("need at least one state and one action".into()));
        }
        let log = log_term(num_states, num_actions, config.horizon, config.delta);
        Ok(Self {
            gamma,
            config,
            num_states,
            h: (config.horizon as f64).ln() / (1.0 - gamma),
            log_sq: log * log,
            domain: ClippedSimplex::horizon(num_actions, config.horizon),
            policies: mixed_uniform(num_states, num_actions),
            visits: vec![0; num_states],
            raw_values: vec![0.0; num_states],
            values: vec![0.0; num_states],
            steps: 0,
        })
    }

    pub fn config(&self) -> &GeneralConfig {
        &self.config
    }

    /// `H = ln(T) / (1 - gamma)`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `alpha_tau = (H + 1) / (H + tau)`.
    pub fn alpha(&self, tau: u64) -> f64 {
        (self.h + 1.0) / (self.h + tau as f64)
    }

    /// `kappa A ln^2(S A T / delta) (beta + alpha_tau / eta) / (1 - gamma)^2`.
    pub fn bonus(&self, tau: u64) -> f64 {
        let c = &self.config;
        let a = self.domain.num_actions() as f64;
        c.kappa * a * self.log_sq * (c.beta + self.alpha(tau) / c.eta) / (1.0 - self.gamma).powi(2)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    /// Un-clamped running values `V~`.
    pub fn raw_values(&self) -> &[f64] {
        &self.raw_values
    }

    /// Clamped values `max(V~, 0)`.
    pub fn lower_values(&self) -> &[f64] {
        &self.values
    }

    /// `1/(1-gamma) - V_lower`: the upper value in the x-player's loss scale
    /// when this learner plays y on complemented losses.
    pub fn upper_values(&self) -> Vec<f64> {
        let cap = 1.0 / (1.0 - self.gamma);
        self.values.iter().map(|v| cap - v).collect()
    }

    pub fn snapshot(&self) -> GeneralSnapshot {
        GeneralSnapshot {
            policies: self.policies.iter().map(|p| p.probs().to_vec()).collect(),
            visits: self.visits.clone(),
            raw_values: self.raw_values.clone(),
            values: self.values.clone(),
            steps: self.steps,
        }
    }

    pub fn step(&mut self, s: usize, action: usize, loss: f64, s_next: usize) -> Result<()> {
        if self.steps >= self.config.horizon {
            return Err(Error::HorizonExhausted {
                horizon: self.config.horizon,
            });
        }
        check_loss(loss)?;
        check_state(s, self.num_states)?;
        check_state(s_next, self.num_states)?;
        check_action(action, self.domain.num_actions())?;

        let tau = self.visits[s] + 1;
        let alpha = self.alpha(tau);
        let target = loss + self.gamma * self.values[s_next];
        let x = &self.policies[s];
        let g = ix_loss_estimator(action, target, x, self.config.beta, self.config.epsilon)?;
        let next = omd_step(x, &g, self.config.eta, &self.domain)?;

        self.policies[s] = next;
        self.raw_values[s] = (1.0 - alpha) * self.raw_values[s] + alpha * (target - self.bonus(tau));
        self.values[s] = self.raw_values[s].max(0.0);
        self.visits[s] = tau;
        self.steps += 1;
        Ok(())
    }
}

impl Player for GeneralLearner {
    fn num_actions(&self) -> usize {
        self.domain.num_actions()
    }

    fn num_states(&self) -> usize {
        self.num_states
    }

    fn act(&self, state: usize, rng: &mut dyn RngCore) -> Result<usize> {
        check_state(state, self.num_states)?;
        Ok(self.policies[state].sample(rng))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.step(obs.state, obs.action, obs.loss, obs.next_state)
    }

    fn strategy(&self, state: usize) -> &MixedStrategy {
        &self.policies[state]
    }

    fn values(&self) -> Option<&[f64]> {
        Some(&self.values)
    }
}

fn check_discount(gamma: f64) -> Result<()> {
    if (0.5..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("discount {gamma} outside [1/2, 1)")))
    }
}
