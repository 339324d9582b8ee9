//! The uncoupled interaction protocol: both players act simultaneously, the
//! environment draws a loss with the right mean and the next state, and each
//! player receives only its own observation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{MarkovGame, MatrixGame};
use crate::learner::{Observation, Player};
use crate::metrics::{GapReport, Metric};
use crate::simplex::MixedStrategy;

/// A game the environment can run.
#[derive(Debug, Clone, PartialEq)]
pub enum Arena {
    Matrix(MatrixGame),
    Markov(MarkovGame),
}

impl Arena {
    pub fn num_states(&self) -> usize {
        match self {
            Arena::Matrix(_) => 1,
            Arena::Markov(g) => g.num_states(),
        }
    }

    pub fn num_actions_x(&self) -> usize {
        match self {
            Arena::Matrix(g) => g.num_actions_x(),
            Arena::Markov(g) => g.num_actions_x(),
        }
    }

    pub fn num_actions_y(&self) -> usize {
        match self {
            Arena::Matrix(g) => g.num_actions_y(),
            Arena::Markov(g) => g.num_actions_y(),
        }
    }

    pub fn mean_loss(&self, s: usize, a: usize, b: usize) -> f64 {
        match self {
            Arena::Matrix(g) => g.get(a, b),
            Arena::Markov(g) => g.loss(s).get(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// `sigma ~ Bernoulli(G)`.
    #[default]
    Bernoulli,
    /// `sigma = G`.
    Noiseless,
}

/// Three independent random streams: environment, x-player, y-player.
#[derive(Debug, Clone)]
pub struct SeedStreams {
    pub env: ChaCha8Rng,
    pub x: ChaCha8Rng,
    pub y: ChaCha8Rng,
}

impl SeedStreams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            env: stream(0),
            x: stream(1),
            y: stream(2),
        }
    }
}

/// Result of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: usize,
    pub action_x: usize,
    pub action_y: usize,
    pub sigma: f64,
    pub next_state: usize,
    pub reset: bool,
}

impl StepOutcome {
    pub fn x_observation(&self) -> Observation {
        Observation {
            state: self.state,
            action: self.action_x,
            loss: self.sigma,
            next_state: self.next_state,
        }
    }

    pub fn y_observation(&self) -> Observation {
        Observation {
            state: self.state,
            action: self.action_y,
            loss: 1.0 - self.sigma,
            next_state: self.next_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub noise: NoiseModel,
    /// Probability of redrawing the next state from `initial` instead of the
    /// transition kernel. Zero disables episodic mode.
    pub reset_prob: f64,
    pub initial: MixedStrategy,
}

impl EnvConfig {
    pub fn continuing(num_states: usize) -> Self {
        Self {
            noise: NoiseModel::Bernoulli,
            reset_prob: 0.0,
            initial: MixedStrategy::vertex(num_states, 0),
        }
    }

    /// Episodic resets with probability `1 - gamma`, restarting from `initial`.
    pub fn episodic(gamma: f64, initial: MixedStrategy) -> Self {
        Self {
            noise: NoiseModel::Bernoulli,
            reset_prob: 1.0 - gamma,
            initial,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    arena: Arena,
    config: EnvConfig,
    state: usize,
    t: u64,
    rng: ChaCha8Rng,
    stats: RunStats,
}

/// Running totals of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub steps: u64,
    pub total_loss: f64,
    pub episodic: bool,
    /// Number of completed episodes (resets).
    pub episodes: u64,
}

impl RunStats {
    pub fn mean_loss(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.total_loss / self.steps as f64
        }
    }
}

impl Env {
    pub fn new(arena: Arena, config: EnvConfig, mut rng: ChaCha8Rng) -> Result<Self> {
        if config.initial.len() != arena.num_states() {
            return Err(Error::Dimension {
                expected: arena.num_states(),
                got: config.initial.len(),
            });
        }
        if !(0.0..1.0).contains(&config.reset_prob) {
            return Err(Error::Parameter(format!(
                "reset probability {} outside [0, 1)",
                config.reset_prob
            )));
        }
        let state = config.initial.sample(&mut rng);
        let episodic = config.reset_prob > 0.0;
        Ok(Self {
            arena,
            config,
            state,
            t: 0,
            rng,
            stats: RunStats {
                episodic,
                ..RunStats::default()
            },
        })
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Plays `(a, b)` in the current state.
    pub fn step(&mut self, a: usize, b: usize) -> Result<StepOutcome> {
        if a >= self.arena.num_actions_x() {
            return Err(Error::ActionOutOfRange {
                action: a,
                num_actions: self.arena.num_actions_x(),
            });
        }
        if b >= self.arena.num_actions_y() {
            return Err(Error::ActionOutOfRange {
                action: b,
                num_actions: self.arena.num_actions_y(),
            });
        }
        let s = self.state;
        let mean = self.arena.mean_loss(s, a, b);
        let sigma = match self.config.noise {
            NoiseModel::Bernoulli => {
                if self.rng.gen::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::Noiseless => mean,
        };
        let reset = self.config.reset_prob > 0.0 && self.rng.gen::<f64>() < self.config.reset_prob;
        let next_state = if reset {
            self.config.initial.sample(&mut self.rng)
        } else {
            match &self.arena {
                Arena::Matrix(_) => 0,
                Arena::Markov(g) => sample_index(g.transition(s, a, b), &mut self.rng),
            }
        };
        self.state = next_state;
        self.t += 1;
        self.stats.steps += 1;
        self.stats.total_loss += sigma;
        if reset {
            self.stats.episodes += 1;
        }
        Ok(StepOutcome {
            state: s,
            action_x: a,
            action_y: b,
            sigma,
            next_state,
            reset,
        })
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last state with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Rounds after which checkpoint measurements are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Cadence {
    points: Vec<u64>,
}

impl Cadence {
    /// `ceil(start * ratio^k)` for `k = 0, 1, ...` up to `horizon`, plus `horizon` itself.
    pub fn geometric(start: u64, ratio: f64, horizon: u64) -> Self {
        let mut points = Vec::new();
        if horizon > 0 {
            let mut k = 0;
            loop {
                let t = (start.max(1) as f64 * ratio.max(1.0 + 1e-9).powi(k)).ceil() as u64;
                if t >= horizon {
                    break;
                }
                points.push(t);
                k += 1;
            }
            points.push(horizon);
        }
        Self::explicit(points)
    }

    pub fn explicit(mut points: Vec<u64>) -> Self {
        points.retain(|&t| t > 0);
        points.sort_unstable();
        points.dedup();
        Self { points }
    }

    /// Geometric cadence that also contains every point of `extra`.
    pub fn with_points(mut self, extra: &[u64]) -> Self {
        self.points.extend_from_slice(extra);
        Self::explicit(self.points)
    }

    pub fn points(&self) -> &[u64] {
        &self.points
    }
}

/// Instrumentation hooked into a self-play run. Monitors see both players
/// but cannot change them.
pub trait Monitor {
    /// Called after `env.step` and before either player updates, so the
    /// players still hold their round-`t` strategies.
    fn before_update(
        &mut self,
        _t: u64,
        _outcome: &StepOutcome,
        _x: &dyn Player,
        _y: &dyn Player,
        _out: &mut Vec<GapReport>,
    ) -> Result<()> {
        Ok(())
    }

    /// Called after both players updated on round `t`.
    fn after_update(
        &mut self,
        _t: u64,
        _outcome: &StepOutcome,
        _x: &dyn Player,
        _y: &dyn Player,
        _out: &mut Vec<GapReport>,
    ) -> Result<()> {
        Ok(())
    }

    /// Called at every cadence point, after round `t`.
    fn checkpoint(
        &mut self,
        _t: u64,
        _x: &dyn Player,
        _y: &dyn Player,
        _stats: &RunStats,
        _out: &mut Vec<GapReport>,
    ) -> Result<()> {
        Ok(())
    }
}

/// Records the running mean loss at checkpoints.
#[derive(Debug, Default)]
pub struct MeanLossMonitor;

impl Monitor for MeanLossMonitor {
    fn checkpoint(
        &mut self,
        t: u64,
        _x: &dyn Player,
        _y: &dyn Player,
        stats: &RunStats,
        out: &mut Vec<GapReport>,
    ) -> Result<()> {
        out.push(GapReport {
            t,
            metric: Metric::MeanLoss,
            value: stats.mean_loss(),
            state: None,
        });
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelfPlayTrace {
    pub reports: Vec<GapReport>,
    pub stats: RunStats,
}

/// Runs `horizon` rounds of the protocol between `x` and `y`. The x-player
/// receives `sigma`, the y-player `1 - sigma`; both see the next state.
/// Deterministic given the three random streams.
#[allow(clippy::too_many_arguments)]
pub fn run_selfplay(
    env: &mut Env,
    x: &mut dyn Player,
    y: &mut dyn Player,
    horizon: u64,
    rng_x: &mut dyn RngCore,
    rng_y: &mut dyn RngCore,
    cadence: &Cadence,
    monitors: &mut [&mut dyn Monitor],
) -> Result<SelfPlayTrace> {
    let arena = env.arena();
    if x.num_actions() != arena.num_actions_x() || y.num_actions() != arena.num_actions_y() {
        return Err(Error::Dimension {
            expected: arena.num_actions_x(),
            got: x.num_actions(),
        });
    }
    if x.num_states() != arena.num_states() || y.num_states() != arena.num_states() {
        return Err(Error::Dimension {
            expected: arena.num_states(),
            got: x.num_states(),
        });
    }

    let mut reports = Vec::new();
    let mut next_checkpoint = cadence.points().iter().copied().peekable();
    for t in 1..=horizon {
        let s = env.state();
        let a = x.act(s, rng_x)?;
        let b = y.act(s, rng_y)?;
        let outcome = env.step(a, b)?;
        for m in monitors.iter_mut() {
            m.before_update(t, &outcome, &*x, &*y, &mut reports)?;
        }
        x.observe(&outcome.x_observation())?;
        y.observe(&outcome.y_observation())?;
        for m in monitors.iter_mut() {
            m.after_update(t, &outcome, &*x, &*y, &mut reports)?;
        }
        while next_checkpoint.next_if(|&c| c <= t).is_some() {
            for m in monitors.iter_mut() {
                m.checkpoint(t, &*x, &*y, env.stats(), &mut reports)?;
            }
        }
    }
    Ok(SelfPlayTrace {
        reports,
        stats: *env.stats(),
    })
}
