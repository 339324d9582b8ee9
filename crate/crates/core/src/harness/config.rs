//! Run configuration and on-disk game and policy files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Cadence, NoiseModel};
use crate::error::{Error, Result};
use crate::game::{MarkovGame, MatrixGame, StationaryPolicy};
use crate::learner::{GeneralConfig, MatrixVariant};
use crate::oracles::{DEFAULT_MARKOV_TOL, DEFAULT_MATRIX_TOL};
use crate::schedule::ScheduleParams;
use crate::simplex::MixedStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Matrix-game learner with the IX estimator.
    MatrixHp,
    /// Matrix-game learner tuned for expected rates.
    MatrixExpected,
    /// Markov-game learner for irreducible games.
    MarkovIrreducible,
    /// Markov-game learner with the optimism bonus.
    MarkovGeneral,
    /// Both players fixed at the oracle equilibrium; a baseline.
    Equilibrium,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::MatrixHp => "matrix-hp",
            Algorithm::MatrixExpected => "matrix-expected",
            Algorithm::MarkovIrreducible => "markov-irreducible",
            Algorithm::MarkovGeneral => "markov-general",
            Algorithm::Equilibrium => "equilibrium",
        }
    }

    pub fn matrix_variant(self) -> Option<MatrixVariant> {
        match self {
            Algorithm::MatrixHp => Some(MatrixVariant::HighProbability),
            Algorithm::MatrixExpected => Some(MatrixVariant::Expected),
            _ => None,
        }
    }

    fn needs_markov(self) -> bool {
        matches!(self, Algorithm::MarkovIrreducible | Algorithm::MarkovGeneral)
    }
}

/// A game as stored on disk or inline under `[game]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSpec {
    Matrix {
        /// Row-major loss of the x-player, entries in `[0, 1]`.
        loss: Vec<Vec<f64>>,
    },
    Markov {
        discount: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        num_states: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        num_actions: Option<usize>,
        /// `loss[s][a][b]`.
        loss: Vec<Vec<Vec<f64>>>,
        /// `transition[s][a][b][s']`.
        transition: Vec<Vec<Vec<Vec<f64>>>>,
    },
}

/// A validated game.
#[derive(Debug, Clone, PartialEq)]
pub enum Game {
    Matrix(MatrixGame),
    Markov(MarkovGame),
}

impl Game {
    pub fn num_states(&self) -> usize {
        match self {
            Game::Matrix(_) => 1,
            Game::Markov(g) => g.num_states(),
        }
    }

    pub fn num_actions_x(&self) -> usize {
        match self {
            Game::Matrix(g) => g.num_actions_x(),
            Game::Markov(g) => g.num_actions_x(),
        }
    }

    pub fn num_actions_y(&self) -> usize {
        match self {
            Game::Matrix(g) => g.num_actions_y(),
            Game::Markov(g) => g.num_actions_y(),
        }
    }
}

impl GameSpec {
    pub fn build(&self) -> Result<Game> {
        match self {
            GameSpec::Matrix { loss } => Ok(Game::Matrix(MatrixGame::from_rows(loss)?)),
            GameSpec::Markov {
                discount,
                num_states,
                num_actions,
                loss,
                transition,
            } => {
                if let Some(n) = num_states {
                    if *n != loss.len() {
                        return Err(Error::InvalidGame(format!(
                            "num_states = {n} but loss has {} states",
                            loss.len()
                        )));
                    }
                }
                let losses = loss
                    .iter()
                    .map(|rows| MatrixGame::from_rows(rows))
                    .collect::<Result<Vec<_>>>()?;
                let game = MarkovGame::new(losses, transition.clone(), *discount)?;
                if let Some(a) = num_actions {
                    if *a != game.num_actions_x() {
                        return Err(Error::InvalidGame(format!(
                            "num_actions = {a} but loss has {} actions",
                            game.num_actions_x()
                        )));
                    }
                }
                Ok(Game::Markov(game))
            }
        }
    }

    pub fn from_game(game: &Game) -> Self {
        match game {
            Game::Matrix(g) => GameSpec::Matrix {
                loss: g.loss().to_rows(),
            },
            Game::Markov(g) => GameSpec::Markov {
                discount: g.discount(),
                num_states: Some(g.num_states()),
                num_actions: Some(g.num_actions_x()),
                loss: g.losses().iter().map(|m| m.loss().to_rows()).collect(),
                transition: g.transition_tensor(),
            },
        }
    }
}

pub fn load_game(path: &Path) -> Result<Game> {
    let text = read(path)?;
    let spec: GameSpec = parse_toml(&text, path)?;
    spec.build()
}

/// A pair of stationary policies, one row of probabilities per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl PolicyFile {
    pub fn policies(&self) -> Result<(StationaryPolicy, StationaryPolicy)> {
        Ok((to_policy(&self.x)?, to_policy(&self.y)?))
    }
}

pub fn load_policies(path: &Path) -> Result<(StationaryPolicy, StationaryPolicy)> {
    let text = read(path)?;
    let file: PolicyFile = parse_toml(&text, path)?;
    file.policies()
}

fn to_policy(rows: &[Vec<f64>]) -> Result<StationaryPolicy> {
    StationaryPolicy::new(
        rows.iter()
            .map(|p| MixedStrategy::new(p.clone()))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Optional exponent overrides for the polynomial schedules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_alpha: Option<f64>,
}

impl ScheduleOverrides {
    fn apply(&self, base: ScheduleParams) -> Result<ScheduleParams> {
        ScheduleParams::new(
            self.k_eta.unwrap_or(base.k_eta),
            self.k_beta.unwrap_or(base.k_beta),
            self.k_epsilon.unwrap_or(base.k_epsilon),
            self.k_alpha.unwrap_or(base.k_alpha),
            base.scaling,
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Fixed small constants suited to desk-scale horizons.
    #[default]
    Practical,
    /// Constants derived from a target accuracy `u`.
    Theoretical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Doubling {
    /// Length of the first epoch; epoch `k` lasts `2^k t0` steps.
    pub t0: u64,
}

/// Settings of the general Markov-game learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralSection {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Target accuracy for the theoretical preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doubling: Option<Doubling>,
}

impl Default for GeneralSection {
    fn default() -> Self {
        Self {
            preset: Preset::Practical,
            kappa: default_kappa(),
            eta: None,
            beta: None,
            epsilon: None,
            u: None,
            doubling: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CadenceSection {
    #[serde(default = "default_cadence_start")]
    pub start: u64,
    #[serde(default = "default_cadence_ratio")]
    pub ratio: f64,
    /// Extra checkpoints on top of the geometric grid.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<u64>,
}

impl Default for CadenceSection {
    fn default() -> Self {
        Self {
            start: default_cadence_start(),
            ratio: default_cadence_ratio(),
            points: Vec::new(),
        }
    }
}

impl CadenceSection {
    pub fn cadence(&self, horizon: u64) -> Cadence {
        Cadence::geometric(self.start, self.ratio, horizon).with_points(
            &self
                .points
                .iter()
                .copied()
                .filter(|&t| t <= horizon)
                .collect::<Vec<_>>(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// KL to the regularized equilibrium (matrix games only).
    #[serde(default = "default_true")]
    pub regularized_kl: bool,
    /// Markov last-iterate gap (two best-response solves per checkpoint).
    #[serde(default = "default_true")]
    pub lastiterate_gap: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            regularized_kl: true,
            lastiterate_gap: true,
        }
    }
}

/// Fixed stationary policy for the y-player, one row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpponentSection {
    pub policy: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub episodic: bool,
    /// Initial-state distribution for episodic resets; uniform by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_varepsilon")]
    pub varepsilon: f64,
    /// Oracle accuracy; defaults depend on the game kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Path of a game file, relative to the config file. Exclusive with `[game]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general: Option<GeneralSection>,
    #[serde(default)]
    pub cadence: CadenceSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opponent: Option<OpponentSection>,
}

fn default_delta() -> f64 {
    0.05
}

fn default_varepsilon() -> f64 {
    1.0
}

fn default_kappa() -> f64 {
    0.01
}

fn default_cadence_start() -> u64 {
    10
}

fn default_cadence_ratio() -> f64 {
    1.25
}

fn default_true() -> bool {
    true
}

/// A configuration with its game resolved and every constraint checked.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub game: Game,
    pub run_id: String,
    pub hash: String,
}

impl LoadedConfig {
    pub fn tol(&self) -> f64 {
        self.config.tol.unwrap_or(match self.game {
            Game::Matrix(_) => DEFAULT_MATRIX_TOL,
            Game::Markov(_) => DEFAULT_MARKOV_TOL,
        })
    }

    pub fn cadence(&self) -> Cadence {
        self.config.cadence.cadence(self.config.horizon)
    }

    /// Schedule exponents for the polynomial-schedule learners.
    pub fn schedule_params(&self) -> Result<ScheduleParams> {
        let c = &self.config;
        let base = match c.algorithm {
            Algorithm::MatrixHp => ScheduleParams::matrix_high_probability(),
            Algorithm::MatrixExpected => ScheduleParams::matrix_expected(),
            Algorithm::MarkovIrreducible => ScheduleParams::irreducible(c.varepsilon)?,
            _ => {
                return Err(Error::Config(format!(
                    "{} has no polynomial schedule",
                    c.algorithm.as_str()
                )))
            }
        };
        c.schedule.unwrap_or_default().apply(base)
    }

    /// Constants of the general learner for an epoch of length `horizon`
    /// with accuracy `u` (theoretical preset only).
    pub fn general_config(&self, horizon: u64, u: Option<f64>) -> Result<GeneralConfig> {
        let c = &self.config;
        let section = c.general.unwrap_or_default();
        let Game::Markov(game) = &self.game else {
            return Err(Error::Config("markov-general needs a Markov game".into()));
        };
        let mut cfg = match section.preset {
            Preset::Practical => {
                let mut cfg = GeneralConfig::practical(horizon);
                cfg.kappa = section.kappa;
                cfg.delta = c.delta;
                cfg
            }
            Preset::Theoretical => {
                let u = u
                    .or(section.u)
                    .ok_or_else(|| Error::Config("general.u is required by the theoretical preset".into()))?;
                GeneralConfig::theoretical(
                    u,
                    game.discount(),
                    game.num_states(),
                    game.num_actions_x(),
                    horizon,
                    section.kappa,
                    c.delta,
                )
                .map_err(|e| Error::Config(e.to_string()))?
            }
        };
        cfg.eta = section.eta.unwrap_or(cfg.eta);
        cfg.beta = section.beta.unwrap_or(cfg.beta);
        cfg.epsilon = section.epsilon.unwrap_or(cfg.epsilon);
        Ok(cfg)
    }

    pub fn opponent(&self) -> Result<Option<StationaryPolicy>> {
        self.config.opponent.as_ref().map(|o| to_policy(&o.policy)).transpose()
    }

    pub fn rho(&self) -> Result<MixedStrategy> {
        match &self.config.rho {
            Some(p) => MixedStrategy::new(p.clone()),
            None => Ok(MixedStrategy::uniform(self.game.num_states())),
        }
    }
}

/// Reads, parses and validates a configuration file. A game referenced by
/// `game_file` is resolved relative to the config's directory.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = read(path)?;
    let config: RunConfig = parse_toml(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let default_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
    resolve(config, base, &default_id)
}

/// Parses a configuration from text; `game_file` resolves against `base`.
pub fn parse_config(text: &str, base: &Path, default_id: &str) -> Result<LoadedConfig> {
    let config: RunConfig = parse_toml(text, Path::new("<config>"))?;
    resolve(config, base, default_id)
}

pub fn resolve(config: RunConfig, base: &Path, default_id: &str) -> Result<LoadedConfig> {
    let game = match (&config.game, &config.game_file) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("set either [game] or game_file, not both".into()));
        }
        (None, None) => return Err(Error::Config("missing [game] section or game_file".into())),
        (Some(spec), None) => spec.build(),
        (None, Some(file)) => load_game(&base.join(file)),
    }
    .map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(format!("game: {other}")),
    })?;
    let run_id = config.name.clone().unwrap_or_else(|| default_id.to_string());
    let hash = config_hash(&config, &game)?;
    let loaded = LoadedConfig {
        config,
        game,
        run_id,
        hash,
    };
    validate(&loaded)?;
    Ok(loaded)
}

fn validate(loaded: &LoadedConfig) -> Result<()> {
    let c = &loaded.config;
    let fail = |msg: String| Err(Error::Config(msg));
    if c.horizon == 0 {
        return fail("horizon must be at least 1".into());
    }
    if c.seeds.is_empty() {
        return fail("seeds must not be empty".into());
    }
    let mut seeds = c.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.len() != c.seeds.len() {
        return fail("seeds must be distinct".into());
    }
    if !(c.delta > 0.0 && c.delta < 1.0) {
        return fail(format!("delta = {} outside (0, 1)", c.delta));
    }
    if !(c.varepsilon > 0.0 && c.varepsilon.is_finite()) {
        return fail(format!("varepsilon = {} must be positive", c.varepsilon));
    }
    if let Some(tol) = c.tol {
        if tol.is_nan() || tol <= 0.0 {
            return fail(format!("tol = {tol} must be positive"));
        }
    }
    if c.cadence.start == 0 || c.cadence.ratio.is_nan() || c.cadence.ratio <= 1.0 {
        return fail("cadence needs start >= 1 and ratio > 1".into());
    }
    let markov = matches!(loaded.game, Game::Markov(_));
    if c.algorithm.needs_markov() && !markov {
        return fail(format!("{} needs a Markov game", c.algorithm.as_str()));
    }
    if c.algorithm.matrix_variant().is_some() && markov {
        return fail(format!("{} needs a matrix game", c.algorithm.as_str()));
    }
    if loaded.game.num_actions_x() != loaded.game.num_actions_y() && !matches!(loaded.game, Game::Matrix(_)) {
        return fail("Markov games need equal action counts".into());
    }
    if c.episodic && !markov {
        return fail("episodic mode needs a Markov game".into());
    }
    if c.rho.is_some() && !c.episodic {
        return fail("rho is only used in episodic mode".into());
    }
    if c.episodic {
        let rho = loaded.rho().map_err(|e| Error::Config(format!("rho: {e}")))?;
        if rho.len() != loaded.game.num_states() {
            return fail(format!(
                "rho has {} entries for {} states",
                rho.len(),
                loaded.game.num_states()
            ));
        }
    }
    if let Some(opp) = &c.opponent {
        let policy = to_policy(&opp.policy).map_err(|e| Error::Config(format!("opponent.policy: {e}")))?;
        if policy.num_states() != loaded.game.num_states()
            || policy.states().iter().any(|p| p.len() != loaded.game.num_actions_y())
        {
            return fail("opponent.policy must have one row of y-actions per state".into());
        }
        if c.algorithm == Algorithm::Equilibrium {
            return fail("equilibrium runs take no opponent".into());
        }
    }
    if c.schedule.is_some() {
        loaded
            .schedule_params()
            .map_err(|e| Error::Config(format!("schedule: {e}")))?;
    }
    if c.general.is_some() && c.algorithm != Algorithm::MarkovGeneral {
        return fail("[general] only applies to markov-general".into());
    }
    if c.algorithm == Algorithm::MarkovGeneral {
        validate_general(loaded)?;
    }
    Ok(())
}

fn validate_general(loaded: &LoadedConfig) -> Result<()> {
    let section = loaded.config.general.unwrap_or_default();
    if let Some(d) = section.doubling {
        if d.t0 == 0 {
            return Err(Error::Config("general.doubling.t0 must be at least 1".into()));
        }
        if section.preset != Preset::Theoretical {
            return Err(Error::Config("general.doubling needs preset = \"theoretical\"".into()));
        }
    }
    let cfg = loaded.general_config(loaded.config.horizon, None)?;
    let mut offending = Vec::new();
    if cfg.eta > cfg.beta {
        offending.push(format!("general.eta ({}) > general.beta ({})", cfg.eta, cfg.beta));
    }
    if cfg.beta > cfg.epsilon {
        offending.push(format!(
            "general.beta ({}) > general.epsilon ({})",
            cfg.beta, cfg.epsilon
        ));
    }
    if !offending.is_empty() {
        return Err(Error::Config(format!(
            "need eta <= beta <= epsilon: {}",
            offending.join(", ")
        )));
    }
    cfg.validate().map_err(|e| Error::Config(format!("general: {e}")))
}

/// SHA-256 over the canonical serialization of the config and its resolved game.
pub fn config_hash(config: &RunConfig, game: &Game) -> Result<String> {
    let mut canonical = config.clone();
    canonical.game = Some(GameSpec::from_game(game));
    canonical.game_file = None;
    let text = to_toml(&canonical)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Config(e.to_string()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|span| {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!(" (line {line})")
            })
            .unwrap_or_default();
        Error::Config(format!("{}{location}: {}", path.display(), e.message()))
    })
}
