//! Multi-seed experiments: builds players from a config, runs self-play with
//! measurement hooks and writes per-seed traces plus a cross-seed summary.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use sha2::{Digest, Sha256};

use super::config::{to_toml, Algorithm, Game, GameSpec, LoadedConfig};
use super::trace::{summarize, write_failures, write_summary, write_trace, SummaryRow, TraceRecord};
use crate::env::{run_selfplay, Arena, Cadence, Env, EnvConfig, Monitor, RunStats, SeedStreams, StepOutcome};
use crate::error::{Error, Result};
use crate::game::StationaryPolicy;
use crate::learner::{FixedPolicy, GeneralLearner, IrreducibleLearner, MatrixLearner, Player};
use crate::metrics::{
    episodic_payoff_check, markov_lastiterate_gap, markov_rationality_gap, matrix_duality_gap, path_gap,
    rationality_gap, regularized_kl, value_error, GapReport, Metric,
};
use crate::oracles::{shapley_q_star, solve_matrix_minimax, OracleSolution, StarTables};
use crate::par::{self, Execution};
use crate::schedule::ScheduleParams;
use crate::simplex::{ClippedSimplex, MixedStrategy};

/// Slack allowed when checking the ordering and range of value bounds.
pub const VALUE_BOUND_TOL: f64 = 1e-12;

/// Reference solution of a game.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Matrix(OracleSolution),
    Markov(StarTables),
}

impl Reference {
    pub fn equilibrium(&self) -> (StationaryPolicy, StationaryPolicy) {
        match self {
            Reference::Matrix(sol) => (
                StationaryPolicy::constant(1, sol.x_star.clone()),
                StationaryPolicy::constant(1, sol.y_star.clone()),
            ),
            Reference::Markov(star) => (star.x_star.clone(), star.y_star.clone()),
        }
    }

    fn star(&self) -> Option<&StarTables> {
        match self {
            Reference::Markov(star) => Some(star),
            Reference::Matrix(_) => None,
        }
    }
}

type CacheKey = (String, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Reference>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Reference>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn game_key(game: &Game) -> Result<String> {
    let text = to_toml(&GameSpec::from_game(game))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Solves `game` to accuracy `tol`, reusing earlier solutions in this process.
pub fn reference(game: &Game, tol: f64) -> Result<Arc<Reference>> {
    let key = (game_key(game)?, tol.to_bits());
    if let Some(hit) = cache().lock().expect("oracle cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let solved = Arc::new(match game {
        Game::Matrix(g) => Reference::Matrix(solve_matrix_minimax(g, tol)?.require_certified()?),
        Game::Markov(g) => Reference::Markov(shapley_q_star(g, tol)?),
    });
    cache()
        .lock()
        .expect("oracle cache poisoned")
        .insert(key, Arc::clone(&solved));
    Ok(solved)
}

/// Result of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<GapReport>,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub run_id: String,
    pub config_hash: String,
    pub runs: Vec<SeedRun>,
    pub failures: Vec<(u64, String)>,
    pub summary: Vec<SummaryRow>,
    /// Directory the files were written to, if any.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentOutcome {
    /// Summary cell for `(metric, state, t)`.
    pub fn cell(&self, metric: Metric, state: Option<usize>, t: u64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.metric == metric && r.state == state && r.t == t)
    }

    /// Seed values of one cell, in seed order.
    pub fn values(&self, metric: Metric, state: Option<usize>, t: u64) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|run| {
                run.reports
                    .iter()
                    .find(|r| r.metric == metric && r.state == state && r.t == t)
                    .map(|r| r.value)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Root directory for output files; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub execution: Execution,
    /// Replaces the configured seeds.
    pub seeds: Option<Vec<u64>>,
    /// Replaces the configured oracle tolerance.
    pub tol: Option<f64>,
}

/// Runs every seed of `loaded`. Seeds that fail are recorded; the call
/// fails only if every seed fails.
pub fn run_experiment(loaded: &LoadedConfig, options: &RunOptions) -> Result<ExperimentOutcome> {
    let mut loaded = loaded.clone();
    if let Some(seeds) = &options.seeds {
        if seeds.is_empty() {
            return Err(Error::Config("seed list must not be empty".into()));
        }
        loaded.config.seeds = seeds.clone();
    }
    if let Some(tol) = options.tol {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Config(format!("tol = {tol} must be positive")));
        }
        loaded.config.tol = Some(tol);
    }
    if options.seeds.is_some() || options.tol.is_some() {
        loaded.hash = super::config::config_hash(&loaded.config, &loaded.game)?;
    }

    let reference = reference(&loaded.game, loaded.tol())?;
    let seeds = loaded.config.seeds.clone();
    let results = par::map(options.execution, &seeds, |&seed| run_seed(&loaded, &reference, seed));

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, result) in seeds.iter().zip(results) {
        match result {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((*seed, e.to_string())),
        }
    }
    let summary = summarize(runs.iter().map(|r| r.reports.as_slice()));
    let mut outcome = ExperimentOutcome {
        run_id: loaded.run_id.clone(),
        config_hash: loaded.hash.clone(),
        runs,
        failures,
        summary,
        out_dir: None,
    };
    if let Some(root) = &options.out_dir {
        outcome.out_dir = Some(write_outputs(root, &loaded, &outcome)?);
    }
    if outcome.runs.is_empty() {
        let (seed, msg) = &outcome.failures[0];
        return Err(Error::Trace(format!("all seeds failed; seed {seed}: {msg}")));
    }
    Ok(outcome)
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace-seed-{seed}.csv")
}

fn write_outputs(root: &Path, loaded: &LoadedConfig, outcome: &ExperimentOutcome) -> Result<PathBuf> {
    let dir = root.join(&loaded.run_id);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), to_toml(&loaded.config)?)?;
    for run in &outcome.runs {
        let records: Vec<TraceRecord> = run
            .reports
            .iter()
            .map(|r| TraceRecord::from_report(&loaded.run_id, run.seed, &loaded.hash, r))
            .collect();
        let mut out = BufWriter::new(File::create(dir.join(trace_file_name(run.seed)))?);
        write_trace(&mut out, &records)?;
    }
    write_summary(
        &mut BufWriter::new(File::create(dir.join("summary.csv"))?),
        &outcome.summary,
    )?;
    write_failures(
        &mut BufWriter::new(File::create(dir.join("failures.csv"))?),
        &outcome.failures,
    )?;
    Ok(dir)
}

/// Whether two output directories hold byte-identical trace files for the
/// same set of seeds.
pub fn trace_files_equal(a: &Path, b: &Path) -> Result<bool> {
    let traces = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>> {
        let mut files = Vec::new();
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if name.starts_with("trace-seed-") {
                files.push((name.clone(), fs::read(dir.join(&name))?));
            }
        }
        files.sort();
        Ok(files)
    };
    let (left, right) = (traces(a)?, traces(b)?);
    Ok(!left.is_empty() && left == right)
}

/// One epoch of a (possibly doubling) run.
struct Epoch {
    index: usize,
    offset: u64,
    len: u64,
    /// Horizon handed to the learner; exceeds `len` when the last epoch is cut short.
    learner_horizon: u64,
    u: Option<f64>,
}

fn epochs(loaded: &LoadedConfig) -> Vec<Epoch> {
    let horizon = loaded.config.horizon;
    let general = loaded.config.general.unwrap_or_default();
    let Some(doubling) = general
        .doubling
        .filter(|_| loaded.config.algorithm == Algorithm::MarkovGeneral)
    else {
        return vec![Epoch {
            index: 0,
            offset: 0,
            len: horizon,
            learner_horizon: horizon,
            u: None,
        }];
    };
    let u0 = general.u.expect("validated: theoretical preset has u");
    let mut out = Vec::new();
    let mut offset = 0;
    let mut k = 0;
    while offset < horizon {
        let full = doubling.t0.saturating_mul(1u64 << k.min(62));
        let len = full.min(horizon - offset);
        out.push(Epoch {
            index: k,
            offset,
            len,
            learner_horizon: full,
            u: Some(doubling_u(u0, doubling.t0, k)),
        });
        offset += len;
        k += 1;
    }
    out
}

/// `u_k = u_0 (2^k t0)^{-1/10}`.
pub fn doubling_u(u0: f64, t0: u64, k: usize) -> f64 {
    u0 * (2f64.powi(k as i32) * t0 as f64).powf(-0.1)
}

fn build_players(
    loaded: &LoadedConfig,
    reference: &Reference,
    epoch: &Epoch,
) -> Result<(Box<dyn Player>, Box<dyn Player>)> {
    let game = &loaded.game;
    let (s, ax, ay) = (game.num_states(), game.num_actions_x(), game.num_actions_y());
    let opponent = loaded.opponent()?;
    let learner = |actions: usize| -> Result<Box<dyn Player>> {
        let algorithm = loaded.config.algorithm;
        Ok(match (algorithm, game) {
            (Algorithm::MatrixHp | Algorithm::MatrixExpected, Game::Matrix(_)) => Box::new(MatrixLearner::with_params(
                actions,
                algorithm.matrix_variant().expect("matrix algorithm"),
                loaded.schedule_params()?,
            )?),
            (Algorithm::MarkovIrreducible, Game::Markov(g)) => Box::new(IrreducibleLearner::new(
                s,
                actions,
                g.discount(),
                loaded.schedule_params()?,
            )?),
            (Algorithm::MarkovGeneral, Game::Markov(g)) => Box::new(GeneralLearner::new(
                s,
                actions,
                g.discount(),
                loaded.general_config(epoch.learner_horizon, epoch.u)?,
            )?),
            _ => unreachable!("checked when the config was loaded"),
        })
    };
    if loaded.config.algorithm == Algorithm::Equilibrium {
        let (x, y) = reference.equilibrium();
        return Ok((Box::new(FixedPolicy::new(x)), Box::new(FixedPolicy::new(y))));
    }
    let x = learner(ax)?;
    let y: Box<dyn Player> = match opponent {
        Some(policy) => Box::new(FixedPolicy::new(policy)),
        None => learner(ay)?,
    };
    Ok((x, y))
}

fn run_seed(loaded: &LoadedConfig, reference: &Reference, seed: u64) -> Result<SeedRun> {
    let mut streams = SeedStreams::from_seed(seed);
    let arena = match &loaded.game {
        Game::Matrix(g) => Arena::Matrix(g.clone()),
        Game::Markov(g) => Arena::Markov(g.clone()),
    };
    let mut env_config = EnvConfig::continuing(loaded.game.num_states()).with_noise(loaded.config.noise);
    if loaded.config.episodic {
        if let Game::Markov(g) = &loaded.game {
            env_config = EnvConfig::episodic(g.discount(), loaded.rho()?).with_noise(loaded.config.noise);
        }
    }
    let mut env = Env::new(arena, env_config, streams.env.clone())?;
    let cadence = loaded.cadence();
    let mut probe = Probe::new(loaded, reference)?;
    let mut reports = Vec::new();

    for epoch in epochs(loaded) {
        let (mut x, mut y) = build_players(loaded, reference, &epoch)?;
        if let Some(u) = epoch.u {
            reports.push(GapReport {
                t: epoch.offset + 1,
                metric: Metric::EpochStart,
                value: epoch.index as f64,
                state: None,
            });
            reports.push(GapReport {
                t: epoch.offset + 1,
                metric: Metric::DoublingU,
                value: u,
                state: None,
            });
        }
        let local = Cadence::explicit(
            cadence
                .points()
                .iter()
                .filter(|&&t| t > epoch.offset && t <= epoch.offset + epoch.len)
                .map(|t| t - epoch.offset)
                .collect(),
        );
        probe.offset = epoch.offset;
        let trace = run_selfplay(
            &mut env,
            x.as_mut(),
            y.as_mut(),
            epoch.len,
            &mut streams.x,
            &mut streams.y,
            &local,
            &mut [&mut probe],
        )?;
        reports.extend(trace.reports);
    }
    Ok(SeedRun {
        seed,
        reports,
        stats: *env.stats(),
    })
}

/// Measurement hook driven by the config.
struct Probe<'a> {
    loaded: &'a LoadedConfig,
    reference: &'a Reference,
    tol: f64,
    opponent: Option<StationaryPolicy>,
    schedule: Option<ScheduleParams>,
    offset: u64,
    path_sum: f64,
    path_steps: u64,
    lastiterate_sum: f64,
    lastiterate_count: u64,
    violations: u64,
}

impl<'a> Probe<'a> {
    fn new(loaded: &'a LoadedConfig, reference: &'a Reference) -> Result<Self> {
        let schedule = match loaded.config.algorithm {
            Algorithm::MatrixHp | Algorithm::MatrixExpected => Some(loaded.schedule_params()?),
            _ => None,
        };
        Ok(Self {
            loaded,
            reference,
            tol: loaded.tol(),
            opponent: loaded.opponent()?,
            schedule,
            offset: 0,
            path_sum: 0.0,
            path_steps: 0,
            lastiterate_sum: 0.0,
            lastiterate_count: 0,
            violations: 0,
        })
    }

    fn self_play(&self) -> bool {
        self.opponent.is_none()
    }

    fn is_general(&self) -> bool {
        self.loaded.config.algorithm == Algorithm::MarkovGeneral
    }

    fn tracks_path(&self) -> bool {
        self.self_play() && matches!(self.loaded.game, Game::Markov(_))
    }
}

impl Monitor for Probe<'_> {
    fn before_update(
        &mut self,
        _t: u64,
        outcome: &StepOutcome,
        x: &dyn Player,
        y: &dyn Player,
        _out: &mut Vec<GapReport>,
    ) -> Result<()> {
        if self.tracks_path() {
            if let Some(star) = self.reference.star() {
                let s = outcome.state;
                self.path_sum += path_gap(star, s, x.strategy(s), y.strategy(s))?;
                self.path_steps += 1;
            }
        }
        Ok(())
    }

    fn after_update(
        &mut self,
        _t: u64,
        _outcome: &StepOutcome,
        x: &dyn Player,
        y: &dyn Player,
        _out: &mut Vec<GapReport>,
    ) -> Result<()> {
        if self.is_general() && self.self_play() {
            let Game::Markov(g) = &self.loaded.game else {
                return Ok(());
            };
            let cap = 1.0 / (1.0 - g.discount());
            let (Some(lower), Some(y_lower)) = (x.values(), y.values()) else {
                return Ok(());
            };
            let slack = VALUE_BOUND_TOL * cap;
            let bad = lower.iter().zip(y_lower).any(|(&lo, &yl)| {
                let up = cap - yl;
                up < lo - slack || lo < -slack || lo > cap + slack || up < -slack || up > cap + slack
            });
            if bad {
                self.violations += 1;
            }
        }
        Ok(())
    }

    fn checkpoint(
        &mut self,
        t: u64,
        x: &dyn Player,
        y: &dyn Player,
        stats: &RunStats,
        out: &mut Vec<GapReport>,
    ) -> Result<()> {
        let t_global = t + self.offset;
        let mut push = |metric, value, state| {
            out.push(GapReport {
                t: t_global,
                metric,
                value,
                state,
            })
        };
        let metrics = &self.loaded.config.metrics;
        match &self.loaded.game {
            Game::Matrix(g) => {
                let (xs, ys) = (x.strategy(0), y.strategy(0));
                match &self.opponent {
                    Some(fixed) => push(Metric::RationalityGap, rationality_gap(g, xs, fixed.state(0))?, None),
                    None => {
                        push(Metric::DualityGap, matrix_duality_gap(g, xs, ys)?, None);
                        if let (Some(params), true) = (self.schedule, metrics.regularized_kl) {
                            // The pair held after round t lives on the floor-1/(A (t+1)^2)
                            // domain and tracks the equilibrium regularized with epsilon_t.
                            let eps = params.at(t_global, 0.0).epsilon;
                            let dx = ClippedSimplex::time_indexed(xs.len(), t_global + 1);
                            let dy = ClippedSimplex::time_indexed(ys.len(), t_global + 1);
                            push(
                                Metric::RegularizedKl,
                                regularized_kl(g.loss(), eps, &dx, &dy, xs, ys, self.tol)?,
                                None,
                            );
                        }
                    }
                }
            }
            Game::Markov(g) => {
                let star = self.reference.star().expect("Markov reference");
                let (xp, yp) = (x.policy(), y.policy());
                match &self.opponent {
                    Some(fixed) => push(
                        Metric::MarkovRationalityGap,
                        markov_rationality_gap(g, &xp, fixed, self.tol)?,
                        None,
                    ),
                    None => {
                        if let Some(values) = x.values() {
                            push(Metric::ValueError, value_error(values, star)?, None);
                        }
                        if metrics.lastiterate_gap {
                            let gap = markov_lastiterate_gap(g, &xp, &yp, self.tol)?;
                            self.lastiterate_sum += gap;
                            self.lastiterate_count += 1;
                            push(Metric::LastIterateGap, gap, None);
                            push(
                                Metric::BestIterateGap,
                                self.lastiterate_sum / self.lastiterate_count as f64,
                                None,
                            );
                        }
                        if self.path_steps > 0 {
                            push(Metric::PathGapAverage, self.path_sum / self.path_steps as f64, None);
                        }
                        if self.is_general() {
                            let cap = 1.0 / (1.0 - g.discount());
                            if let (Some(lower), Some(y_lower)) = (x.values(), y.values()) {
                                for (s, (&lo, &yl)) in lower.iter().zip(y_lower).enumerate() {
                                    push(Metric::ValueLower, lo, Some(s));
                                    push(Metric::ValueUpper, cap - yl, Some(s));
                                }
                            }
                            push(Metric::InvariantViolations, self.violations as f64, None);
                        }
                    }
                }
                if stats.episodic {
                    push(
                        Metric::EpisodicPayoff,
                        episodic_payoff_check(stats, &self.loaded.rho()?, star)?,
                        None,
                    );
                }
            }
        }
        push(Metric::MeanLoss, stats.mean_loss(), None);
        Ok(())
    }
}

/// Human-readable reference solution of a game, as TOML.
pub fn describe_reference(reference: &Reference) -> String {
    fn row(p: &MixedStrategy) -> String {
        let cells: Vec<String> = p.probs().iter().map(|v| format!("{v}")).collect();
        format!("[{}]", cells.join(", "))
    }
    let mut out = String::new();
    match reference {
        Reference::Matrix(sol) => {
            out.push_str("kind = \"matrix\"\n");
            out.push_str(&format!("value = {}\n", sol.value));
            out.push_str(&format!("x_star = {}\n", row(&sol.x_star)));
            out.push_str(&format!("y_star = {}\n", row(&sol.y_star)));
            out.push_str(&format!("certified_gap = {:e}\n", sol.certified_gap));
            out.push_str(&format!("certified = {}\n", sol.certified));
        }
        Reference::Markov(star) => {
            out.push_str("kind = \"markov\"\n");
            out.push_str(&format!("gamma = {}\n", star.gamma));
            let v: Vec<String> = star.v_star.iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!("v_star = [{}]\n", v.join(", ")));
            let xs: Vec<String> = star.x_star.states().iter().map(row).collect();
            let ys: Vec<String> = star.y_star.states().iter().map(row).collect();
            out.push_str(&format!("x_star = [{}]\n", xs.join(", ")));
            out.push_str(&format!("y_star = [{}]\n", ys.join(", ")));
            for (s, q) in star.q_star.iter().enumerate() {
                let rows: Vec<String> = q
                    .to_rows()
                    .iter()
                    .map(|r| format!("[{}]", r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", ")))
                    .collect();
                out.push_str(&format!("q_star_{s} = [{}]\n", rows.join(", ")));
            }
        }
    }
    out
}

/// Gaps of a fixed policy pair: the exact duality gap for matrix games; the
/// last-iterate gap and per-state gaps against `Q*` for Markov games.
pub fn audit(game: &Game, x: &StationaryPolicy, y: &StationaryPolicy, tol: f64) -> Result<Vec<GapReport>> {
    let report = |metric, value, state| GapReport {
        t: 0,
        metric,
        value,
        state,
    };
    match game {
        Game::Matrix(g) => {
            if x.num_states() != 1 || y.num_states() != 1 {
                return Err(Error::Dimension {
                    expected: 1,
                    got: x.num_states().max(y.num_states()),
                });
            }
            Ok(vec![report(
                Metric::DualityGap,
                matrix_duality_gap(g, x.state(0), y.state(0))?,
                None,
            )])
        }
        Game::Markov(g) => {
            let star = shapley_q_star(g, tol)?;
            let mut out = vec![report(
                Metric::LastIterateGap,
                markov_lastiterate_gap(g, x, y, tol)?,
                None,
            )];
            for s in 0..g.num_states() {
                out.push(report(
                    Metric::PathGap,
                    path_gap(&star, s, x.state(s), y.state(s))?,
                    Some(s),
                ));
            }
            Ok(out)
        }
    }
}
