//! End-to-end checks of the interaction protocol and the shipped configs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ugames::env::{run_selfplay, Arena, Cadence, Env, EnvConfig, Monitor, SeedStreams, StepOutcome};
use ugames::harness::{parse_config, run_experiment, trace_files_equal, RunOptions};
use ugames::learner::{GeneralConfig, GeneralLearner, IrreducibleLearner, Observation, Player};
use ugames::metrics::GapReport;
use ugames::par::Execution;
use ugames::schedule::ScheduleParams;
use ugames::{MarkovGame, MixedStrategy, Result};

/// Wraps a player and keeps every observation handed to it.
struct Recorder<P> {
    inner: P,
    seen: Vec<Observation>,
}

impl<P: Player> Player for Recorder<P> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn act(&self, state: usize, rng: &mut dyn RngCore) -> Result<usize> {
        self.inner.act(state, rng)
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.seen.push(*obs);
        self.inner.observe(obs)
    }

    fn strategy(&self, state: usize) -> &MixedStrategy {
        self.inner.strategy(state)
    }
}

#[derive(Default)]
struct Outcomes(Vec<StepOutcome>);

impl Monitor for Outcomes {
    fn before_update(
        &mut self,
        _t: u64,
        outcome: &StepOutcome,
        _x: &dyn Player,
        _y: &dyn Player,
        _out: &mut Vec<GapReport>,
    ) -> Result<()> {
        self.0.push(*outcome);
        Ok(())
    }
}

fn game() -> MarkovGame {
    MarkovGame::random(&mut ChaCha8Rng::seed_from_u64(11), 3, 2, 0.8, 0.1).unwrap()
}

fn irreducible(game: &MarkovGame) -> IrreducibleLearner {
    IrreducibleLearner::new(3, 2, game.discount(), ScheduleParams::irreducible(1.0).unwrap()).unwrap()
}

fn general(game: &MarkovGame) -> GeneralLearner {
    GeneralLearner::new(3, 2, game.discount(), GeneralConfig::practical(2000)).unwrap()
}

fn play<X: Player, Y: Player>(
    game: &MarkovGame,
    x: X,
    y: Y,
    horizon: u64,
) -> (Recorder<X>, Recorder<Y>, Vec<StepOutcome>) {
    let mut streams = SeedStreams::from_seed(3);
    let mut env = Env::new(
        Arena::Markov(game.clone()),
        EnvConfig::continuing(3),
        streams.env.clone(),
    )
    .unwrap();
    let mut x = Recorder {
        inner: x,
        seen: Vec::new(),
    };
    let mut y = Recorder {
        inner: y,
        seen: Vec::new(),
    };
    let mut outcomes = Outcomes::default();
    run_selfplay(
        &mut env,
        &mut x,
        &mut y,
        horizon,
        &mut streams.x,
        &mut streams.y,
        &Cadence::explicit(vec![horizon]),
        &mut [&mut outcomes],
    )
    .unwrap();
    (x, y, outcomes.0)
}

#[test]
fn each_player_sees_only_its_own_action_and_loss() {
    let g = game();
    let (x, y, outcomes) = play(&g, irreducible(&g), irreducible(&g), 2000);
    assert_eq!(outcomes.len(), 2000);
    for ((o, ox), oy) in outcomes.iter().zip(&x.seen).zip(&y.seen) {
        assert_eq!(
            *ox,
            Observation {
                state: o.state,
                action: o.action_x,
                loss: o.sigma,
                next_state: o.next_state
            }
        );
        assert_eq!(
            *oy,
            Observation {
                state: o.state,
                action: o.action_y,
                loss: 1.0 - o.sigma,
                next_state: o.next_state
            }
        );
    }
}

#[test]
fn learners_are_functions_of_their_own_observations() {
    let g = game();
    let (x, y, _) = play(&g, irreducible(&g), general(&g), 2000);
    let mut replay_x = irreducible(&g);
    for obs in &x.seen {
        replay_x.observe(obs).unwrap();
    }
    assert_eq!(replay_x.snapshot(), x.inner.snapshot());
    let mut replay_y = general(&g);
    for obs in &y.seen {
        replay_y.observe(obs).unwrap();
    }
    assert_eq!(replay_y.snapshot(), y.inner.snapshot());
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Shipped config with the horizon and cadence shrunk for a quick run.
fn shrunk(path: &Path) -> String {
    let mut value: toml::Table = fs::read_to_string(path).unwrap().parse().unwrap();
    value.insert("horizon".into(), 1500.into());
    value.insert("cadence".into(), toml::toml! { start = 100 ratio = 4.0 }.into());
    if let Some(doubling) = value
        .get_mut("general")
        .and_then(|g| g.get_mut("doubling"))
        .and_then(|d| d.as_table_mut())
    {
        doubling.insert("t0".into(), 300.into());
    }
    toml::to_string(&value).unwrap()
}

#[test]
fn shipped_configs_run_and_are_reproducible() {
    let mut configs: Vec<PathBuf> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml") && p.file_name().unwrap() != "uniform-policy.toml")
        .collect();
    configs.sort();
    assert!(configs.len() >= 4);
    for path in configs {
        let name = path.file_stem().unwrap().to_str().unwrap();
        let loaded = parse_config(&shrunk(&path), &configs_dir(), name).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let runs: Vec<_> = dirs
            .iter()
            .zip([Execution::Sequential, Execution::Parallel { jobs: 2 }])
            .map(|(dir, execution)| {
                let options = RunOptions {
                    out_dir: Some(dir.path().to_path_buf()),
                    execution,
                    seeds: Some(vec![0, 1]),
                    tol: None,
                };
                run_experiment(&loaded, &options).unwrap()
            })
            .collect();
        for run in &runs {
            assert!(run.failures.is_empty(), "{name}: {:?}", run.failures);
            assert_eq!(run.runs.len(), 2);
        }
        let [a, b] = [0, 1].map(|i| runs[i].out_dir.clone().unwrap());
        assert!(trace_files_equal(&a, &b).unwrap(), "{name}");
        assert_eq!(
            fs::read(a.join("summary.csv")).unwrap(),
            fs::read(b.join("summary.csv")).unwrap()
        );
    }
}
