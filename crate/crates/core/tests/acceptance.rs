//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ugames::env::NoiseModel;
use ugames::harness::config::{resolve, CadenceSection, GeneralSection, MetricsSection, OpponentSection};
use ugames::harness::trace::median;
use ugames::harness::{
    run_experiment, trace_files_equal, Algorithm, Game, GameSpec, LoadedConfig, RunConfig, RunOptions,
};
use ugames::learner::averaging_weights;
use ugames::metrics::Metric;
use ugames::oracles::{shapley_q_star, solve_matrix_minimax};
use ugames::simplex::{omd_step, ClippedSimplex, MixedStrategy};
use ugames::{MarkovGame, MatrixGame};

// Pinned tolerances.
const PROJECTION_LINF_TOL: f64 = 1e-4;
const FIRST_ORDER_TOL: f64 = 1e-9;
const ORACLE_VALUE_TOL: f64 = 1e-4;
const MP_GAP_BOUND: f64 = 0.25;
const EXPECTED_VARIANT_SLACK: f64 = 1.25;
const RATIONALITY_BOUND: f64 = 0.1;
const EPISODIC_PAYOFF_TOL: f64 = 0.01;
const WEIGHT_SUM_TOL: f64 = 1e-12;

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(algorithm: Algorithm, game: &Game, horizon: u64, name: &str) -> RunConfig {
    let spec = GameSpec::from_game(game);
    RunConfig {
        name: Some(name.to_string()),
        algorithm,
        horizon,
        seeds: SEEDS.to_vec(),
        noise: NoiseModel::Bernoulli,
        episodic: false,
        rho: None,
        delta: 0.05,
        varepsilon: 1.0,
        tol: None,
        game_file: None,
        game: Some(spec),
        schedule: None,
        general: None,
        // Checkpoints at T/10 and T.
        cadence: CadenceSection {
            start: horizon / 10,
            ratio: 10.0,
            points: Vec::new(),
        },
        metrics: MetricsSection::default(),
        opponent: None,
    }
}

fn load(config: RunConfig) -> LoadedConfig {
    resolve(config, Path::new("."), "acceptance").expect("valid acceptance config")
}

fn run(config: RunConfig) -> Result<ugames::harness::ExperimentOutcome, String> {
    let outcome = run_experiment(&load(config), &RunOptions::default()).map_err(|e| e.to_string())?;
    if !outcome.failures.is_empty() {
        return Err(format!("seed failures: {:?}", outcome.failures));
    }
    Ok(outcome)
}

fn medians(outcome: &ugames::harness::ExperimentOutcome, metric: Metric, t: u64) -> f64 {
    let values = outcome.values(metric, None, t);
    assert_eq!(values.len(), SEEDS.len(), "{metric} missing at t = {t}");
    median(&values)
}

// Coarse-to-fine grid search for min <x', g> + KL(x', x) / eta over the
// clipped simplex, independent of the closed-form projection.
fn grid_minimizer(x: &[f64], g: &[f64], eta: f64, floor: f64) -> Vec<f64> {
    let objective = |p: &[f64]| -> f64 {
        p.iter()
            .zip(x)
            .zip(g)
            .map(|((&pa, &xa), &ga)| pa * ga + pa * (pa / xa).ln() / eta)
            .sum()
    };
    let n = x.len();
    let free = 1.0 - n as f64 * floor;
    // Coordinates: the first n-1 extra masses above the floor.
    let mut center = vec![free / 2.0; n - 1];
    let mut width = free;
    let steps = 60i64;
    for _ in 0..40 {
        let mut best = (f64::INFINITY, center.clone());
        let mut idx = vec![-steps; n - 1];
        loop {
            let extra: Vec<f64> = idx
                .iter()
                .zip(&center)
                .map(|(&i, &c)| c + width * i as f64 / (2 * steps) as f64)
                .collect();
            let used: f64 = extra.iter().sum();
            if extra.iter().all(|&e| (0.0..=free).contains(&e)) && used <= free {
                let mut p: Vec<f64> = extra.iter().map(|e| floor + e).collect();
                p.push(floor + (free - used));
                let f = objective(&p);
                if f < best.0 {
                    best = (f, extra);
                }
            }
            let mut k = 0;
            while k < n - 1 {
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = -steps;
                k += 1;
            }
            if k == n - 1 {
                break;
            }
        }
        center = best.1;
        width *= 0.25;
    }
    let used: f64 = center.iter().sum();
    let mut p: Vec<f64> = center.iter().map(|e| floor + e).collect();
    p.push(floor + (free - used));
    p
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_linf: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=3);
        let floor = rng.gen_range(0.01..0.9) / n as f64;
        let x = MixedStrategy::normalized((0..n).map(|_| rng.gen_range(0.05..1.0)).collect()).unwrap();
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let eta = rng.gen_range(0.05..2.0);
        let domain = ClippedSimplex::new(n, floor).unwrap();
        let next = omd_step(&x, &g, eta, &domain).map_err(|e| e.to_string())?;
        let brute = grid_minimizer(x.probs(), &g, eta, floor);
        let linf = next
            .probs()
            .iter()
            .zip(&brute)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_linf = worst_linf.max(linf);
        // ln x'_a - ln x_a + eta g_a is constant over unclipped coordinates.
        let free: Vec<f64> = (0..n)
            .filter(|&a| next.probs()[a] > floor * (1.0 + 1e-9))
            .map(|a| next.probs()[a].ln() - x.probs()[a].ln() + eta * g[a])
            .collect();
        if free.len() > 1 {
            let hi = free.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = free.iter().copied().fold(f64::INFINITY, f64::min);
            worst_residual = worst_residual.max(hi - lo);
        }
    }
    check(
        worst_linf <= PROJECTION_LINF_TOL && worst_residual <= FIRST_ORDER_TOL,
        format!("max linf {worst_linf:.2e}, max first-order residual {worst_residual:.2e}"),
    )
}

// Value of a 2x2 zero-sum game, x minimizing: pure saddle if one exists,
// otherwise the equalizing formula.
fn value_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let upper = (0..2).map(|a| m[a][0].max(m[a][1])).fold(f64::INFINITY, f64::min);
    let lower = (0..2).map(|b| m[0][b].min(m[1][b])).fold(f64::NEG_INFINITY, f64::max);
    if (upper - lower).abs() < 1e-15 {
        return upper;
    }
    let [[a, b], [c, d]] = *m;
    (a * d - b * c) / (a + d - b - c)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for gamma in [0.5, 0.9] {
        for _ in 0..20 {
            let m = [[rng.gen::<f64>(), rng.gen()], [rng.gen(), rng.gen()]];
            let game = MatrixGame::from_rows(&[m[0].to_vec(), m[1].to_vec()]).unwrap();
            let markov = MarkovGame::single_state(game, gamma).unwrap();
            let star = shapley_q_star(&markov, ORACLE_VALUE_TOL).map_err(|e| e.to_string())?;
            worst = worst.max((star.v_star[0] - value_2x2(&m) / (1.0 - gamma)).abs());
        }
    }
    // Pure saddle: entry (i, j) is the strict maximum of its row and the
    // strict minimum of its column.
    let tol = 1e-9;
    let mut saddle_worst: f64 = 0.0;
    for _ in 0..20 {
        let (i, j) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let v = rng.gen_range(0.3..0.7);
        let mut rows = vec![vec![0.0; 3]; 3];
        for (a, row) in rows.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = if (a, b) == (i, j) {
                    v
                } else if a == i {
                    rng.gen_range(0.0..v - 0.05)
                } else if b == j {
                    rng.gen_range(v + 0.05..1.0)
                } else {
                    rng.gen()
                };
            }
        }
        let game = MatrixGame::from_rows(&rows).unwrap();
        let sol = solve_matrix_minimax(&game, tol).map_err(|e| e.to_string())?;
        saddle_worst = saddle_worst
            .max((sol.value - v).abs())
            .max(1.0 - sol.x_star.probs()[i])
            .max(1.0 - sol.y_star.probs()[j]);
    }
    check(
        worst <= ORACLE_VALUE_TOL && saddle_worst <= tol,
        format!("max |V* - val/(1-gamma)| {worst:.2e}, pure-saddle error {saddle_worst:.2e}"),
    )
}

fn matrix_games() -> Vec<(String, Game)> {
    let mut games = vec![(
        "matching-pennies".to_string(),
        Game::Matrix(MatrixGame::matching_pennies()),
    )];
    for seed in 1..=3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        games.push((
            format!("random-3x3-{seed}"),
            Game::Matrix(MatrixGame::random(&mut rng, 3, 3)),
        ));
    }
    games
}

const MATRIX_T: u64 = 100_000;

/// Game name, gap at T/10 and T, KL at T/10 and T.
type GapRow = (String, f64, f64, f64, f64);

fn matrix_gaps(algorithm: Algorithm, with_kl: bool) -> Result<Vec<GapRow>, String> {
    matrix_games()
        .into_iter()
        .map(|(name, game)| {
            let mut cfg = config(algorithm, &game, MATRIX_T, &name);
            cfg.metrics.regularized_kl = with_kl;
            let outcome = run(cfg)?;
            let (early, late) = (MATRIX_T / 10, MATRIX_T);
            let kl = |t| {
                if with_kl {
                    medians(&outcome, Metric::RegularizedKl, t)
                } else {
                    f64::NAN
                }
            };
            Ok((
                name,
                medians(&outcome, Metric::DualityGap, early),
                medians(&outcome, Metric::DualityGap, late),
                kl(early),
                kl(late),
            ))
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let rows = matrix_gaps(Algorithm::MatrixHp, true)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, early, late, kl_early, kl_late) in &rows {
        ok &= late < early && kl_late < kl_early;
        if name == "matching-pennies" {
            ok &= *late < MP_GAP_BOUND;
        }
        parts.push(format!(
            "{name}: gap {early:.4}->{late:.4}, kl {kl_early:.2e}->{kl_late:.2e}"
        ));
    }
    check(ok, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let hp = matrix_gaps(Algorithm::MatrixHp, false)?;
    let expected = matrix_gaps(Algorithm::MatrixExpected, false)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for ((name, _, hp_late, _, _), (_, _, ex_late, _, _)) in hp.iter().zip(&expected) {
        ok &= *ex_late <= EXPECTED_VARIANT_SLACK * hp_late;
        parts.push(format!("{name}: {ex_late:.4} vs {hp_late:.4}"));
    }
    check(ok, parts.join("; "))
}

fn irreducible_game() -> MarkovGame {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    MarkovGame::random(&mut rng, 2, 2, 0.8, 0.1).unwrap()
}

fn criterion_5() -> Outcome {
    let game = irreducible_game();
    let min_entry = game
        .transition_tensor()
        .iter()
        .flatten()
        .flatten()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_entry < 0.1 {
        return Err(format!("test game has a transition entry {min_entry} < 0.1"));
    }
    let horizon = 200_000;
    let outcome = run(config(
        Algorithm::MarkovIrreducible,
        &Game::Markov(game),
        horizon,
        "irreducible",
    ))?;
    let (early, late) = (horizon / 10, horizon);
    let v = (
        medians(&outcome, Metric::ValueError, early),
        medians(&outcome, Metric::ValueError, late),
    );
    let g = (
        medians(&outcome, Metric::LastIterateGap, early),
        medians(&outcome, Metric::LastIterateGap, late),
    );
    check(
        v.1 < v.0 && g.1 < g.0,
        format!(
            "value error {:.4}->{:.4}, last-iterate gap {:.4}->{:.4}",
            v.0, v.1, g.0, g.1
        ),
    )
}

fn general_game() -> MarkovGame {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    MarkovGame::random(&mut rng, 3, 2, 0.8, 0.05).unwrap()
}

fn criterion_6() -> Outcome {
    let horizon = 100_000;
    let mut ok = true;
    let mut notes = Vec::new();
    for kappa in [0.0, 0.01] {
        let mut cfg = config(
            Algorithm::MarkovGeneral,
            &Game::Markov(general_game()),
            horizon,
            "general",
        );
        cfg.general = Some(GeneralSection {
            kappa,
            ..GeneralSection::default()
        });
        cfg.metrics.lastiterate_gap = false;
        let outcome = run(cfg)?;
        let violations: f64 = outcome.values(Metric::InvariantViolations, None, horizon).iter().sum();
        let (early, late) = (
            medians(&outcome, Metric::PathGapAverage, horizon / 10),
            medians(&outcome, Metric::PathGapAverage, horizon),
        );
        let lower: f64 = (0..3)
            .map(|s| median(&outcome.values(Metric::ValueLower, Some(s), horizon)))
            .sum::<f64>()
            / 3.0;
        ok &= violations == 0.0 && late < early;
        notes.push(format!(
            "kappa {kappa}: bound violations {violations}, average path gap {early:.4}->{late:.4}, mean lower value {lower:.3}"
        ));
    }
    check(ok, notes.join("; "))
}

fn criterion_7() -> Outcome {
    let horizon = 100_000;
    let mut cfg = config(
        Algorithm::MatrixHp,
        &Game::Matrix(MatrixGame::matching_pennies()),
        horizon,
        "rational",
    );
    cfg.opponent = Some(OpponentSection {
        policy: vec![vec![0.7, 0.3]],
    });
    let outcome = run(cfg)?;
    let (early, late) = (
        medians(&outcome, Metric::RationalityGap, horizon / 10),
        medians(&outcome, Metric::RationalityGap, horizon),
    );

    let mut cfg = config(
        Algorithm::MarkovIrreducible,
        &Game::Markov(irreducible_game()),
        horizon,
        "rational-markov",
    );
    cfg.opponent = Some(OpponentSection {
        policy: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
    });
    let outcome = run(cfg)?;
    let (m_early, m_late) = (
        medians(&outcome, Metric::MarkovRationalityGap, horizon / 10),
        medians(&outcome, Metric::MarkovRationalityGap, horizon),
    );
    check(
        late < RATIONALITY_BOUND && late < early && m_late < m_early,
        format!("matrix {early:.4}->{late:.4}, Markov {m_early:.4}->{m_late:.4}"),
    )
}

fn criterion_8() -> Outcome {
    let horizon = 100_000;
    let game = MarkovGame::single_state(MatrixGame::matching_pennies(), 0.5).unwrap();
    let mut cfg = config(Algorithm::Equilibrium, &Game::Markov(game), horizon, "episodic");
    cfg.episodic = true;
    let outcome = run(cfg)?;
    let deviations = outcome.values(Metric::EpisodicPayoff, None, horizon);
    let worst = deviations.iter().copied().fold(0.0, f64::max);
    let episodes: Vec<u64> = outcome.runs.iter().map(|r| r.stats.episodes).collect();
    check(
        deviations.len() == SEEDS.len() && worst < EPISODIC_PAYOFF_TOL && episodes.iter().all(|&e| e > 0),
        format!("max |mean loss - 0.5| over seeds {worst:.2e}"),
    )
}

// Neumaier-compensated sum, so the check measures the weights rather than
// the rounding of the summation.
fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn criterion_9() -> Outcome {
    let tau_max = 10_000usize;
    let mut schedules: Vec<Vec<f64>> = Vec::new();
    for k_alpha in [9.0 / 10.0, 9.0 / 19.0] {
        schedules.push((1..=tau_max).map(|i| (i as f64).powf(-k_alpha)).collect());
    }
    let (horizon, gamma) = (100_000u64, 0.9);
    let h = (horizon as f64).ln() / (1.0 - gamma);
    schedules.push((1..=tau_max).map(|i| (h + 1.0) / (h + i as f64)).collect());
    let mut worst: f64 = 0.0;
    for alpha in &schedules {
        for tau in 1..=tau_max {
            let w = averaging_weights(|i| alpha[i as usize - 1], tau as u64);
            worst = worst.max((compensated_sum(&w) - 1.0).abs());
        }
    }
    check(worst <= WEIGHT_SUM_TOL, format!("max |sum - 1| {worst:.2e}"))
}

fn criterion_10() -> Outcome {
    let cfg = config(
        Algorithm::MatrixHp,
        &Game::Matrix(MatrixGame::matching_pennies()),
        MATRIX_T,
        "determinism",
    );
    let loaded = load(cfg);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut written = Vec::new();
    for dir in &dirs {
        let outcome = run_experiment(
            &loaded,
            &RunOptions {
                out_dir: Some(dir.path().to_path_buf()),
                ..RunOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        written.push(outcome.out_dir.expect("written"));
    }
    let identical = trace_files_equal(&written[0], &written[1]).map_err(|e| e.to_string())?;
    check(identical, format!("{} trace files compared byte for byte", SEEDS.len()))
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("1 projection correctness", Duration::from_secs(10), criterion_1),
        ("2 oracle closed forms", Duration::from_secs(30), criterion_2),
        ("3 matrix learner trend", Duration::from_secs(300), criterion_3),
        ("4 expected-rate variant", Duration::from_secs(300), criterion_4),
        ("5 irreducible learner trend", Duration::from_secs(600), criterion_5),
        ("6 general learner invariants", Duration::from_secs(300), criterion_6),
        ("7 rationality", Duration::from_secs(300), criterion_7),
        ("8 episodic payoff", Duration::from_secs(60), criterion_8),
        ("9 weight identity", Duration::from_secs(1), criterion_9),
        ("10 determinism", Duration::from_secs(600), criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over time budget {budget:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {name}: {status} ({:.1}s) {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
