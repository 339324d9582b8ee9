//! Convergence measurements. Everything here uses full knowledge of the game
//! and is instrumentation only; learners never see these values.

use std::fmt;
use std::str::FromStr;

use crate::env::RunStats;
use crate::error::{Error, Result};
use crate::game::{MarkovGame, Matrix, MatrixGame, StationaryPolicy};
use crate::oracles::{best_response_value, solve_regularized_ne, Side, StarTables};
use crate::simplex::{kl_divergence, ClippedSimplex, MixedStrategy};

/// Every metric name that can appear in a trace or summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// Exact matrix duality gap of the current pair.
    DualityGap,
    /// `KL(z*_t, z_t)` from the regularized equilibrium to the current pair.
    RegularizedKl,
    /// `x_t^T G y_fixed - min_x x^T G y_fixed` against a fixed opponent.
    RationalityGap,
    /// `max_s |V^s_t - V^s_*|` of the x-player's value table.
    ValueError,
    /// Markov duality gap of the current stationary pair.
    LastIterateGap,
    /// Running mean of the last-iterate gap over checkpoints.
    BestIterateGap,
    /// Per-step path gap at the visited state, against `Q*`.
    PathGap,
    /// Running mean of the path gap.
    PathGapAverage,
    /// Markov analogue of the rationality gap against a fixed stationary opponent.
    MarkovRationalityGap,
    /// Lower value `V_lower^s` held by the x-player.
    ValueLower,
    /// Upper value `V_upper^s` implied by the y-player.
    ValueUpper,
    /// Mean realized loss per step so far.
    MeanLoss,
    /// Algorithm-3 tuning parameter `u` of the current doubling epoch.
    DoublingU,
    /// Global step at which a doubling epoch starts; the value is the epoch index.
    EpochStart,
    /// `|mean loss - (1 - gamma) E_rho[V_*]|` of an episodic run.
    EpisodicPayoff,
    /// Steps so far at which the value bounds were out of order or out of range.
    InvariantViolations,
}

impl Metric {
    pub const ALL: [Metric; 16] = [
        Metric::DualityGap,
        Metric::RegularizedKl,
        Metric::RationalityGap,
        Metric::ValueError,
        Metric::LastIterateGap,
        Metric::BestIterateGap,
        Metric::PathGap,
        Metric::PathGapAverage,
        Metric::MarkovRationalityGap,
        Metric::ValueLower,
        Metric::ValueUpper,
        Metric::MeanLoss,
        Metric::DoublingU,
        Metric::EpochStart,
        Metric::EpisodicPayoff,
        Metric::InvariantViolations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::DualityGap => "duality_gap",
            Metric::RegularizedKl => "regularized_kl",
            Metric::RationalityGap => "rationality_gap",
            Metric::ValueError => "value_error",
            Metric::LastIterateGap => "lastiterate_gap",
            Metric::BestIterateGap => "bestiterate_gap",
            Metric::PathGap => "path_gap",
            Metric::PathGapAverage => "path_gap_avg",
            Metric::MarkovRationalityGap => "markov_rationality_gap",
            Metric::ValueLower => "value_lower",
            Metric::ValueUpper => "value_upper",
            Metric::MeanLoss => "mean_loss",
            Metric::DoublingU => "doubling_u",
            Metric::EpochStart => "epoch_start",
            Metric::EpisodicPayoff => "episodic_payoff",
            Metric::InvariantViolations => "invariant_violations",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Trace(format!("unknown metric {s:?}")))
    }
}

/// One measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub t: u64,
    pub metric: Metric,
    pub value: f64,
    pub state: Option<usize>,
}

/// `max_b (x^T M)_b - min_a (M y)_a` for an arbitrary real matrix.
pub fn matrix_gap(m: &Matrix, x: &[f64], y: &[f64]) -> f64 {
    let best_y = m.times_row(x).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let best_x = m.times_col(y).into_iter().fold(f64::INFINITY, f64::min);
    best_y - best_x
}

/// Exact duality gap `max_y' x^T G y' - min_x' x'^T G y`.
pub fn matrix_duality_gap(g: &MatrixGame, x: &MixedStrategy, y: &MixedStrategy) -> Result<f64> {
    check_len(g.num_actions_x(), x)?;
    check_len(g.num_actions_y(), y)?;
    Ok(matrix_gap(g.loss(), x.probs(), y.probs()))
}

/// Excess loss of `x` over the best response to a fixed `y`.
pub fn rationality_gap(g: &MatrixGame, x: &MixedStrategy, y_fixed: &MixedStrategy) -> Result<f64> {
    check_len(g.num_actions_x(), x)?;
    check_len(g.num_actions_y(), y_fixed)?;
    let row_losses = g.loss().times_col(y_fixed.probs());
    let own: f64 = row_losses.iter().zip(x.probs()).map(|(l, p)| l * p).sum();
    let best = row_losses.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(own - best)
}

/// Markov duality gap `max_s (max_y' V^s_{x,y'} - min_x' V^s_{x',y})`,
/// accurate to `2 tol`.
pub fn markov_lastiterate_gap(game: &MarkovGame, x: &StationaryPolicy, y: &StationaryPolicy, tol: f64) -> Result<f64> {
    let upper = best_response_value(game, x, Side::Maximizer, tol)?;
    let lower = best_response_value(game, y, Side::Minimizer, tol)?;
    Ok(upper
        .iter()
        .zip(&lower)
        .map(|(u, l)| u - l)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `max_s (V^s_{x,y} - min_x' V^s_{x',y})` for a fixed y-policy.
pub fn markov_rationality_gap(
    game: &MarkovGame,
    x: &StationaryPolicy,
    y_fixed: &StationaryPolicy,
    tol: f64,
) -> Result<f64> {
    let own = policy_value(game, x, y_fixed, tol)?;
    let best = best_response_value(game, y_fixed, Side::Minimizer, tol)?;
    Ok(own
        .iter()
        .zip(&best)
        .map(|(o, b)| o - b)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `V^s_{x,y}` by iterative policy evaluation, accurate to `tol`.
pub fn policy_value(game: &MarkovGame, x: &StationaryPolicy, y: &StationaryPolicy, tol: f64) -> Result<Vec<f64>> {
    let n = game.num_states();
    if x.num_states() != n || y.num_states() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x.num_states().min(y.num_states()),
        });
    }
    let gamma = game.discount();
    let mut reward = vec![0.0; n];
    let mut kernel = vec![vec![0.0; n]; n];
    for s in 0..n {
        let xs = x.state(s).probs();
        let ys = y.state(s).probs();
        for (a, &pa) in xs.iter().enumerate() {
            for (b, &pb) in ys.iter().enumerate() {
                let w = pa * pb;
                reward[s] += w * game.loss(s).get(a, b);
                for (k, p) in kernel[s].iter_mut().zip(game.transition(s, a, b)) {
                    *k += w * p;
                }
            }
        }
    }
    let stop = tol * (1.0 - gamma) / gamma;
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| reward[s] + gamma * kernel[s].iter().zip(&v).map(|(p, val)| p * val).sum::<f64>())
            .collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change <= stop {
            return Ok(v);
        }
    }
}

/// Duality gap at state `s` of the matrix game `Q^s_*`.
pub fn path_gap(star: &StarTables, s: usize, x_s: &MixedStrategy, y_s: &MixedStrategy) -> Result<f64> {
    let q = star.q_star.get(s).ok_or(Error::StateOutOfRange {
        state: s,
        num_states: star.num_states(),
    })?;
    check_len(q.rows(), x_s)?;
    check_len(q.cols(), y_s)?;
    Ok(matrix_gap(q, x_s.probs(), y_s.probs()))
}

/// `max_s |V^s - V^s_*|`.
pub fn value_error(values: &[f64], star: &StarTables) -> Result<f64> {
    if values.len() != star.num_states() {
        return Err(Error::Dimension {
            expected: star.num_states(),
            got: values.len(),
        });
    }
    Ok(values
        .iter()
        .zip(&star.v_star)
        .map(|(v, s)| (v - s).abs())
        .fold(0.0, f64::max))
}

/// `|mean per-step loss - (1 - gamma) E_{s ~ rho}[V^s_*]|` for an episodic run.
pub fn episodic_payoff_check(stats: &RunStats, rho: &MixedStrategy, star: &StarTables) -> Result<f64> {
    if !stats.episodic {
        return Err(Error::Trace("episodic payoff check needs an episodic run".into()));
    }
    if stats.steps == 0 {
        return Err(Error::Trace("episodic payoff check needs at least one step".into()));
    }
    check_len(star.num_states(), rho)?;
    let expected: f64 = (1.0 - star.gamma) * rho.probs().iter().zip(&star.v_star).map(|(p, v)| p * v).sum::<f64>();
    Ok((stats.mean_loss() - expected).abs())
}

/// `KL(z*, z)` summed over both players, where `z*` is the saddle point of
/// the `epsilon`-regularized game on the given clipped domains.
pub fn regularized_kl(
    g: &Matrix,
    epsilon: f64,
    domain_x: &ClippedSimplex,
    domain_y: &ClippedSimplex,
    x: &MixedStrategy,
    y: &MixedStrategy,
    tol: f64,
) -> Result<f64> {
    let sol = solve_regularized_ne(g, epsilon, domain_x, domain_y, tol)?;
    Ok(kl_divergence(&sol.x, x)? + kl_divergence(&sol.y, y)?)
}

fn check_len(expected: usize, p: &MixedStrategy) -> Result<()> {
    if p.len() == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got: p.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{shapley_q_star, solve_matrix_minimax};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn strat(p: &[f64]) -> MixedStrategy {
        MixedStrategy::new(p.to_vec()).unwrap()
    }

    fn random_policy(rng: &mut ChaCha8Rng, states: usize, actions: usize) -> StationaryPolicy {
        use rand::Rng;
        StationaryPolicy::new(
            (0..states)
                .map(|_| MixedStrategy::normalized((0..actions).map(|_| rng.gen::<f64>() + 1e-3).collect()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn matrix_gap_examples() {
        let g = MatrixGame::matching_pennies();
        let half = strat(&[0.5, 0.5]);
        assert_eq!(matrix_duality_gap(&g, &half, &half).unwrap(), 0.0);
        let e1 = strat(&[1.0, 0.0]);
        assert_eq!(matrix_duality_gap(&g, &e1, &e1).unwrap(), 1.0);
        assert!(matrix_duality_gap(&g, &strat(&[1.0, 0.0, 0.0]), &e1).is_err());
    }

    #[test]
    fn oracle_and_metric_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let g = MatrixGame::random(&mut rng, 3, 4);
            let sol = solve_matrix_minimax(&g, 1e-6).unwrap();
            let gap = matrix_duality_gap(&g, &sol.x_star, &sol.y_star).unwrap();
            assert!(gap <= sol.certified_gap + 1e-15);
        }
    }

    #[test]
    fn markov_gap_at_equilibrium_is_small() {
        let tol = 1e-6;
        let game = MarkovGame::single_state(MatrixGame::matching_pennies(), 0.5).unwrap();
        let star = shapley_q_star(&game, tol).unwrap();
        let gap = markov_lastiterate_gap(&game, &star.x_star, &star.y_star, tol).unwrap();
        assert!(gap <= 2.0 * tol + 1e-9);
    }

    #[test]
    fn markov_gap_zero_loss() {
        let zero = MatrixGame::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let game = MarkovGame::single_state(zero, 0.9).unwrap();
        let x = StationaryPolicy::constant(1, strat(&[0.9, 0.1]));
        let y = StationaryPolicy::constant(1, strat(&[0.3, 0.7]));
        assert_eq!(markov_lastiterate_gap(&game, &x, &y, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn equilibrium_minimizes_markov_gap() {
        let tol = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let game = MarkovGame::random(&mut rng, 2, 2, 0.7, 0.1).unwrap();
        let star = shapley_q_star(&game, tol).unwrap();
        let at_ne = markov_lastiterate_gap(&game, &star.x_star, &star.y_star, tol).unwrap();
        for _ in 0..10 {
            let y = random_policy(&mut rng, 2, 2);
            let other = markov_lastiterate_gap(&game, &star.x_star, &y, tol).unwrap();
            assert!(other >= at_ne - 2.0 * tol);
        }
    }

    #[test]
    fn path_gap_examples() {
        let tol = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let game = MarkovGame::random(&mut rng, 3, 2, 0.5, 0.1).unwrap();
        let star = shapley_q_star(&game, tol).unwrap();
        for s in 0..3 {
            let gap = path_gap(&star, s, star.x_star.state(s), star.y_star.state(s)).unwrap();
            assert!((0.0..=tol).contains(&gap.max(0.0)) && gap >= -1e-12);
        }
        let constant = StarTables {
            v_star: vec![1.0],
            q_star: vec![Matrix::constant(2, 2, 1.5)],
            x_star: StationaryPolicy::uniform(1, 2),
            y_star: StationaryPolicy::uniform(1, 2),
            gamma: 0.5,
        };
        assert!(
            path_gap(&constant, 0, &strat(&[0.9, 0.1]), &strat(&[0.2, 0.8]))
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!(path_gap(&constant, 1, &strat(&[0.5, 0.5]), &strat(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn value_error_examples() {
        let game =
            MarkovGame::single_state(MatrixGame::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(), 0.5).unwrap();
        let star = shapley_q_star(&game, 1e-8).unwrap();
        assert_eq!(value_error(&star.v_star, &star).unwrap(), 0.0);
        assert!((value_error(&[0.1], &star).unwrap() - 0.1).abs() < 1e-15);
        // Initial irreducible-learner table 1 / (2 (1 - gamma)) against V* = 0.
        assert_eq!(value_error(&[1.0], &star).unwrap(), 1.0);
        assert!(value_error(&[0.0, 0.0], &star).is_err());
    }

    #[test]
    fn episodic_check_needs_episodic_run() {
        let game = MarkovGame::single_state(MatrixGame::matching_pennies(), 0.5).unwrap();
        let star = shapley_q_star(&game, 1e-8).unwrap();
        let rho = MixedStrategy::uniform(1);
        let stats = RunStats {
            steps: 4,
            total_loss: 2.0,
            episodic: false,
            episodes: 0,
        };
        assert!(episodic_payoff_check(&stats, &rho, &star).is_err());
        let stats = RunStats {
            episodic: true,
            ..stats
        };
        assert!(episodic_payoff_check(&stats, &rho, &star).unwrap() < 1e-7);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
        assert!("nope".parse::<Metric>().is_err());
    }

    #[test]
    fn policy_value_matches_closed_form() {
        let game = MarkovGame::single_state(MatrixGame::matching_pennies(), 0.5).unwrap();
        let x = StationaryPolicy::constant(1, strat(&[1.0, 0.0]));
        let y = StationaryPolicy::constant(1, strat(&[0.25, 0.75]));
        let v = policy_value(&game, &x, &y, 1e-10).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn markov_gap_bounded_by_state_gaps() {
        let tol = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let gamma = 0.5 + 0.4 * rand::Rng::gen::<f64>(&mut rng);
            let game = MarkovGame::random(&mut rng, 2, 2, gamma, 0.05).unwrap();
            let star = shapley_q_star(&game, tol).unwrap();
            let x = random_policy(&mut rng, 2, 2);
            let y = random_policy(&mut rng, 2, 2);
            let full = markov_lastiterate_gap(&game, &x, &y, tol).unwrap();
            let per_state = (0..2)
                .map(|s| path_gap(&star, s, x.state(s), y.state(s)).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(full <= 2.0 / (1.0 - gamma) * per_state + 4.0 * tol);
        }
    }

    proptest! {
        #[test]
        fn gap_nonnegative_and_permutation_invariant(
            entries in prop::collection::vec(0.0f64..=1.0, 9),
            wx in prop::collection::vec(0.01f64..1.0, 3),
            wy in prop::collection::vec(0.01f64..1.0, 3),
            perm_x in Just([2usize, 0, 1]),
            perm_y in Just([1usize, 2, 0]),
        ) {
            let g = Matrix::from_flat(3, 3, entries.clone()).unwrap();
            let x = MixedStrategy::normalized(wx).unwrap();
            let y = MixedStrategy::normalized(wy).unwrap();
            let gap = matrix_gap(&g, x.probs(), y.probs());
            prop_assert!(gap >= -1e-12);

            let permuted: Vec<f64> = (0..3)
                .flat_map(|a| (0..3).map(move |b| (a, b)))
                .map(|(a, b)| entries[perm_x[a] * 3 + perm_y[b]])
                .collect();
            let gp = Matrix::from_flat(3, 3, permuted).unwrap();
            let xp: Vec<f64> = (0..3).map(|a| x.probs()[perm_x[a]]).collect();
            let yp: Vec<f64> = (0..3).map(|b| y.probs()[perm_y[b]]).collect();
            prop_assert!((matrix_gap(&gp, &xp, &yp) - gap).abs() < 1e-12);
        }
    }
}
