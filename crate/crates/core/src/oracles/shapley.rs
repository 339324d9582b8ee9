use crate::error::{Error, Result};
use crate::game::{MarkovGame, Matrix, StationaryPolicy};

use super::minimax::solve_minimax;

/// Default accuracy of `Q*` for Markov-game oracles.
pub const DEFAULT_MARKOV_TOL: f64 = 1e-4;

const MAX_SWEEPS: usize = 1_000_000;

/// Optimal values, Q-tables and one equilibrium policy pair of a Markov game.
#[derive(Debug, Clone, PartialEq)]
pub struct StarTables {
    pub v_star: Vec<f64>,
    pub q_star: Vec<Matrix>,
    pub x_star: StationaryPolicy,
    pub y_star: StationaryPolicy,
    pub gamma: f64,
}

impl StarTables {
    pub fn num_states(&self) -> usize {
        self.v_star.len()
    }
}

/// Which player best-responds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The x-player minimizes against a fixed y-policy.
    Minimizer,
    /// The y-player maximizes against a fixed x-policy.
    Maximizer,
}

/// Shapley iteration `Q <- G + gamma P val(Q)` until `Q` is within `tol` of
/// `Q*` in sup norm (per-sweep change at most `tol (1 - gamma) / gamma`).
pub fn shapley_q_star(game: &MarkovGame, tol: f64) -> Result<StarTables> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!("tolerance {tol} must be positive")));
    }
    let gamma = game.discount();
    let stop = tol * (1.0 - gamma) / gamma;
    // A value error e perturbs the fixed point by at most gamma e / (1 - gamma).
    let inner_tol = 0.1 * tol * (1.0 - gamma);
    let states = 0..game.num_states();

    let mut values = vec![0.0; game.num_states()];
    let mut q: Vec<Matrix> = states.clone().map(|s| game.q_matrix(s, &values)).collect();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        for (s, qs) in q.iter().enumerate() {
            values[s] = solve_minimax(qs, inner_tol)?.require_certified()?.value;
        }
        let next: Vec<Matrix> = states.clone().map(|s| game.q_matrix(s, &values)).collect();
        let change = q.iter().zip(&next).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
        q = next;
        if change <= stop {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Uncertified {
            solver: "shapley iteration",
            iterations: MAX_SWEEPS,
            gap: f64::NAN,
        });
    }

    let mut v_star = Vec::with_capacity(q.len());
    let mut xs = Vec::with_capacity(q.len());
    let mut ys = Vec::with_capacity(q.len());
    for qs in &q {
        let sol = solve_minimax(qs, inner_tol)?.require_certified()?;
        v_star.push(sol.value);
        xs.push(sol.x_star);
        ys.push(sol.y_star);
    }
    Ok(StarTables {
        v_star,
        q_star: q,
        x_star: StationaryPolicy::new(xs)?,
        y_star: StationaryPolicy::new(ys)?,
        gamma,
    })
}

/// Optimal value of the single-agent MDP induced by freezing `opponent`:
/// `min_x V_{x,y}` per state for [`Side::Minimizer`] (opponent is `y`), or
/// `max_y V_{x,y}` for [`Side::Maximizer`] (opponent is `x`).
pub fn best_response_value(game: &MarkovGame, opponent: &StationaryPolicy, side: Side, tol: f64) -> Result<Vec<f64>> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!("tolerance {tol} must be positive")));
    }
    let n = game.num_states();
    if opponent.num_states() != n {
        return Err(Error::Dimension {
            expected: n,
            got: opponent.num_states(),
        });
    }
    let (own_actions, opp_actions) = match side {
        Side::Minimizer => (game.num_actions_x(), game.num_actions_y()),
        Side::Maximizer => (game.num_actions_y(), game.num_actions_x()),
    };
    if opponent.states().iter().any(|p| p.len() != opp_actions) {
        return Err(Error::Dimension {
            expected: opp_actions,
            got: opponent.state(0).len(),
        });
    }

    // Induced reward r[s][own] and kernel p[s][own][s'].
    let mut reward = vec![vec![0.0; own_actions]; n];
    let mut kernel = vec![vec![vec![0.0; n]; own_actions]; n];
    for s in 0..n {
        let g = game.loss(s);
        for (opp, &w) in opponent.state(s).probs().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for own in 0..own_actions {
                let (a, b) = match side {
                    Side::Minimizer => (own, opp),
                    Side::Maximizer => (opp, own),
                };
                reward[s][own] += w * g.get(a, b);
                for (k, p) in kernel[s][own].iter_mut().zip(game.transition(s, a, b)) {
                    *k += w * p;
                }
            }
        }
    }

    let gamma = game.discount();
    let stop = tol * (1.0 - gamma) / gamma;
    let mut v = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let backups = (0..own_actions).map(|own| {
                    reward[s][own] + gamma * kernel[s][own].iter().zip(&v).map(|(p, val)| p * val).sum::<f64>()
                });
                match side {
                    Side::Minimizer => backups.fold(f64::INFINITY, f64::min),
                    Side::Maximizer => backups.fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change <= stop {
            return Ok(v);
        }
    }
    Err(Error::Uncertified {
        solver: "best-response value iteration",
        iterations: MAX_SWEEPS,
        gap: f64::NAN,
    })
}
