use crate::error::{Error, Result};
use crate::game::{Matrix, MatrixGame};
use crate::metrics::matrix_gap;
use crate::simplex::MixedStrategy;

/// Default certification tolerance for matrix minimax.
pub const DEFAULT_MATRIX_TOL: f64 = 1e-6;

const HEDGE_BUDGET: usize = 2_000_000;
const HEDGE_EPOCH: usize = 1_000;

/// A certified equilibrium pair of a matrix game.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// `x_star^T G y_star`.
    pub value: f64,
    pub x_star: MixedStrategy,
    pub y_star: MixedStrategy,
    /// Exact duality gap of `(x_star, y_star)`.
    pub certified_gap: f64,
    /// `false` when the iteration budget ran out before the gap reached `tol`.
    pub certified: bool,
}

impl OracleSolution {
    pub fn require_certified(self) -> Result<Self> {
        if self.certified {
            Ok(self)
        } else {
            Err(Error::Uncertified {
                solver: "matrix minimax",
                iterations: HEDGE_BUDGET,
                gap: self.certified_gap,
            })
        }
    }
}

pub fn solve_matrix_minimax(game: &MatrixGame, tol: f64) -> Result<OracleSolution> {
    solve_minimax(game.loss(), tol)
}

/// Minimax pair of an arbitrary real loss matrix (Q-tables included).
///
/// The pair comes from an exact simplex solve, falling back to optimistic
/// multiplicative weights when the tableau fails; either way the returned
/// pair is certified by its exact duality gap.
pub fn solve_minimax(m: &Matrix, tol: f64) -> Result<OracleSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!("tolerance {tol} must be positive")));
    }
    let (x, y) = match super::lp::solve_zero_sum(m) {
        Some(sol) if matrix_gap(m, &sol.x, &sol.y) <= tol => (sol.x, sol.y),
        _ => optimistic_hedge(m, tol),
    };
    let gap = matrix_gap(m, &x, &y);
    Ok(OracleSolution {
        value: m.bilinear(&x, &y),
        certified: gap <= tol,
        certified_gap: gap,
        x_star: MixedStrategy::normalized(x)?,
        y_star: MixedStrategy::normalized(y)?,
    })
}

// Optimistic hedge on both players with averaged iterates; returns the best
// certified pair seen (average or last iterate).
fn optimistic_hedge(m: &Matrix, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (m.rows(), m.cols());
    let range = m
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = (range.1 - range.0).max(1e-12);
    let eta = 0.1 / scale;

    let mut log_x = vec![0.0; rows];
    let mut log_y = vec![0.0; cols];
    let mut prev_gx = vec![0.0; rows];
    let mut prev_gy = vec![0.0; cols];
    let mut sum_x = vec![0.0; rows];
    let mut sum_y = vec![0.0; cols];
    let mut best = (vec![1.0 / rows as f64; rows], vec![1.0 / cols as f64; cols]);
    let mut best_gap = matrix_gap(m, &best.0, &best.1);

    for iter in 1..=HEDGE_BUDGET {
        let x = softmax(&log_x);
        let y = softmax(&log_y);
        let gx = m.times_col(&y);
        let gy = m.times_row(&x);
        for a in 0..rows {
            log_x[a] -= eta * (2.0 * gx[a] - prev_gx[a]);
            sum_x[a] += x[a];
        }
        for b in 0..cols {
            log_y[b] += eta * (2.0 * gy[b] - prev_gy[b]);
            sum_y[b] += y[b];
        }
        prev_gx = gx;
        prev_gy = gy;

        if iter % HEDGE_EPOCH == 0 {
            let n = iter as f64;
            let avg_x: Vec<f64> = sum_x.iter().map(|v| v / n).collect();
            let avg_y: Vec<f64> = sum_y.iter().map(|v| v / n).collect();
            for (cx, cy) in [(avg_x, avg_y), (x, y)] {
                let gap = matrix_gap(m, &cx, &cy);
                if gap < best_gap {
                    best_gap = gap;
                    best = (cx, cy);
                }
            }
            if best_gap <= tol {
                break;
            }
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::matrix_duality_gap;

    #[test]
    fn matching_pennies() {
        let sol = solve_matrix_minimax(&MatrixGame::matching_pennies(), 1e-6).unwrap();
        assert!(sol.certified);
        assert!((sol.value - 0.5).abs() < 1e-6);
        for p in sol.x_star.probs().iter().chain(sol.y_star.probs()) {
            assert!((p - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn dominant_row() {
        let g = MatrixGame::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let sol = solve_matrix_minimax(&g, 1e-6).unwrap();
        assert!(sol.value.abs() < 1e-6);
        assert!((sol.x_star.probs()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rock_paper_scissors_uniform() {
        let g = MatrixGame::rock_paper_scissors();
        let sol = solve_matrix_minimax(&g, 1e-6).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-6);
        let uniform = MixedStrategy::uniform(3);
        assert!(sol.x_star.linf_distance(&uniform) < 1e-3);
        assert!(sol.y_star.linf_distance(&uniform) < 1e-3);
        assert!(matrix_duality_gap(&g, &uniform, &uniform).unwrap().abs() < 1e-15);
    }

    #[test]
    fn hedge_fallback_certifies_on_its_own() {
        let m = MatrixGame::rock_paper_scissors().loss().clone();
        let (x, y) = optimistic_hedge(&m, 1e-6);
        assert!(matrix_gap(&m, &x, &y) <= 1e-6);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        assert!(solve_matrix_minimax(&MatrixGame::matching_pennies(), 0.0).is_err());
    }
}
