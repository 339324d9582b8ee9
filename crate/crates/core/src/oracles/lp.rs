//! Dense simplex-tableau solver for small zero-sum matrix games.
//!
//! The row player minimizes `x^T M y`. After shifting `M` to a strictly
//! positive payoff `P = M + c`, the row player's problem becomes
//! `max sum(u) s.t. P^T u <= 1, u >= 0` with `x = u / sum(u)` and game value
//! `1 / sum(u) - c`. The column strategy is read off the duals of the slack
//! columns. Bland's rule keeps degenerate pivots from cycling.

use crate::game::Matrix;

const PIVOT_EPS: f64 = 1e-12;

pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub(crate) fn solve_zero_sum(m: &Matrix) -> Option<LpSolution> {
    let rows = m.rows();
    let cols = m.cols();
    let min = m.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;

    // Tableau: one constraint per column action b, variables u_0..u_{rows-1}
    // followed by slacks s_0..s_{cols-1}, then the right-hand side.
    let width = rows + cols + 1;
    let mut tab = vec![0.0; (cols + 1) * width];
    for b in 0..cols {
        let r = b * width;
        for a in 0..rows {
            tab[r + a] = m.get(a, b) + shift;
        }
        tab[r + rows + b] = 1.0;
        tab[r + width - 1] = 1.0;
    }
    let obj = cols * width;
    for a in 0..rows {
        tab[obj + a] = -1.0;
    }
    let mut basis: Vec<usize> = (0..cols).map(|b| rows + b).collect();

    let max_pivots = 50 * (rows + cols) * (rows + cols) + 100;
    let mut optimal = false;
    for _ in 0..max_pivots {
        // Bland: lowest-index column with negative reduced cost.
        let Some(enter) = (0..rows + cols).find(|&j| tab[obj + j] < -PIVOT_EPS) else {
            optimal = true;
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..cols {
            let coef = tab[r * width + enter];
            if coef > PIVOT_EPS {
                let ratio = tab[r * width + width - 1] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        if ratio < best_ratio - PIVOT_EPS
                            || ((ratio - best_ratio).abs() <= PIVOT_EPS && basis[r] < basis[best])
                        {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
        }
        // Bounded because P > 0 makes every u_a bounded by the constraints.
        let (pivot_row, _) = leave?;
        pivot(&mut tab, width, cols + 1, pivot_row, enter);
        basis[pivot_row] = enter;
    }
    if !optimal {
        return None;
    }

    let mut u = vec![0.0; rows];
    for (r, &var) in basis.iter().enumerate() {
        if var < rows {
            u[var] = tab[r * width + width - 1].max(0.0);
        }
    }
    let w: Vec<f64> = (0..cols).map(|b| tab[obj + rows + b].max(0.0)).collect();
    let x = normalize(u)?;
    let y = normalize(w)?;
    Some(LpSolution { x, y })
}

fn pivot(tab: &mut [f64], width: usize, height: usize, row: usize, col: usize) {
    let p = tab[row * width + col];
    for j in 0..width {
        tab[row * width + j] /= p;
    }
    for r in 0..height {
        if r == row {
            continue;
        }
        let factor = tab[r * width + col];
        if factor == 0.0 {
            continue;
        }
        for j in 0..width {
            tab[r * width + j] -= factor * tab[row * width + j];
        }
    }
}

fn normalize(v: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    Some(v.into_iter().map(|p| p / total).collect())
}
