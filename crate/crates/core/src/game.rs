//! Immutable game specifications.
//!
//! Losses are always seen from the x-player (the minimizer): entry `(a, b)`
//! is what the x-player pays when it plays `a` and the y-player plays `b`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::simplex::MixedStrategy;

/// Tolerance used when validating that transition rows sum to one.
pub const TRANSITION_TOL: f64 = 1e-12;

/// Dense row-major real matrix. Used for loss matrices and Q-tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidGame("matrix must be at least 1x1".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), cols, data)
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGame("matrix must be at least 1x1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGame(format!("non-finite entry {v}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.cols + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.cols..(a + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `G y`: expected loss of every pure row action against `y`.
    pub fn times_col(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.cols);
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(y).map(|(g, p)| g * p).sum())
            .collect()
    }

    /// `x^T G`: expected loss of every pure column action against `x`.
    pub fn times_row(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &p) in self.data.chunks(self.cols).zip(x) {
            for (o, g) in out.iter_mut().zip(row) {
                *o += p * g;
            }
        }
        out
    }

    /// `x^T G y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.times_col(y).iter().zip(x).map(|(v, p)| v * p).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for b in 0..self.cols {
            for a in 0..self.rows {
                data.push(self.get(a, b));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A two-player zero-sum matrix game with losses in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    loss: Matrix,
}

impl MatrixGame {
    pub fn new(loss: Matrix) -> Result<Self> {
        if let Some(v) = loss.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGame(format!("loss entry {v} outside [0, 1]")));
        }
        Ok(Self { loss })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Uniformly random losses in `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen::<f64>()).collect();
        Self {
            loss: Matrix { rows, cols, data },
        }
    }

    pub fn matching_pennies() -> Self {
        Self::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).expect("valid")
    }

    pub fn rock_paper_scissors() -> Self {
        Self::from_rows(&[vec![0.5, 1.0, 0.0], vec![0.0, 0.5, 1.0], vec![1.0, 0.0, 0.5]]).expect("valid")
    }

    #[inline]
    pub fn num_actions_x(&self) -> usize {
        self.loss.rows()
    }

    #[inline]
    pub fn num_actions_y(&self) -> usize {
        self.loss.cols()
    }

    pub fn loss(&self) -> &Matrix {
        &self.loss
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.loss.get(a, b)
    }
}

/// Per-state mixed strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy(Vec<MixedStrategy>);

impl StationaryPolicy {
    pub fn new(per_state: Vec<MixedStrategy>) -> Result<Self> {
        if per_state.is_empty() {
            return Err(Error::InvalidStrategy("policy needs at least one state".into()));
        }
        Ok(Self(per_state))
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self(vec![MixedStrategy::uniform(num_actions); num_states])
    }

    /// The same mixed strategy in every state.
    pub fn constant(num_states: usize, strategy: MixedStrategy) -> Self {
        Self(vec![strategy; num_states])
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }

    pub fn state(&self, s: usize) -> &MixedStrategy {
        &self.0[s]
    }

    pub fn states(&self) -> &[MixedStrategy] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<MixedStrategy> {
        self.0
    }
}

/// A discounted two-player zero-sum Markov game `(S, A, (G^s), (P^s), gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    num_states: usize,
    num_actions_x: usize,
    num_actions_y: usize,
    loss: Vec<MatrixGame>,
    // Flattened `[s][a][b][s']`.
    transition: Vec<f64>,
    discount: f64,
}

impl MarkovGame {
    /// `transition[s][a][b]` is the next-state distribution after `(a, b)` in `s`.
    pub fn new(loss: Vec<MatrixGame>, transition: Vec<Vec<Vec<Vec<f64>>>>, discount: f64) -> Result<Self> {
        let num_states = loss.len();
        if num_states == 0 {
            return Err(Error::InvalidGame("need at least one state".into()));
        }
        if !(0.5..1.0).contains(&discount) {
            return Err(Error::InvalidGame(format!("discount {discount} outside [1/2, 1)")));
        }
        let ax = loss[0].num_actions_x();
        let ay = loss[0].num_actions_y();
        if loss.iter().any(|g| g.num_actions_x() != ax || g.num_actions_y() != ay) {
            return Err(Error::InvalidGame("all states must share the same action sets".into()));
        }
        if transition.len() != num_states {
            return Err(Error::Dimension {
                expected: num_states,
                got: transition.len(),
            });
        }
        let mut flat = Vec::with_capacity(num_states * ax * ay * num_states);
        for (s, per_a) in transition.iter().enumerate() {
            if per_a.len() != ax {
                return Err(Error::Dimension {
                    expected: ax,
                    got: per_a.len(),
                });
            }
            for (a, per_b) in per_a.iter().enumerate() {
                if per_b.len() != ay {
                    return Err(Error::Dimension {
                        expected: ay,
                        got: per_b.len(),
                    });
                }
                for (b, row) in per_b.iter().enumerate() {
                    if row.len() != num_states {
                        return Err(Error::Dimension {
                            expected: num_states,
                            got: row.len(),
                        });
                    }
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > TRANSITION_TOL {
                        return Err(Error::InvalidGame(format!(
                            "transition ({s},{a},{b}) is not a distribution (sum {sum})"
                        )));
                    }
                    flat.extend_from_slice(row);
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions_x: ax,
            num_actions_y: ay,
            loss,
            transition: flat,
            discount,
        })
    }

    /// A one-state game whose only transition is a self-loop.
    pub fn single_state(game: MatrixGame, discount: f64) -> Result<Self> {
        let (ax, ay) = (game.num_actions_x(), game.num_actions_y());
        Self::new(vec![game], vec![vec![vec![vec![1.0]; ay]; ax]], discount)
    }

    /// Random losses and random transitions with every entry at least `min_prob`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        num_states: usize,
        num_actions: usize,
        discount: f64,
        min_prob: f64,
    ) -> Result<Self> {
        if min_prob * num_states as f64 > 1.0 {
            return Err(Error::Parameter(format!(
                "min_prob {min_prob} infeasible for {num_states} states"
            )));
        }
        let loss = (0..num_states)
            .map(|_| MatrixGame::random(rng, num_actions, num_actions))
            .collect();
        let slack = 1.0 - min_prob * num_states as f64;
        let transition = (0..num_states)
            .map(|_| {
                (0..num_actions)
                    .map(|_| {
                        (0..num_actions)
                            .map(|_| {
                                let raw: Vec<f64> = (0..num_states).map(|_| rng.gen::<f64>() + 1e-3).collect();
                                let total: f64 = raw.iter().sum();
                                let row: Vec<f64> = raw.iter().map(|r| min_prob + slack * r / total).collect();
                                // absorb rounding
                                let norm: f64 = row.iter().sum();
                                row.into_iter().map(|p| p / norm).collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(loss, transition, discount)
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions_x(&self) -> usize {
        self.num_actions_x
    }

    #[inline]
    pub fn num_actions_y(&self) -> usize {
        self.num_actions_y
    }

    #[inline]
    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn loss(&self, s: usize) -> &MatrixGame {
        &self.loss[s]
    }

    pub fn losses(&self) -> &[MatrixGame] {
        &self.loss
    }

    pub fn transition(&self, s: usize, a: usize, b: usize) -> &[f64] {
        let start = ((s * self.num_actions_x + a) * self.num_actions_y + b) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Nested `[s][a][b][s']` copy of the transition kernel.
    pub fn transition_tensor(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions_x)
                    .map(|a| {
                        (0..self.num_actions_y)
                            .map(|b| self.transition(s, a, b).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// `G^s + gamma * E_{s' ~ P^s}[V^{s'}]` as an `A_x x A_y` matrix.
    pub fn q_matrix(&self, s: usize, values: &[f64]) -> Matrix {
        debug_assert_eq!(values.len(), self.num_states);
        let g = self.loss[s].loss();
        let mut data = Vec::with_capacity(self.num_actions_x * self.num_actions_y);
        for a in 0..self.num_actions_x {
            for b in 0..self.num_actions_y {
                let next: f64 = self.transition(s, a, b).iter().zip(values).map(|(p, v)| p * v).sum();
                data.push(g.get(a, b) + self.discount * next);
            }
        }
        Matrix {
            rows: self.num_actions_x,
            cols: self.num_actions_y,
            data,
        }
    }

    /// Upper bound `1 / (1 - gamma)` on any discounted value.
    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        if s < self.num_states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state: s,
                num_states: self.num_states,
            })
        }
    }
}
