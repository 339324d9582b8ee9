//! Exact or tolerance-certified reference solutions used for measurement.

mod lp;
mod minimax;
mod regularized;
mod shapley;

pub use minimax::{solve_matrix_minimax, solve_minimax, OracleSolution, DEFAULT_MATRIX_TOL};
pub use regularized::{
    clipped_softmax_x, clipped_softmax_y, regularized_gap, regularized_objective, solve_regularized_ne,
    RegularizedSolution, REGULARIZED_BUDGET,
};
pub use shapley::{best_response_value, shapley_q_star, Side, StarTables, DEFAULT_MARKOV_TOL};
