//! Saddle point of the entropy-regularized game
//! `f(x, y) = x^T G y + eps * sum x ln x - eps * sum y ln y`
//! over a pair of clipped simplices.

use crate::error::{Error, Result};
use crate::game::Matrix;
use crate::simplex::{ClippedSimplex, MixedStrategy};

/// Iteration cap for the regularized solver.
pub const REGULARIZED_BUDGET: usize = 1_000_000;
const CHECK_EVERY: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub x: MixedStrategy,
    pub y: MixedStrategy,
    /// `max_y' f(x, y') - min_x' f(x', y)` at the returned pair.
    pub f_gap: f64,
    pub iterations: usize,
    pub certified: bool,
}

/// The regularized objective `f(x, y)`.
pub fn regularized_objective(g: &Matrix, epsilon: f64, x: &[f64], y: &[f64]) -> f64 {
    g.bilinear(x, y) + epsilon * neg_entropy(x) - epsilon * neg_entropy(y)
}

/// Entropy best response of the x-player: `argmin_{x in domain} f(x, y)`,
/// i.e. the KL projection of `softmax(-G y / eps)`.
pub fn clipped_softmax_x(g: &Matrix, epsilon: f64, y: &[f64], domain: &ClippedSimplex) -> Result<MixedStrategy> {
    let logits: Vec<f64> = g.times_col(y).iter().map(|v| -v / epsilon).collect();
    domain.project_kl(&shifted_exp(&logits))
}

/// Entropy best response of the y-player: `argmax_{y in domain} f(x, y)`.
pub fn clipped_softmax_y(g: &Matrix, epsilon: f64, x: &[f64], domain: &ClippedSimplex) -> Result<MixedStrategy> {
    let logits: Vec<f64> = g.times_row(x).iter().map(|v| v / epsilon).collect();
    domain.project_kl(&shifted_exp(&logits))
}

/// Duality gap of `f` at `(x, y)`, evaluated with exact entropy best responses.
pub fn regularized_gap(
    g: &Matrix,
    epsilon: f64,
    x: &MixedStrategy,
    y: &MixedStrategy,
    domain_x: &ClippedSimplex,
    domain_y: &ClippedSimplex,
) -> Result<f64> {
    let br_y = clipped_softmax_y(g, epsilon, x.probs(), domain_y)?;
    let br_x = clipped_softmax_x(g, epsilon, y.probs(), domain_x)?;
    Ok(regularized_objective(g, epsilon, x.probs(), br_y.probs())
        - regularized_objective(g, epsilon, br_x.probs(), y.probs()))
}

/// Solves the regularized game to l-infinity accuracy `tol`.
///
/// Runs entropy-regularized mirror-prox (extragradient with the entropy term
/// handled inside the proximal step) from the uniform pair and stops once
/// the `f`-gap is at most `eps * tol^2 / 4`. Strong convexity of the
/// entropy then bounds the l1 distance to the saddle point by `tol / sqrt(2)`.
pub fn solve_regularized_ne(
    g: &Matrix,
    epsilon: f64,
    domain_x: &ClippedSimplex,
    domain_y: &ClippedSimplex,
    tol: f64,
) -> Result<RegularizedSolution> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!("epsilon {epsilon} must be positive")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!("tolerance {tol} must be positive")));
    }
    if domain_x.num_actions() != g.rows() || domain_y.num_actions() != g.cols() {
        return Err(Error::Dimension {
            expected: g.rows(),
            got: domain_x.num_actions(),
        });
    }
    let target = epsilon * tol * tol / 4.0;
    let scale = g.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let eta = 1.0 / (2.0 * scale + epsilon);
    let keep = 1.0 / (1.0 + eta * epsilon);

    let mut x = MixedStrategy::uniform(g.rows());
    let mut y = MixedStrategy::uniform(g.cols());
    let mut gap = regularized_gap(g, epsilon, &x, &y, domain_x, domain_y)?;
    let mut iterations = 0;
    while gap > target && iterations < REGULARIZED_BUDGET {
        let x_half = prox_x(g, &x, y.probs(), eta, keep, domain_x)?;
        let y_half = prox_y(g, &y, x.probs(), eta, keep, domain_y)?;
        let x_next = prox_x(g, &x, y_half.probs(), eta, keep, domain_x)?;
        let y_next = prox_y(g, &y, x_half.probs(), eta, keep, domain_y)?;
        x = x_next;
        y = y_next;
        iterations += 1;
        if iterations % CHECK_EVERY == 0 {
            gap = regularized_gap(g, epsilon, &x, &y, domain_x, domain_y)?;
        }
    }
    Ok(RegularizedSolution {
        certified: gap <= target,
        f_gap: gap,
        iterations,
        x,
        y,
    })
}

// argmin_{x in domain} <G y_ref, x> + eps sum x ln x + KL(x, x_prev) / eta
fn prox_x(
    g: &Matrix,
    x_prev: &MixedStrategy,
    y_ref: &[f64],
    eta: f64,
    keep: f64,
    domain: &ClippedSimplex,
) -> Result<MixedStrategy> {
    let grad = g.times_col(y_ref);
    let logits: Vec<f64> = x_prev
        .probs()
        .iter()
        .zip(&grad)
        .map(|(p, gr)| keep * (p.ln() - eta * gr))
        .collect();
    domain.project_kl(&shifted_exp(&logits))
}

fn prox_y(
    g: &Matrix,
    y_prev: &MixedStrategy,
    x_ref: &[f64],
    eta: f64,
    keep: f64,
    domain: &ClippedSimplex,
) -> Result<MixedStrategy> {
    let grad = g.times_row(x_ref);
    let logits: Vec<f64> = y_prev
        .probs()
        .iter()
        .zip(&grad)
        .map(|(p, gr)| keep * (p.ln() + eta * gr))
        .collect();
    domain.project_kl(&shifted_exp(&logits))
}

fn shifted_exp(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logits.iter().map(|v| (v - max).exp()).collect()
}

fn neg_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum()
}
