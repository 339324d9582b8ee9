//! Probability-simplex arithmetic shared by every learner: mixed strategies,
//! the clipped simplex, KL divergence, the entropy-regularized IX loss
//! estimator and the KL mirror-descent step onto the clipped simplex.

use std::cmp::Ordering;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};

/// Allowed deviation of a strategy's total mass from one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point of the probability simplex over an action set.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy {
    probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidStrategy("empty action set".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidStrategy(format!("invalid probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidStrategy(format!("probabilities sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidStrategy("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidStrategy("weights sum to zero".into()));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(num_actions: usize) -> Self {
        assert!(num_actions > 0, "empty action set");
        Self {
            probs: vec![1.0 / num_actions as f64; num_actions],
        }
    }

    /// The pure strategy on `action`.
    pub fn vertex(num_actions: usize, action: usize) -> Self {
        let mut probs = vec![0.0; num_actions];
        probs[action] = 1.0;
        Self { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn linf_distance(&self, other: &MixedStrategy) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Shannon entropy `-sum p ln p` (with `0 ln 0 = 0`).
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        WeightedIndex::new(&self.probs)
            .expect("strategy has positive mass")
            .sample(rng)
    }
}

/// `{x in simplex : x_a >= floor for all a}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedSimplex {
    num_actions: usize,
    floor: f64,
}

impl ClippedSimplex {
    pub fn new(num_actions: usize, floor: f64) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::Parameter("clipped simplex needs at least one action".into()));
        }
        // Allow a hair of slack so that floor = 1/A computed in floating point is accepted.
        if !(floor > 0.0 && floor * num_actions as f64 <= 1.0 + SIMPLEX_TOL) {
            return Err(Error::Parameter(format!(
                "floor {floor} must lie in (0, 1/{num_actions}]"
            )));
        }
        Ok(Self { num_actions, floor })
    }

    /// `Omega_t`: floor `1 / (A t^2)`.
    pub fn time_indexed(num_actions: usize, t: u64) -> Self {
        let t = t as f64;
        Self::new(num_actions, 1.0 / (num_actions as f64 * t * t)).expect("floor <= 1/A for t >= 1")
    }

    /// Fixed-horizon domain: floor `1 / (A T)`.
    pub fn horizon(num_actions: usize, horizon: u64) -> Self {
        Self::new(num_actions, 1.0 / (num_actions as f64 * horizon as f64)).expect("floor <= 1/A for T >= 1")
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn contains(&self, x: &MixedStrategy, tol: f64) -> bool {
        x.len() == self.num_actions
            && x.probs().iter().all(|&p| p >= self.floor - tol)
            && (x.probs().iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// KL (I-)projection of positive weights onto the clipped simplex:
    /// `argmin_{x in Omega} sum_a x_a ln(x_a / w_a)`, whose solution is
    /// `x_a = max(floor, w_a / Z)` with `Z` normalizing the total to one.
    pub fn project_kl(&self, weights: &[f64]) -> Result<MixedStrategy> {
        if weights.len() != self.num_actions {
            return Err(Error::Dimension {
                expected: self.num_actions,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().all(|&w| w == 0.0) {
            return Err(Error::NumericOverflow);
        }
        let n = self.num_actions;
        let l = self.floor;
        if l * n as f64 >= 1.0 {
            return Ok(MixedStrategy::uniform(n));
        }

        let mut order: Vec<usize> = (0..n).collect();
        // Descending weight; ties by ascending index.
        order.sort_by(|&i, &j| {
            weights[j]
                .partial_cmp(&weights[i])
                .unwrap_or(Ordering::Equal)
                .then(i.cmp(&j))
        });

        // With the k largest coordinates free, Z = (sum of those weights) / (1 - (n-k) l).
        let mut prefix = 0.0;
        let mut normalizer = None;
        for k in 1..=n {
            prefix += weights[order[k - 1]];
            let z = prefix / (1.0 - (n - k) as f64 * l);
            let last_free_ok = weights[order[k - 1]] >= l * z;
            let next_clipped_ok = k == n || weights[order[k]] <= l * z;
            if last_free_ok && next_clipped_ok {
                normalizer = Some(z);
                break;
            }
        }
        let z = match normalizer {
            Some(z) => z,
            None => self.bisect_normalizer(weights),
        };
        let probs = weights.iter().map(|&w| (w / z).max(l)).collect();
        Ok(MixedStrategy { probs })
    }

    // Solves sum_a max(l, w_a / Z) = 1 for Z by bisection; the left side is
    // nonincreasing in Z.
    fn bisect_normalizer(&self, weights: &[f64]) -> f64 {
        let l = self.floor;
        let mass = |z: f64| weights.iter().map(|&w| (w / z).max(l)).sum::<f64>();
        let total: f64 = weights.iter().sum();
        let (mut lo, mut hi) = (total * 1e-3, total);
        while mass(lo) < 1.0 {
            lo *= 0.5;
        }
        while mass(hi) > 1.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (mass(hi) - 1.0).abs() <= SIMPLEX_TOL {
                break;
            }
        }
        hi
    }
}

/// `KL(p, q) = sum_a p_a ln(p_a / q_a)`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &MixedStrategy, q: &MixedStrategy) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut total = 0.0;
    for (index, (&pa, &qa)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pa == 0.0 {
            continue;
        }
        if qa == 0.0 {
            return Err(Error::KlDomain { index });
        }
        total += pa * (pa / qa).ln();
    }
    Ok(total.max(0.0))
}

/// Entropy-regularized implicit-exploration loss estimate
/// `g_a = 1[a = taken] * loss / (x_a + beta) + epsilon * ln x_a`.
pub fn ix_loss_estimator(
    action_taken: usize,
    observed_loss: f64,
    x: &MixedStrategy,
    beta: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if action_taken >= x.len() {
        return Err(Error::ActionOutOfRange {
            action: action_taken,
            num_actions: x.len(),
        });
    }
    if !x.is_strictly_positive() {
        return Err(Error::InvalidStrategy(
            "loss estimator needs a strictly positive strategy".into(),
        ));
    }
    Ok(x.probs()
        .iter()
        .enumerate()
        .map(|(a, &xa)| {
            let importance = if a == action_taken {
                observed_loss / (xa + beta)
            } else {
                0.0
            };
            importance + epsilon * xa.ln()
        })
        .collect())
}

/// One KL mirror-descent step
/// `argmin_{x' in domain} <x', g> + KL(x', x) / eta`.
///
/// The multiplicative update is carried out on log-weights, shifted by their
/// maximum before exponentiating, and then KL-projected onto `domain`.
pub fn omd_step(x: &MixedStrategy, g: &[f64], eta: f64, domain: &ClippedSimplex) -> Result<MixedStrategy> {
    if g.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: g.len(),
        });
    }
    if domain.num_actions() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: domain.num_actions(),
        });
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Parameter(format!("step size {eta} must be positive")));
    }
    if !x.is_strictly_positive() {
        return Err(Error::InvalidStrategy(
            "mirror step needs a strictly positive strategy".into(),
        ));
    }
    let log_weights: Vec<f64> = x.probs().iter().zip(g).map(|(&p, &ga)| p.ln() - eta * ga).collect();
    if log_weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow);
    }
    let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|v| (v - shift).exp()).collect();
    domain.project_kl(&weights)
}
