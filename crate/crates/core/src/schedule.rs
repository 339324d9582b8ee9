//! Polynomially decaying step-size, exploration, regularization and
//! value-averaging schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which family of schedules the exponents feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// `eta_t = t^-k_eta`, `epsilon_t = t^-k_eps`.
    Matrix,
    /// `eta_t = (1 - gamma) t^-k_eta`, `epsilon_t = t^-k_eps / (1 - gamma)`.
    Markov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub k_eta: f64,
    pub k_beta: f64,
    pub k_epsilon: f64,
    pub k_alpha: f64,
    pub scaling: Scaling,
}

/// Schedule values at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eta: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

impl ScheduleParams {
    pub fn new(k_eta: f64, k_beta: f64, k_epsilon: f64, k_alpha: f64, scaling: Scaling) -> Result<Self> {
        let params = Self {
            k_eta,
            k_beta,
            k_epsilon,
            k_alpha,
            scaling,
        };
        params.validate()?;
        Ok(params)
    }

    /// High-probability matrix-game tuning: `k_eta = 5/8`, `k_beta = 3/8`, `k_eps = 1/8`.
    /// `k_alpha` is unused by the matrix learner and kept at 1.
    pub fn matrix_high_probability() -> Self {
        Self {
            k_eta: 5.0 / 8.0,
            k_beta: 3.0 / 8.0,
            k_epsilon: 1.0 / 8.0,
            k_alpha: 1.0,
            scaling: Scaling::Matrix,
        }
    }

    /// Expected-rate matrix-game tuning: `k_eta = 1/2`, `k_eps = 1/6`; the
    /// estimator drops `beta`, so `k_beta` only fills the slot.
    pub fn matrix_expected() -> Self {
        Self {
            k_eta: 0.5,
            k_beta: 1.0,
            k_epsilon: 1.0 / 6.0,
            k_alpha: 1.0,
            scaling: Scaling::Matrix,
        }
    }

    /// Irreducible Markov-game exponents for a given `varepsilon > 0`:
    /// `k_alpha = 9/(9+v)`, `k_eps = 1/(9+v)`, `k_beta = 3/(9+v)`, `k_eta = 5/(9+v)`.
    pub fn irreducible(varepsilon: f64) -> Result<Self> {
        if !(varepsilon > 0.0 && varepsilon.is_finite()) {
            return Err(Error::Parameter(format!(
                "varepsilon {varepsilon} must be positive and finite"
            )));
        }
        let d = 9.0 + varepsilon;
        Self::new(5.0 / d, 3.0 / d, 1.0 / d, 9.0 / d, Scaling::Markov)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [
            ("k_eta", self.k_eta),
            ("k_beta", self.k_beta),
            ("k_epsilon", self.k_epsilon),
            ("k_alpha", self.k_alpha),
        ] {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::Parameter(format!("{name} = {k} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Schedule values at step (or visit count) `t >= 1`.
    pub fn at(&self, t: u64, gamma: f64) -> Schedule {
        debug_assert!(t >= 1);
        let t = t as f64;
        let decay = |k: f64| t.powf(-k);
        let (eta_scale, eps_scale) = match self.scaling {
            Scaling::Matrix => (1.0, 1.0),
            Scaling::Markov => (1.0 - gamma, 1.0 / (1.0 - gamma)),
        };
        Schedule {
            eta: eta_scale * decay(self.k_eta),
            beta: decay(self.k_beta),
            epsilon: eps_scale * decay(self.k_epsilon),
            alpha: decay(self.k_alpha),
        }
    }
}

/// Free-function form of [`ScheduleParams::at`].
pub fn schedule_at(params: &ScheduleParams, t: u64, gamma: f64) -> Schedule {
    params.at(t, gamma)
}
