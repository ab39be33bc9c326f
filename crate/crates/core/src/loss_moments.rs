//! Exponentially weighted statistics of the scalar mini-batch loss.
//!
//! A decayed sum of losses and squared losses, divided by the sum of the
//! decay weights, gives a weighted mean and standard deviation over recent
//! history. The normalizer is the same `1 - beta^t` expression used to
//! bias-correct gradient momentum, so the momentum buffer itself can be read
//! as an expectation under the normalized exponential lookback distribution
//! exposed here as [`ExpDecayDistribution`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MomentError {
    #[error("non-finite loss value {0} rejected")]
    NonFiniteLoss(f64),
    #[error("lookback depth {depth} out of range for horizon {horizon}")]
    DepthOutOfRange { depth: u64, horizon: u64 },
}

/// Running exponentially weighted first and second moments of a scalar loss.
///
/// `r` is the decayed sum of losses, `s` the decayed sum of squared losses,
/// `t` the number of losses absorbed. Both sums decay at the same rate as
/// the first-moment gradient buffer they travel alongside.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossMomentTracker {
    r: f64,
    s: f64,
    t: u64,
}

impl LossMomentTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one loss into the decayed sums.
    ///
    /// `r' = beta1 * r + (1 - beta1) * loss`, and the same recurrence on the
    /// squared loss. Rejects non-finite input before touching any state.
    pub fn absorb_loss(&mut self, loss: f64, beta1: f64) -> Result<(), MomentError> {
        debug_assert!((0.0..1.0).contains(&beta1), "beta1 must lie in [0, 1)");
        if !loss.is_finite() {
            return Err(MomentError::NonFiniteLoss(loss));
        }
        self.r = beta1 * self.r + (1.0 - beta1) * loss;
        self.s = beta1 * self.s + (1.0 - beta1) * loss * loss;
        self.t += 1;
        Ok(())
    }

    /// Bias-corrected mean and standard deviation of the absorbed losses.
    ///
    /// The variance estimate `s_hat - mu^2` is clamped at zero before the
    /// square root: cancellation between two nearly equal corrected sums can
    /// leave a tiny negative residue.
    ///
    /// A fresh tracker reports `(0, 0)`. For `t >= 1` the corrected sums are
    /// `r / (1 - beta1^t + eps)` and `s / (1 - beta1^t + eps)`; `eps = 0` is
    /// accepted there since the denominator is already positive.
    pub fn mean_std(&self, beta1: f64, eps: f64) -> (f64, f64) {
        debug_assert!(eps >= 0.0, "eps must be non-negative");
        if self.t == 0 {
            return (0.0, 0.0);
        }
        let correction = 1.0 - beta1.powi(self.t as i32) + eps;
        let mu = self.r / correction;
        let s_hat = self.s / correction;
        let var = (s_hat - mu * mu).max(0.0);
        (mu, var.sqrt())
    }

    /// Number of losses absorbed so far.
    pub fn count(&self) -> u64 {
        self.t
    }

    /// Raw decayed sums `(r, s)`, uncorrected.
    pub fn raw_sums(&self) -> (f64, f64) {
        (self.r, self.s)
    }
}

/// Normalized exponential weights over lookback depths `0..t-1`.
///
/// `weight(p) = beta^p * (1 - beta) / (1 - beta^t)`, which sums to one over
/// the horizon. Depth 0 is the most recent step. At `beta = 0` all mass sits
/// at depth 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpDecayDistribution {
    beta: f64,
    t: u64,
}

impl ExpDecayDistribution {
    pub fn new(beta: f64, t: u64) -> Self {
        debug_assert!((0.0..1.0).contains(&beta), "beta must lie in [0, 1)");
        debug_assert!(t >= 1, "horizon must be positive");
        Self { beta, t }
    }

    /// Probability mass at lookback depth `p`.
    pub fn weight(&self, p: u64) -> Result<f64, MomentError> {
        if p >= self.t {
            return Err(MomentError::DepthOutOfRange {
                depth: p,
                horizon: self.t,
            });
        }
        let numer = self.beta.powi(p as i32) * (1.0 - self.beta);
        let denom = 1.0 - self.beta.powi(self.t as i32);
        Ok(numer / denom)
    }

    /// Mini-batch index seen at lookback depth `p` when `m` batches cycle
    /// round-robin: `(t - 1 - p) mod m`.
    pub fn batch_index(&self, p: u64, m: usize) -> Result<usize, MomentError> {
        if p >= self.t {
            return Err(MomentError::DepthOutOfRange {
                depth: p,
                horizon: self.t,
            });
        }
        debug_assert!(m >= 1);
        Ok(((self.t - 1 - p) % m as u64) as usize)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn horizon(&self) -> u64 {
        self.t
    }
}
