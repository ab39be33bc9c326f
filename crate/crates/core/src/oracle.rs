//! Exact finite-population computations over a set of mini-batch losses.
//!
//! Everything here is brute force on purpose: all batches are evaluated at
//! the same parameter vector under uniform weights, which is the quantity the
//! running optimizers only approximate through their decayed averages. These
//! routines back the identity checks — confidence-bound gradients against
//! finite differences, the loss/gradient covariance split, and the Monte
//! Carlo unbiasedness of the stochastic weight.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::optim::ucb_weight;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("loss variance is zero at this point; the normalized bound term is undefined")]
    ZeroVariance,
}

/// One mini-batch loss: maps parameters to a scalar loss and its gradient.
pub type BatchFn = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>;

/// A finite population of mini-batch losses held simultaneously, so the full
/// loss `mean_i L_i(theta)` and any population statistic can be computed
/// exactly at a single parameter vector.
pub struct StochasticProblem {
    dim: usize,
    batches: Vec<BatchFn>,
}

impl StochasticProblem {
    pub fn new(dim: usize, batches: Vec<BatchFn>) -> Self {
        Self { dim, batches }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Evaluates batch `i` at `theta`.
    pub fn eval(&self, i: usize, theta: &[f64]) -> (f64, Vec<f64>) {
        (self.batches[i])(theta)
    }

    fn eval_all(&self, theta: &[f64]) -> Result<Vec<(f64, Vec<f64>)>, OracleError> {
        if self.batches.is_empty() {
            return Err(OracleError::EmptyPopulation);
        }
        Ok(self.batches.iter().map(|b| b(theta)).collect())
    }

    /// Mean loss over all batches.
    pub fn full_loss(&self, theta: &[f64]) -> Result<f64, OracleError> {
        if self.batches.is_empty() {
            return Err(OracleError::EmptyPopulation);
        }
        let sum: f64 = self.batches.iter().map(|b| b(theta).0).sum();
        Ok(sum / self.batches.len() as f64)
    }

    /// Mean gradient over all batches.
    pub fn mean_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, OracleError> {
        let evals = self.eval_all(theta)?;
        let m = evals.len() as f64;
        let mut out = vec![0.0; self.dim];
        for (_, g) in &evals {
            for (o, gj) in out.iter_mut().zip(g) {
                *o += gj;
            }
        }
        for o in &mut out {
            *o /= m;
        }
        Ok(out)
    }

    /// Exact uniform-population mean and standard deviation of the batch
    /// losses at `theta`.
    pub fn population_moments(&self, theta: &[f64]) -> Result<(f64, f64), OracleError> {
        if self.batches.is_empty() {
            return Err(OracleError::EmptyPopulation);
        }
        let losses: Vec<f64> = self.batches.iter().map(|b| b(theta).0).collect();
        let m = losses.len() as f64;
        let mu = losses.iter().sum::<f64>() / m;
        let second = losses.iter().map(|l| l * l).sum::<f64>() / m;
        let var = (second - mu * mu).max(0.0);
        Ok((mu, var.sqrt()))
    }

    /// Mean loss plus `eta` standard deviations of the loss across batches.
    /// Positive `eta` is the pessimistic surface, negative the optimistic one.
    pub fn ucb_loss(&self, theta: &[f64], eta: f64) -> Result<f64, OracleError> {
        let (mu, sigma) = self.population_moments(theta)?;
        Ok(mu + eta * sigma)
    }

    /// Exact gradient of [`ucb_loss`](Self::ucb_loss):
    /// `mean_i [(1 + eta * (l_i - mu) / sigma) * g_i]`.
    ///
    /// Errors with [`OracleError::ZeroVariance`] when `sigma = 0`, where the
    /// normalized bound term divides by zero; callers wanting plain-mean
    /// semantics should use [`mean_gradient`](Self::mean_gradient) instead.
    pub fn ucb_grad_exact(&self, theta: &[f64], eta: f64) -> Result<Vec<f64>, OracleError> {
        let evals = self.eval_all(theta)?;
        let m = evals.len() as f64;
        let mu = evals.iter().map(|(l, _)| l).sum::<f64>() / m;
        let second = evals.iter().map(|(l, _)| l * l).sum::<f64>() / m;
        let sigma = (second - mu * mu).max(0.0).sqrt();
        if sigma == 0.0 {
            return Err(OracleError::ZeroVariance);
        }
        let mut out = vec![0.0; self.dim];
        for (l, g) in &evals {
            let scale = 1.0 + eta * (l - mu) / sigma;
            for (o, gj) in out.iter_mut().zip(g) {
                *o += scale * gj;
            }
        }
        for o in &mut out {
            *o /= m;
        }
        Ok(out)
    }

    /// Covariance of loss and gradient across batches:
    /// `mean_i [l_i * g_i] - mean_i [l_i] * mean_i [g_i]`.
    ///
    /// This equals half the gradient of the loss variance, and also equals
    /// `sigma * grad(sigma)` wherever `sigma > 0`.
    pub fn variance_grad_cov(&self, theta: &[f64]) -> Result<Vec<f64>, OracleError> {
        let evals = self.eval_all(theta)?;
        let m = evals.len() as f64;
        let mu = evals.iter().map(|(l, _)| l).sum::<f64>() / m;
        let mut mean_lg = vec![0.0; self.dim];
        let mut mean_g = vec![0.0; self.dim];
        for (l, g) in &evals {
            for j in 0..self.dim {
                mean_lg[j] += l * g[j];
                mean_g[j] += g[j];
            }
        }
        let mut out = vec![0.0; self.dim];
        for j in 0..self.dim {
            out[j] = mean_lg[j] / m - mu * (mean_g[j] / m);
        }
        Ok(out)
    }
}

/// Central-difference gradient: `(f(x + h e_j) - f(x - h e_j)) / (2h)` per
/// coordinate.
pub fn finite_diff_grad<F>(f: F, theta: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let plus = f(&probe);
        probe[j] = theta[j] - h;
        let minus = f(&probe);
        probe[j] = theta[j];
        grad[j] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Monte Carlo mean of the stochastically weighted gradient at fixed loss
/// statistics: averages `[sigma + n_hat * (loss - mu)] * g / sigma` over
/// `n_samples` draws of `n_hat ~ Normal(0, eta^2)`.
///
/// The expectation is exactly `g`, which makes this the numerical witness
/// that the stochastic weight is unbiased for the plain mean gradient.
pub fn momentum_s_expectation(
    loss: f64,
    loss_mean: f64,
    loss_std: f64,
    grad: &[f64],
    eta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<f64>, OracleError> {
    assert!(n_samples >= 1, "need at least one sample");
    if loss_std <= 0.0 {
        return Err(OracleError::ZeroVariance);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scale_sum = 0.0;
    for _ in 0..n_samples {
        let z: f64 = StandardNormal.sample(&mut rng);
        let w = ucb_weight(loss, loss_mean, loss_std, eta * z);
        scale_sum += w / loss_std;
    }
    let mean_scale = scale_sum / n_samples as f64;
    Ok(grad.iter().map(|g| mean_scale * g).collect())
}
