//! Five parameter-update rules behind a single step interface.
//!
//! Besides plain SGD-with-momentum and Adam, three variants weight each
//! incoming gradient by a scalar built from running loss statistics before it
//! enters the moment buffers:
//!
//! - `AdamUcb`: weight `sigma_l + eta * (l - mu_l)` — a one-sided confidence
//!   bound that biases updates toward regions where mini-batch losses agree.
//! - `AdamCb`: weight `sigma_l * |mu_l| - (eta * |mu_l| - sigma_l) * (l - mu_l)`
//!   — a two-sided bound steering the relative loss spread `sigma_l / |mu_l|`
//!   toward the target `eta`.
//! - `AdamS`: the `AdamUcb` rule with the confidence coefficient redrawn from
//!   `Normal(0, eta^2)` at every step, so updates alternate between the
//!   variance-increasing and variance-decreasing directions.
//!
//! Loss statistics always describe history *before* the current loss: the
//! weight for step `t` uses moments of losses `1..t-1`, and the current loss
//! is absorbed afterwards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss_moments::LossMomentTracker;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("dimension mismatch: optimizer built for {expected} parameters, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite {what} passed to step {t}")]
    NonFiniteInput { what: &'static str, t: u64 },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperParam(String),
    #[error("snapshot does not parse: {0}")]
    SnapshotFormat(#[from] serde_json::Error),
    #[error("snapshot io: {0}")]
    SnapshotIo(#[from] std::io::Error),
}

/// Step-size and decay settings shared by all five update rules.
///
/// `eta` is the confidence hyperparameter; its meaning depends on the
/// variant (bound strength for `AdamUcb`, target relative spread for
/// `AdamCb`, Gaussian standard deviation for `AdamS`). `weight_decay` is
/// coupled L2: `weight_decay * theta` is added to the gradient before any
/// momentum logic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub eta: f64,
    pub weight_decay: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eta: 0.0,
            weight_decay: 0.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), OptimError> {
        let err = |msg: String| Err(OptimError::InvalidHyperParam(msg));
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return err(format!("alpha must be finite and positive, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return err(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return err(format!("beta2 must lie in [0, 1), got {}", self.beta2));
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return err(format!("eps must be finite and positive, got {}", self.eps));
        }
        if !self.eta.is_finite() {
            return err(format!("eta must be finite, got {}", self.eta));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return err(format!(
                "weight_decay must be finite and non-negative, got {}",
                self.weight_decay
            ));
        }
        Ok(())
    }
}

/// One gradient observation: the mini-batch gradient and its scalar loss.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub grad: &'a [f64],
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgdm,
    Adam,
    AdamUcb,
    AdamCb,
    AdamS,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Sgdm,
        OptimizerKind::Adam,
        OptimizerKind::AdamUcb,
        OptimizerKind::AdamCb,
        OptimizerKind::AdamS,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamUcb => "adam-ucb",
            OptimizerKind::AdamCb => "adam-cb",
            OptimizerKind::AdamS => "adam-s",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgdm" => Ok(OptimizerKind::Sgdm),
            "adam" => Ok(OptimizerKind::Adam),
            "adam-ucb" => Ok(OptimizerKind::AdamUcb),
            "adam-cb" => Ok(OptimizerKind::AdamCb),
            "adam-s" => Ok(OptimizerKind::AdamS),
            other => Err(format!(
                "unknown optimizer {other:?} (expected sgdm, adam, adam-ucb, adam-cb or adam-s)"
            )),
        }
    }
}

/// One-sided confidence weight: `sigma_l + eta * (l - mu_l)`.
pub fn ucb_weight(loss: f64, loss_mean: f64, loss_std: f64, eta: f64) -> f64 {
    loss_std + eta * (loss - loss_mean)
}

/// Two-sided confidence weight, multiplied through by `|mu_l|` so it stays
/// finite when the mean loss crosses zero:
/// `sigma_l * |mu_l| - (eta * |mu_l| - sigma_l) * (l - mu_l)`.
pub fn cb_weight(loss: f64, loss_mean: f64, loss_std: f64, eta: f64) -> f64 {
    let mu_abs = loss_mean.abs();
    loss_std * mu_abs - (eta * mu_abs - loss_std) * (loss - loss_mean)
}

/// Serializable optimizer state: every buffer plus the step counter and the
/// position of the random stream, enough to resume a run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerSnapshot {
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub loss_moments: LossMomentTracker,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
}

/// A single-writer optimizer instance over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    hp: HyperParams,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    moments: LossMomentTracker,
    rng: ChaCha8Rng,
}

impl Optimizer {
    /// `dim` is the parameter count; `seed` feeds the per-step Gaussian draw
    /// of `AdamS` (other kinds hold the stream but never consume it).
    pub fn new(
        kind: OptimizerKind,
        hp: HyperParams,
        dim: usize,
        seed: u64,
    ) -> Result<Self, OptimError> {
        hp.validate()?;
        let v = match kind {
            OptimizerKind::Sgdm => Vec::new(),
            _ => vec![0.0; dim],
        };
        Ok(Self {
            kind,
            hp,
            t: 0,
            m: vec![0.0; dim],
            v,
            moments: LossMomentTracker::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    /// Number of steps taken.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn loss_moments(&self) -> &LossMomentTracker {
        &self.moments
    }

    /// Applies one update in place. Rejects bad input before mutating any
    /// state, so a failed step leaves the optimizer untouched.
    pub fn step(&mut self, theta: &mut [f64], input: StepInput<'_>) -> Result<(), OptimError> {
        let dim = self.m.len();
        if theta.len() != dim || input.grad.len() != dim {
            return Err(OptimError::DimensionMismatch {
                expected: dim,
                actual: if theta.len() != dim {
                    theta.len()
                } else {
                    input.grad.len()
                },
            });
        }
        if !input.loss.is_finite() {
            return Err(OptimError::NonFiniteInput {
                what: "loss",
                t: self.t + 1,
            });
        }
        if input.grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteInput {
                what: "gradient",
                t: self.t + 1,
            });
        }

        self.t += 1;
        match self.kind {
            OptimizerKind::Sgdm => self.sgd_momentum_update(theta, input.grad),
            OptimizerKind::Adam => self.adam_update(theta, input.grad, 1.0),
            OptimizerKind::AdamUcb => {
                let (mu, sigma) = self.moments.mean_std(self.hp.beta1, self.hp.eps);
                let w = ucb_weight(input.loss, mu, sigma, self.hp.eta);
                self.adam_update(theta, input.grad, w);
                self.absorb(input.loss);
            }
            OptimizerKind::AdamCb => {
                let (mu, sigma) = self.moments.mean_std(self.hp.beta1, self.hp.eps);
                let w = cb_weight(input.loss, mu, sigma, self.hp.eta);
                self.adam_update(theta, input.grad, w);
                self.absorb(input.loss);
            }
            OptimizerKind::AdamS => {
                // Exactly one draw per step, consumed even when the gradient
                // is zero, so trajectories with equal seeds stay aligned.
                let z: f64 = StandardNormal.sample(&mut self.rng);
                let n_hat = self.hp.eta * z;
                let (mu, sigma) = self.moments.mean_std(self.hp.beta1, self.hp.eps);
                let w = ucb_weight(input.loss, mu, sigma, n_hat);
                self.adam_update(theta, input.grad, w);
                self.absorb(input.loss);
            }
        }
        Ok(())
    }

    fn absorb(&mut self, loss: f64) {
        // loss finiteness was checked at the top of step()
        self.moments
            .absorb_loss(loss, self.hp.beta1)
            .expect("loss already validated finite");
    }

    fn sgd_momentum_update(&mut self, theta: &mut [f64], grad: &[f64]) {
        let hp = self.hp;
        let correction = 1.0 - hp.beta1.powi(self.t as i32);
        for j in 0..theta.len() {
            let g = grad[j] + hp.weight_decay * theta[j];
            self.m[j] = hp.beta1 * self.m[j] + (1.0 - hp.beta1) * g;
            theta[j] -= hp.alpha * self.m[j] / correction;
        }
    }

    /// Shared Adam-family step: the gradient enters the first-moment buffer
    /// scaled by `w` and the second-moment buffer scaled by `w^2`. Plain Adam
    /// is the `w = 1` case (multiplication by one is exact, so the shared
    /// path costs nothing in fidelity).
    fn adam_update(&mut self, theta: &mut [f64], grad: &[f64], w: f64) {
        let hp = self.hp;
        let bc1 = 1.0 - hp.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.t as i32);
        for j in 0..theta.len() {
            let g = grad[j] + hp.weight_decay * theta[j];
            let wg = w * g;
            self.m[j] = hp.beta1 * self.m[j] + (1.0 - hp.beta1) * wg;
            self.v[j] = hp.beta2 * self.v[j] + (1.0 - hp.beta2) * wg * wg;
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            theta[j] -= hp.alpha * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }

    /// Captures the complete state as a plain-data record.
    pub fn snapshot(&self) -> OptimizerSnapshot {
        OptimizerSnapshot {
            kind: self.kind,
            hp: self.hp,
            t: self.t,
            m: self.m.clone(),
            v: self.v.clone(),
            loss_moments: self.moments.clone(),
            rng_seed: self.rng.get_seed(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    /// Rebuilds an optimizer that continues bit-exactly where the snapshot
    /// was taken.
    pub fn from_snapshot(snap: OptimizerSnapshot) -> Result<Self, OptimError> {
        snap.hp.validate()?;
        if !matches!(snap.kind, OptimizerKind::Sgdm) && snap.v.len() != snap.m.len() {
            return Err(OptimError::DimensionMismatch {
                expected: snap.m.len(),
                actual: snap.v.len(),
            });
        }
        let mut rng = ChaCha8Rng::from_seed(snap.rng_seed);
        rng.set_stream(snap.rng_stream);
        rng.set_word_pos(snap.rng_word_pos);
        Ok(Self {
            kind: snap.kind,
            hp: snap.hp,
            t: snap.t,
            m: snap.m,
            v: snap.v,
            moments: snap.loss_moments,
            rng,
        })
    }

    /// Writes the snapshot as a JSON record (all buffers, counters and the
    /// random-stream position).
    pub fn write_snapshot(&self, writer: impl std::io::Write) -> Result<(), OptimError> {
        serde_json::to_writer(writer, &self.snapshot())?;
        Ok(())
    }

    pub fn read_snapshot(reader: impl std::io::Read) -> Result<Self, OptimError> {
        let snap: OptimizerSnapshot = serde_json::from_reader(reader)?;
        Self::from_snapshot(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp() -> HyperParams {
        HyperParams::default()
    }

    fn run_steps(
        kind: OptimizerKind,
        hp: HyperParams,
        theta0: &[f64],
        inputs: &[(Vec<f64>, f64)],
        seed: u64,
    ) -> Vec<f64> {
        let mut theta = theta0.to_vec();
        let mut opt = Optimizer::new(kind, hp, theta.len(), seed).unwrap();
        for (grad, loss) in inputs {
            opt.step(&mut theta, StepInput { grad, loss: *loss }).unwrap();
        }
        theta
    }

    #[test]
    fn sgdm_first_step_is_plain_gradient() {
        // Bias correction cancels the (1 - beta) factor at t = 1.
        let mut theta = vec![1.0, -2.0, 0.5];
        let grad = vec![0.3, -0.1, 2.0];
        let mut opt = Optimizer::new(OptimizerKind::Sgdm, hp(), 3, 0).unwrap();
        opt.step(&mut theta, StepInput { grad: &grad, loss: 1.0 }).unwrap();
        for j in 0..3 {
            let expected = [1.0, -2.0, 0.5][j] - hp().alpha * grad[j];
            assert!((theta[j] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn sgdm_zero_gradient_is_fixed_point() {
        let theta0 = vec![0.7, -0.3];
        let inputs: Vec<(Vec<f64>, f64)> = (0..20).map(|_| (vec![0.0, 0.0], 1.0)).collect();
        let theta = run_steps(OptimizerKind::Sgdm, hp(), &theta0, &inputs, 0);
        assert_eq!(theta, theta0);
    }

    #[test]
    fn sgdm_two_step_hand_value() {
        // beta = 0.5, gradients [1, 1] on a scalar. Step 2 uses
        // m_hat = (0.25 + 0.5) / 0.75 = 1, so theta moves by -alpha each step.
        let mut h = hp();
        h.beta1 = 0.5;
        let inputs = vec![(vec![1.0], 0.0), (vec![1.0], 0.0)];
        let theta = run_steps(OptimizerKind::Sgdm, h, &[0.0], &inputs, 0);
        assert!((theta[0] + 2.0 * h.alpha).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_has_unit_scale() {
        let mut theta = vec![0.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, hp(), 1, 0).unwrap();
        opt.step(&mut theta, StepInput { grad: &[3.0], loss: 1.0 }).unwrap();
        // m_hat = 3, v_hat = 9, delta = alpha * 3 / (3 + eps)
        let expected = -hp().alpha * 3.0 / (3.0 + hp().eps);
        assert!((theta[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let theta0 = vec![1.5, -2.5];
        let inputs: Vec<(Vec<f64>, f64)> = (0..50).map(|_| (vec![0.0, 0.0], 1.0)).collect();
        let theta = run_steps(OptimizerKind::Adam, hp(), &theta0, &inputs, 0);
        assert_eq!(theta, theta0);
    }

    #[test]
    fn adam_two_step_hand_unrolled() {
        // Gradients [1, -1] on a scalar with the default betas.
        let h = hp();
        let mut theta = vec![0.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, h, 1, 0).unwrap();
        opt.step(&mut theta, StepInput { grad: &[1.0], loss: 0.0 }).unwrap();
        let after_first = theta[0];
        opt.step(&mut theta, StepInput { grad: &[-1.0], loss: 0.0 }).unwrap();

        #[allow(clippy::neg_multiply)] // keeps the (1 - beta1) * g shape with g = -1
        let m2 = 0.9 * 0.1 + 0.1 * (-1.0);
        let v2 = 0.999 * 0.001 + 0.001 * 1.0;
        let m_hat = m2 / (1.0 - 0.9f64.powi(2));
        let v_hat = v2 / (1.0 - 0.999f64.powi(2));
        let expected = after_first - h.alpha * m_hat / (v_hat.sqrt() + h.eps);
        assert!((theta[0] - expected).abs() < 1e-16);
    }

    #[test]
    fn ucb_weight_examples() {
        // eta = 0 leaves only the spread term.
        assert_eq!(ucb_weight(5.0, 2.0, 0.7, 0.0), 0.7);
        // At the mean the bound term vanishes for any eta.
        assert_eq!(ucb_weight(2.0, 2.0, 0.7, 123.0), 0.7);
        assert!((ucb_weight(3.0, 2.0, 1.0, 0.1) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn cb_weight_examples() {
        // At the mean only sigma * |mu| survives.
        assert_eq!(cb_weight(2.0, 2.0, 0.3, 0.5), 0.3 * 2.0);
        // When sigma / |mu| equals eta the correction term vanishes entirely.
        let w = cb_weight(7.0, 2.0, 0.2, 0.1);
        assert!((w - 0.4).abs() < 1e-15);
        let w = cb_weight(-3.0, 2.0, 0.2, 0.1);
        assert!((w - 0.4).abs() < 1e-15);
        // sigma=0.4, mu=2, eta=0.1, l=3: 0.8 - (0.2 - 0.4) * 1 = 1.0
        assert!((cb_weight(3.0, 2.0, 0.4, 0.1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adam_ucb_first_step_cancels_nonzero_weight() {
        // With no loss history both moments are zero, so w = eta * l. The
        // scalar cancels in m_hat / sqrt(v_hat) and the first step matches
        // Adam's first step up to the eps guard.
        let mut h = hp();
        h.eta = 0.5;
        let grad = vec![2.0, -0.3, 0.04];
        let loss = 1.7;

        let mut theta_ucb = vec![0.0; 3];
        let mut opt = Optimizer::new(OptimizerKind::AdamUcb, h, 3, 0).unwrap();
        opt.step(&mut theta_ucb, StepInput { grad: &grad, loss }).unwrap();

        let w = h.eta * loss;
        for j in 0..3 {
            let wg = w * grad[j];
            let expected = -h.alpha * wg / (wg.abs() + h.eps);
            assert!((theta_ucb[j] - expected).abs() < 1e-15);
        }

        let mut h_adam = hp();
        h_adam.eta = 0.0;
        let mut theta_adam = vec![0.0; 3];
        let mut adam = Optimizer::new(OptimizerKind::Adam, h_adam, 3, 0).unwrap();
        adam.step(&mut theta_adam, StepInput { grad: &grad, loss }).unwrap();
        for j in 0..3 {
            assert!(
                (theta_ucb[j] - theta_adam[j]).abs() < 1e-6 * h.alpha,
                "eps-guard gap too large at {j}"
            );
        }
    }

    #[test]
    fn adam_ucb_first_step_with_zero_eta_is_noop() {
        // No history means sigma_l = 0, so eta = 0 gives weight zero: the
        // buffers stay empty and theta does not move on step one. Plain Adam
        // does move, so the two rules genuinely differ here.
        let mut theta = vec![1.0, -1.0];
        let mut opt = Optimizer::new(OptimizerKind::AdamUcb, hp(), 2, 0).unwrap();
        opt.step(&mut theta, StepInput { grad: &[5.0, 5.0], loss: 2.0 }).unwrap();
        assert_eq!(theta, vec![1.0, -1.0]);
        assert_eq!(opt.loss_moments().count(), 1);
    }

    #[test]
    fn adam_ucb_zero_gradient_keeps_theta_but_tracks_losses() {
        let mut h = hp();
        h.eta = 0.1;
        let theta0 = vec![0.4];
        let inputs: Vec<(Vec<f64>, f64)> =
            (0..10).map(|i| (vec![0.0], i as f64)).collect();
        let mut theta = theta0.clone();
        let mut opt = Optimizer::new(OptimizerKind::AdamUcb, h, 1, 0).unwrap();
        for (grad, loss) in &inputs {
            opt.step(&mut theta, StepInput { grad, loss: *loss }).unwrap();
        }
        assert_eq!(theta, theta0);
        assert_eq!(opt.loss_moments().count(), 10);
        let (mu, sigma) = opt.loss_moments().mean_std(h.beta1, h.eps);
        assert!(mu > 0.0 && sigma > 0.0);
    }

    #[test]
    fn adam_cb_first_step_is_noop() {
        // mu_l = sigma_l = 0 makes the two-sided weight exactly zero.
        let mut h = hp();
        h.eta = 0.3;
        let mut theta = vec![2.0];
        let mut opt = Optimizer::new(OptimizerKind::AdamCb, h, 1, 0).unwrap();
        opt.step(&mut theta, StepInput { grad: &[4.0], loss: 3.0 }).unwrap();
        assert_eq!(theta, vec![2.0]);
    }

    #[test]
    fn adam_cb_matches_hand_unrolled_reference() {
        // Scalar problem, three steps, reference recurrence written out
        // loss-moment by loss-moment.
        let mut h = hp();
        h.eta = 0.2;
        h.weight_decay = 0.0;
        let inputs = vec![(vec![1.5], 2.0), (vec![-0.7], 1.0), (vec![0.9], 4.0)];
        let theta = run_steps(OptimizerKind::AdamCb, h, &[0.3], &inputs, 0);

        let (mut m, mut v, mut r, mut s) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut th = 0.3f64;
        for (t, (grad, loss)) in inputs.iter().enumerate() {
            let t = (t + 1) as i32;
            let (mu, sigma) = if t == 1 {
                (0.0, 0.0)
            } else {
                let corr = 1.0 - h.beta1.powi(t - 1) + h.eps;
                let mu = r / corr;
                let s_hat = s / corr;
                (mu, (s_hat - mu * mu).max(0.0).sqrt())
            };
            let w = sigma * mu.abs() - (h.eta * mu.abs() - sigma) * (loss - mu);
            let wg = w * grad[0];
            m = h.beta1 * m + (1.0 - h.beta1) * wg;
            v = h.beta2 * v + (1.0 - h.beta2) * wg * wg;
            r = h.beta1 * r + (1.0 - h.beta1) * loss;
            s = h.beta1 * s + (1.0 - h.beta1) * loss * loss;
            let m_hat = m / (1.0 - h.beta1.powi(t));
            let v_hat = v / (1.0 - h.beta2.powi(t));
            th -= h.alpha * m_hat / (v_hat.sqrt() + h.eps);
        }
        assert!((theta[0] - th).abs() < 1e-12);
    }

    #[test]
    fn adam_s_zero_eta_matches_adam_ucb_bitwise() {
        let mut h = hp();
        h.eta = 0.0;
        let inputs: Vec<(Vec<f64>, f64)> = (0..200)
            .map(|i| {
                let x = (i as f64 * 0.37).sin();
                (vec![x, -0.5 * x], 1.0 + x * x)
            })
            .collect();
        let a = run_steps(OptimizerKind::AdamS, h, &[0.1, -0.2], &inputs, 42);
        let b = run_steps(OptimizerKind::AdamUcb, h, &[0.1, -0.2], &inputs, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn adam_s_fixed_seed_is_bit_reproducible() {
        let mut h = hp();
        h.eta = 0.05;
        let inputs: Vec<(Vec<f64>, f64)> = (0..100)
            .map(|i| (vec![(i as f64).cos(), 0.3], 2.0 + (i as f64 * 0.11).sin()))
            .collect();
        let a = run_steps(OptimizerKind::AdamS, h, &[0.0, 0.0], &inputs, 7);
        let b = run_steps(OptimizerKind::AdamS, h, &[0.0, 0.0], &inputs, 7);
        assert_eq!(a, b);
        let c = run_steps(OptimizerKind::AdamS, h, &[0.0, 0.0], &inputs, 8);
        assert_ne!(a, c, "different seeds should branch the trajectory");
    }

    #[test]
    fn adam_s_weighted_gradient_is_unbiased_in_the_draw() {
        // Monte Carlo over redraws of the Gaussian coefficient at fixed
        // (loss, mu, sigma, gradient): the mean weighted gradient must land
        // within four standard errors of sigma * g.
        use rand::SeedableRng;
        let (loss, mu, sigma, eta) = (3.0, 2.0, 1.5, 0.3);
        let g = [0.8, -1.2, 0.0];
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w_sum = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            w_sum += ucb_weight(loss, mu, sigma, eta * z);
        }
        let w_mean = w_sum / n as f64;
        // per-sample std of the weight is |eta * (loss - mu)|
        let se = (eta * (loss - mu)).abs() / (n as f64).sqrt();
        for &gj in &g {
            let got = w_mean * gj;
            let want = sigma * gj;
            assert!(
                (got - want).abs() <= 4.0 * se * gj.abs() + 1e-15,
                "got {got}, want {want}"
            );
        }
    }

    #[test]
    fn all_kinds_deterministic_and_shape_preserving() {
        let inputs: Vec<(Vec<f64>, f64)> = (0..60)
            .map(|i| {
                let x = (i as f64 * 0.29).sin();
                (vec![x, x * x - 0.3, -x, 0.7], 1.0 + x.abs())
            })
            .collect();
        let theta0 = vec![0.2, -0.1, 0.05, 1.0];
        let mut h = hp();
        h.eta = 0.01;
        h.weight_decay = 1e-4;
        for kind in OptimizerKind::ALL {
            let a = run_steps(kind, h, &theta0, &inputs, 5);
            let b = run_steps(kind, h, &theta0, &inputs, 5);
            assert_eq!(a, b, "{kind} not deterministic");
            assert_eq!(a.len(), theta0.len());
            assert!(a.iter().all(|x| x.is_finite()), "{kind} diverged");
        }
    }

    #[test]
    fn first_step_scale_invariance_for_adam_family() {
        // At t = 1 the step per coordinate is alpha * wg / (|wg| + eps), so
        // scaling the gradient by any c > 0 moves theta identically up to the
        // eps guard, whose size is eps / |wg|. The weighted gradient is
        // recovered from the first-moment buffer to bound the gap exactly.
        let grad: Vec<f64> = vec![1.3, -0.4, 0.02];
        let wg_from = |kind, h: HyperParams, g: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut theta = vec![0.0; g.len()];
            let mut opt = Optimizer::new(kind, h, g.len(), 3).unwrap();
            opt.step(&mut theta, StepInput { grad: g, loss: 2.0 }).unwrap();
            let snap = opt.snapshot();
            let wg = snap.m.iter().map(|m| m / (1.0 - h.beta1)).collect();
            (theta, wg)
        };
        for kind in [OptimizerKind::Adam, OptimizerKind::AdamUcb, OptimizerKind::AdamS] {
            let mut h = hp();
            h.eta = 0.25;
            for c in [3.0, 0.5, 100.0] {
                let scaled: Vec<f64> = grad.iter().map(|g| g * c).collect();
                let (a, wg_a) = wg_from(kind, h, &grad);
                let (b, wg_b) = wg_from(kind, h, &scaled);
                for j in 0..3 {
                    let guard = h.alpha * h.eps * (1.0 / wg_a[j].abs() + 1.0 / wg_b[j].abs());
                    assert!(
                        (a[j] - b[j]).abs() <= 2.0 * guard + 1e-18,
                        "{kind} c={c} j={j}: {} vs {}",
                        a[j],
                        b[j]
                    );
                }
            }
        }
    }

    #[test]
    fn step_magnitude_matches_moment_ratio_exactly() {
        // Tautological regression guard: the applied delta must equal
        // alpha * m_hat / (sqrt(v_hat) + eps) recomputed from the state.
        let mut h = hp();
        h.eta = 0.1;
        h.weight_decay = 1e-4;
        for kind in [OptimizerKind::Adam, OptimizerKind::AdamUcb, OptimizerKind::AdamCb] {
            let mut theta = vec![0.4, -0.9];
            let mut opt = Optimizer::new(kind, h, 2, 0).unwrap();
            for i in 0..25 {
                let x = (i as f64 * 0.61).cos();
                let grad = vec![x, 0.5 - x];
                let before = theta.clone();
                opt.step(&mut theta, StepInput { grad: &grad, loss: 1.0 + x * x }).unwrap();
                let snap = opt.snapshot();
                let bc1 = 1.0 - h.beta1.powi(snap.t as i32);
                let bc2 = 1.0 - h.beta2.powi(snap.t as i32);
                for j in 0..2 {
                    let delta = before[j] - theta[j];
                    let expect = h.alpha * (snap.m[j] / bc1) / ((snap.v[j] / bc2).sqrt() + h.eps);
                    // recovering the delta from theta costs one rounding of
                    // magnitude ulp(theta)
                    let tol = 1e-15 * (before[j].abs() + expect.abs()).max(1e-12);
                    assert!(
                        (delta - expect).abs() <= tol,
                        "{kind} step {i} coord {j}: {delta} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_dimension_mismatch_and_non_finite() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, hp(), 2, 0).unwrap();
        let mut theta = vec![0.0, 0.0];
        let err = opt
            .step(&mut theta, StepInput { grad: &[1.0], loss: 0.0 })
            .unwrap_err();
        assert!(matches!(err, OptimError::DimensionMismatch { expected: 2, actual: 1 }));

        let err = opt
            .step(&mut theta, StepInput { grad: &[1.0, f64::NAN], loss: 0.0 })
            .unwrap_err();
        assert!(matches!(err, OptimError::NonFiniteInput { what: "gradient", .. }));

        let err = opt
            .step(&mut theta, StepInput { grad: &[1.0, 1.0], loss: f64::INFINITY })
            .unwrap_err();
        assert!(matches!(err, OptimError::NonFiniteInput { what: "loss", .. }));

        // failed steps must leave the state untouched
        assert_eq!(opt.steps(), 0);
        assert_eq!(theta, vec![0.0, 0.0]);
    }

    #[test]
    fn invalid_hyperparams_rejected() {
        let mut h = hp();
        h.beta1 = 1.0;
        assert!(Optimizer::new(OptimizerKind::Adam, h, 1, 0).is_err());
        let mut h = hp();
        h.alpha = 0.0;
        assert!(Optimizer::new(OptimizerKind::Adam, h, 1, 0).is_err());
        let mut h = hp();
        h.weight_decay = -1.0;
        assert!(Optimizer::new(OptimizerKind::Adam, h, 1, 0).is_err());
        let mut h = hp();
        h.eta = f64::NAN;
        assert!(Optimizer::new(OptimizerKind::AdamS, h, 1, 0).is_err());
    }

    #[test]
    fn snapshot_restore_resumes_bit_exactly() {
        let mut h = hp();
        h.eta = 0.02;
        let inputs: Vec<(Vec<f64>, f64)> = (0..40)
            .map(|i| {
                let x = (i as f64 * 0.83).sin();
                (vec![x, -x * 0.2], 1.0 + x * x)
            })
            .collect();
        for kind in OptimizerKind::ALL {
            // uninterrupted run
            let full = run_steps(kind, h, &[0.5, -0.5], &inputs, 99);

            // run 15 steps, serialize, restore, run the rest
            let mut theta = vec![0.5, -0.5];
            let mut opt = Optimizer::new(kind, h, 2, 99).unwrap();
            for (grad, loss) in &inputs[..15] {
                opt.step(&mut theta, StepInput { grad, loss: *loss }).unwrap();
            }
            let mut buf = Vec::new();
            opt.write_snapshot(&mut buf).unwrap();
            let mut restored = Optimizer::read_snapshot(buf.as_slice()).unwrap();
            assert_eq!(restored.steps(), 15);
            for (grad, loss) in &inputs[15..] {
                restored
                    .step(&mut theta, StepInput { grad, loss: *loss })
                    .unwrap();
            }
            assert_eq!(theta, full, "{kind} resume drifted");
        }
    }

    #[test]
    fn optimizer_kind_round_trips_through_names() {
        for kind in OptimizerKind::ALL {
            assert_eq!(kind.name().parse::<OptimizerKind>().unwrap(), kind);
        }
        assert!("adamw".parse::<OptimizerKind>().is_err());
    }
}
