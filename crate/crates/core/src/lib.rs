//! Variance-aware momentum optimizers with exact finite-population oracles.
//!
//! The pieces fit together like this:
//!
//! - [`loss_moments`] keeps exponentially weighted statistics of the scalar
//!   mini-batch loss and exposes the normalized exponential lookback
//!   distribution under which a bias-corrected momentum buffer is a weighted
//!   average of past gradients.
//! - [`optim`] implements five update rules behind one step interface:
//!   SGD with momentum and bias correction, Adam, and three Adam variants
//!   that scale each gradient by a confidence weight built from the running
//!   loss statistics.
//! - [`oracle`] holds a whole population of mini-batch losses at once and
//!   computes the quantities the optimizers only approximate — exact
//!   confidence-bound gradients, the loss/gradient covariance, central
//!   finite differences and Monte Carlo checks.
//! - [`model`], [`data`] and [`synthetic`] supply desk-scale classifiers
//!   with hand-derived gradients, IDX dataset loading with mini-batch
//!   streaming, and seeded quadratic test problems.

pub mod data;
pub mod loss_moments;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod synthetic;

pub use data::{load_mnist_idx, DataError, Dataset, MiniBatchStream};
pub use loss_moments::{ExpDecayDistribution, LossMomentTracker, MomentError};
pub use model::{
    model_logits, model_loss_grad, softmax_cross_entropy, ModelError, ModelSpec,
};
pub use optim::{
    cb_weight, ucb_weight, HyperParams, OptimError, Optimizer, OptimizerKind,
    OptimizerSnapshot, StepInput,
};
pub use oracle::{
    finite_diff_grad, momentum_s_expectation, BatchFn, OracleError, StochasticProblem,
};
pub use synthetic::{QuadraticTerm, SyntheticProblem};
