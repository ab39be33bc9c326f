//! Seeded synthetic quadratic problems with controllable cross-batch spread.
//!
//! Each batch loss is `0.5 (theta - c_i)' A_i (theta - c_i) + b_i` with a
//! symmetric positive-definite `A_i`. All batches share a base quadratic;
//! per-batch perturbations of the curvature, the center and the offset are
//! scaled by `spread`, so `spread = 0` collapses the population to identical
//! batches while larger values raise the loss variance.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::oracle::{BatchFn, StochasticProblem};

/// One quadratic batch loss.
#[derive(Debug, Clone)]
pub struct QuadraticTerm {
    pub curvature: Array2<f64>,
    pub center: Vec<f64>,
    pub offset: f64,
}

impl QuadraticTerm {
    pub fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = theta.len();
        let mut grad = vec![0.0; d];
        for (j, g) in grad.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, t) in theta.iter().enumerate() {
                acc += self.curvature[(j, k)] * (t - self.center[k]);
            }
            *g = acc;
        }
        let mut loss = self.offset;
        for j in 0..d {
            loss += 0.5 * (theta[j] - self.center[j]) * grad[j];
        }
        (loss, grad)
    }
}

/// A finite family of quadratic batches with known closed-form structure.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    dim: usize,
    terms: Vec<QuadraticTerm>,
}

impl SyntheticProblem {
    /// Draws `batches` quadratics of dimension `dim`, fully determined by
    /// `seed`.
    pub fn generate(batches: usize, dim: usize, spread: f64, seed: u64) -> Self {
        assert!(batches >= 1, "need at least one batch");
        assert!(dim >= 1, "dimension must be positive");
        assert!(spread >= 0.0, "spread must be non-negative");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

        let base_curvature = random_spd(dim, &mut normal);
        let base_center: Vec<f64> = (0..dim).map(|_| normal()).collect();
        let base_offset = normal();

        let terms = (0..batches)
            .map(|_| {
                // adding a PSD perturbation keeps the curvature positive definite
                let bump = random_psd(dim, &mut normal);
                let mut curvature = base_curvature.clone();
                curvature.zip_mut_with(&bump, |a, &p| *a += spread * p);
                let center = base_center
                    .iter()
                    .map(|&c| c + spread * normal())
                    .collect();
                let offset = base_offset + spread * normal();
                QuadraticTerm {
                    curvature,
                    center,
                    offset,
                }
            })
            .collect();
        Self { dim, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[QuadraticTerm] {
        &self.terms
    }

    pub fn eval(&self, i: usize, theta: &[f64]) -> (f64, Vec<f64>) {
        self.terms[i].eval(theta)
    }

    /// Packages the terms as an opaque batch population for the oracle
    /// routines.
    pub fn problem(&self) -> StochasticProblem {
        let batches: Vec<BatchFn> = self
            .terms
            .iter()
            .cloned()
            .map(|term| Box::new(move |theta: &[f64]| term.eval(theta)) as BatchFn)
            .collect();
        StochasticProblem::new(self.dim, batches)
    }

    /// Closed-form minimizer of the mean loss: the curvature-weighted mean of
    /// the centers, `(sum_i A_i)^{-1} (sum_i A_i c_i)`.
    pub fn full_minimizer(&self) -> Vec<f64> {
        let d = self.dim;
        let mut lhs = Array2::<f64>::zeros((d, d));
        let mut rhs = vec![0.0; d];
        for term in &self.terms {
            lhs += &term.curvature;
            for (j, r) in rhs.iter_mut().enumerate() {
                for k in 0..d {
                    *r += term.curvature[(j, k)] * term.center[k];
                }
            }
        }
        solve_linear(lhs, rhs)
    }
}

fn random_spd(dim: usize, normal: &mut impl FnMut() -> f64) -> Array2<f64> {
    let mut a = random_psd(dim, normal);
    for j in 0..dim {
        a[(j, j)] += 1.0;
    }
    a
}

/// `B' B / dim` for a standard-normal `B`.
fn random_psd(dim: usize, normal: &mut impl FnMut() -> f64) -> Array2<f64> {
    let b = Array2::from_shape_fn((dim, dim), |_| normal());
    let mut a = Array2::zeros((dim, dim));
    for j in 0..dim {
        for k in 0..dim {
            let mut acc = 0.0;
            for r in 0..dim {
                acc += b[(r, j)] * b[(r, k)];
            }
            a[(j, k)] = acc / dim as f64;
        }
    }
    a
}

/// Gaussian elimination with partial pivoting; the systems here are small,
/// symmetric positive definite and well conditioned.
fn solve_linear(mut a: Array2<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                a[(i, col)]
                    .abs()
                    .partial_cmp(&a[(j, col)].abs())
                    .expect("finite pivots")
            })
            .expect("non-empty range");
        if pivot_row != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(pivot_row, k)];
                a[(pivot_row, k)] = tmp;
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[(col, col)];
        assert!(pivot.abs() > 1e-300, "matrix is singular");
        for row in col + 1..n {
            let factor = a[(row, col)] / pivot;
            for k in col..n {
                a[(row, k)] -= factor * a[(col, k)];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[(row, k)] * x[k];
        }
        x[row] = acc / a[(row, row)];
    }
    x
}
