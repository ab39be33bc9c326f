//! The identity suite behind `varadam verify`: every algebraic fact the
//! optimizers rely on, checked numerically by an independent route.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varadam::{
    finite_diff_grad, model_loss_grad, momentum_s_expectation, ExpDecayDistribution, ModelSpec,
    SyntheticProblem,
};

/// Outcome of one identity check.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> IdentityCheck {
    IdentityCheck {
        name,
        passed,
        detail,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Bias-corrected momentum over a gradient history equals the explicit
/// average under the exponential lookback weights, within 1e-10 relative.
fn momentum_unrolling() -> IdentityCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for beta in [0.5, 0.9, 0.99] {
        let grads: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut m = 0.0;
        for t in 1..=grads.len() {
            m = beta * m + (1.0 - beta) * grads[t - 1];
            let m_hat = m / (1.0 - beta.powi(t as i32));
            let dist = ExpDecayDistribution::new(beta, t as u64);
            let explicit: f64 = (0..t as u64)
                .map(|p| dist.weight(p).unwrap() * grads[t - 1 - p as usize])
                .sum();
            let rel = (m_hat - explicit).abs() / explicit.abs().max(1e-300);
            worst = worst.max(rel);
        }
    }
    check(
        "momentum-unrolling",
        worst < 1e-10,
        format!("max relative gap {worst:.2e} (tolerance 1e-10)"),
    )
}

/// Exact confidence-bound gradient against central finite differences of the
/// bound loss, on 20 random quadratic populations.
fn ucb_gradient_vs_finite_difference() -> IdentityCheck {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let synth = SyntheticProblem::generate(8, 10, 1.0, seed);
        let problem = synth.problem();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
        let theta: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eta = rng.random_range(-1.0..1.0);
        let exact = problem.ucb_grad_exact(&theta, eta).unwrap();
        let fd = finite_diff_grad(|t| problem.ucb_loss(t, eta).unwrap(), &theta, 1e-4);
        worst = worst.max(max_abs_diff(&exact, &fd));
    }
    check(
        "ucb-gradient-vs-finite-difference",
        worst <= 1e-5,
        format!("max abs gap {worst:.2e} over 20 problems (tolerance 1e-5)"),
    )
}

/// The centered form `mean[(l - mu) g]` equals the split form
/// `mean[l g] - mean[l] mean[g]`, within 1e-12.
fn covariance_identity() -> IdentityCheck {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let synth = SyntheticProblem::generate(8, 10, 1.0, seed + 40);
        let problem = synth.problem();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 900);
        let theta: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let split = problem.variance_grad_cov(&theta).unwrap();

        let evals: Vec<(f64, Vec<f64>)> =
            (0..problem.len()).map(|i| problem.eval(i, &theta)).collect();
        let m = evals.len() as f64;
        let mu = evals.iter().map(|(l, _)| l).sum::<f64>() / m;
        let mut centered = vec![0.0; problem.dim()];
        for (l, g) in &evals {
            for j in 0..problem.dim() {
                centered[j] += (l - mu) * g[j] / m;
            }
        }
        worst = worst.max(max_abs_diff(&split, &centered));
    }
    check(
        "loss-gradient-covariance-identity",
        worst <= 1e-12,
        format!("max abs gap {worst:.2e} (tolerance 1e-12)"),
    )
}

/// The spread gradient through the chain rule, `(eta / sigma) * cov`, against
/// finite differences of `eta * sigma`.
fn std_chain_rule() -> IdentityCheck {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let synth = SyntheticProblem::generate(6, 8, 1.0, seed + 70);
        let problem = synth.problem();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1300);
        let theta: Vec<f64> = (0..8).map(|_| rng.random_range(-1.5..1.5)).collect();
        let eta = 0.7;
        let (_, sigma) = problem.population_moments(&theta).unwrap();
        let cov = problem.variance_grad_cov(&theta).unwrap();
        let analytic: Vec<f64> = cov.iter().map(|c| eta / sigma * c).collect();
        let fd = finite_diff_grad(
            |t| eta * problem.population_moments(t).unwrap().1,
            &theta,
            1e-4,
        );
        worst = worst.max(max_abs_diff(&analytic, &fd));
    }
    check(
        "std-chain-rule",
        worst <= 1e-5,
        format!("max abs gap {worst:.2e} (tolerance 1e-5)"),
    )
}

/// Monte Carlo mean of the stochastically weighted gradient lands within four
/// standard errors of the plain gradient, per coordinate.
fn stochastic_weight_unbiasedness() -> IdentityCheck {
    let grad = [1.0, -0.5, 3.0, 0.0];
    let (loss, mu, sigma, eta) = (2.0, 1.0, 1.0, 0.3);
    let n = 100_000u64;
    let out = momentum_s_expectation(loss, mu, sigma, &grad, eta, n, 2024).unwrap();
    let se = (eta * (loss - mu) / sigma).abs() / (n as f64).sqrt();
    let mut worst_ratio = 0.0f64;
    let mut ok = true;
    for (got, want) in out.iter().zip(&grad) {
        let bound = 4.0 * se * want.abs();
        let gap = (got - want).abs();
        if gap > bound + 1e-15 {
            ok = false;
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(gap / bound);
        }
    }
    check(
        "stochastic-weight-unbiasedness",
        ok,
        format!("worst gap at {:.2} of the 4-standard-error bound, n = {n}", worst_ratio),
    )
}

/// Backprop gradients of both model kinds against finite differences.
fn model_gradient_checks() -> IdentityCheck {
    let specs = [
        ModelSpec::LogisticRegression {
            inputs: 20,
            classes: 3,
        },
        ModelSpec::Mlp {
            inputs: 8,
            hidden: vec![7, 5],
            classes: 4,
        },
    ];
    let mut worst = 0.0f64;
    for spec in &specs {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + 7);
            let params = spec.init_params(seed);
            let features = ndarray::Array2::from_shape_fn((10, spec.inputs()), |_| {
                rng.random_range(-1.0..1.0)
            });
            let labels: Vec<usize> = (0..10)
                .map(|_| rng.random_range(0..spec.classes()))
                .collect();
            let (_, grad) = model_loss_grad(spec, &params, features.view(), &labels).unwrap();
            let fd = finite_diff_grad(
                |p| model_loss_grad(spec, p, features.view(), &labels).unwrap().0,
                &params,
                1e-4,
            );
            worst = worst.max(max_abs_diff(&grad, &fd));
        }
    }
    check(
        "model-gradient-check",
        worst <= 1e-5,
        format!("max abs gap {worst:.2e} over both models (tolerance 1e-5)"),
    )
}

/// Runs every identity check and reports one line each.
pub fn run_identity_suite() -> Vec<IdentityCheck> {
    vec![
        momentum_unrolling(),
        ucb_gradient_vs_finite_difference(),
        covariance_identity(),
        std_chain_rule(),
        stochastic_weight_unbiasedness(),
        model_gradient_checks(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_full_suite_passes() {
        let results = run_identity_suite();
        assert_eq!(results.len(), 6);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
