//! Seeded training runs: one optimizer step per mini-batch, evaluation at
//! epoch boundaries.
//!
//! Seeds run in parallel as independent jobs; within a seed everything is
//! strictly sequential and summation orders are fixed, so a (config, seed)
//! pair always reproduces the same metrics. The wall-clock column is the one
//! quantity the seed does not control; `record_timing = false` zeroes it for
//! byte-identical output files.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use varadam::{
    model_logits, model_loss_grad, softmax_cross_entropy, Dataset, MiniBatchStream, ModelSpec,
    OptimError, Optimizer, StepInput, SyntheticProblem,
};

use crate::config::{DatasetChoice, ExperimentConfig, ModelChoice};
use crate::metrics::MetricsRecord;
use crate::HarnessError;

/// Seed offsets for the independent random streams of one run.
const STREAM_SEED_OFFSET: u64 = 1;
const OPTIMIZER_SEED_OFFSET: u64 = 2;

const MNIST_FILE_STEMS: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// A training input loaded once and shared read-only across seeds.
#[derive(Debug)]
pub enum ExperimentData {
    Mnist { train: Dataset, val: Dataset },
    Synthetic(SyntheticProblem),
}

/// A seed aborted because its loss left the finite range at `step`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub seed: u64,
    pub step: u64,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "seed {} diverged: non-finite loss at step {}",
            self.seed, self.step
        )
    }
}

pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub divergences: Vec<Divergence>,
}

fn find_idx_file(dir: &std::path::Path, stem: &str) -> Result<PathBuf, HarnessError> {
    for candidate in [dir.join(stem), dir.join(format!("{stem}.gz"))] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(HarnessError::DatasetMissing {
        dir: dir.to_path_buf(),
        file: stem.to_string(),
    })
}

/// Loads and prepares the configured dataset. The digit data is normalized
/// with scalar statistics of the training split, and the same numbers are
/// applied to the held-out split.
pub fn load_data(cfg: &ExperimentConfig) -> Result<ExperimentData, HarnessError> {
    match cfg.dataset {
        DatasetChoice::Synthetic => Ok(ExperimentData::Synthetic(SyntheticProblem::generate(
            cfg.synthetic.batches,
            cfg.synthetic.dim,
            cfg.synthetic.spread,
            // population draw is config-level, not per-seed
            0,
        ))),
        DatasetChoice::Mnist => {
            let dir = &cfg.data_dir;
            let mut train = varadam::load_mnist_idx(
                &find_idx_file(dir, MNIST_FILE_STEMS[0])?,
                &find_idx_file(dir, MNIST_FILE_STEMS[1])?,
            )?;
            let mut val = varadam::load_mnist_idx(
                &find_idx_file(dir, MNIST_FILE_STEMS[2])?,
                &find_idx_file(dir, MNIST_FILE_STEMS[3])?,
            )?;
            let (mean, std) = train.normalize()?;
            val.apply_normalization(mean, std);
            Ok(ExperimentData::Mnist { train, val })
        }
    }
}

pub fn model_spec(cfg: &ExperimentConfig, train: &Dataset) -> ModelSpec {
    match cfg.model {
        ModelChoice::Lr => ModelSpec::LogisticRegression {
            inputs: train.dim(),
            classes: train.classes(),
        },
        ModelChoice::Mlp => ModelSpec::Mlp {
            inputs: train.dim(),
            hidden: vec![1000, 1000],
            classes: train.classes(),
        },
    }
}

/// Trains every configured seed and collects all evaluation records. A seed
/// whose loss turns non-finite is aborted and reported in `divergences`;
/// its records up to the last completed epoch are kept.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<RunOutput, HarnessError> {
    let per_seed: Vec<Result<SeedRun, HarnessError>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, data, seed))
        .collect();

    let mut records = Vec::new();
    let mut divergences = Vec::new();
    for outcome in per_seed {
        let run = outcome?;
        records.extend(run.records);
        divergences.extend(run.divergence);
    }
    Ok(RunOutput {
        records,
        divergences,
    })
}

struct SeedRun {
    records: Vec<MetricsRecord>,
    divergence: Option<Divergence>,
}

fn run_seed(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    seed: u64,
) -> Result<SeedRun, HarnessError> {
    match data {
        ExperimentData::Mnist { train, val } => run_seed_model(cfg, train, val, seed),
        ExperimentData::Synthetic(problem) => run_seed_synthetic(cfg, problem, seed),
    }
}

fn run_seed_model(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
    seed: u64,
) -> Result<SeedRun, HarnessError> {
    let spec = model_spec(cfg, train);
    let mut theta = spec.init_params(seed);
    let mut stream = MiniBatchStream::new(
        train.len(),
        cfg.batch_size,
        cfg.shuffle,
        seed.wrapping_add(STREAM_SEED_OFFSET),
    )?;
    let mut opt = Optimizer::new(
        cfg.optimizer,
        cfg.hp,
        theta.len(),
        seed.wrapping_add(OPTIMIZER_SEED_OFFSET),
    )?;

    let start = Instant::now();
    let mut records = Vec::new();
    let mut divergence = None;
    let mut step: u64 = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0u32;
        for _ in 0..stream.batches_per_epoch() {
            let indices = stream.next_batch().to_vec();
            let (features, labels) = train.batch(&indices);
            let (loss, grad) = model_loss_grad(&spec, &theta, features.view(), &labels)?;
            step += 1;
            match take_step(&mut opt, &mut theta, &grad, loss, seed, step)? {
                None => {}
                Some(d) => {
                    divergence = Some(d);
                    break 'epochs;
                }
            }
            loss_sum += loss;
            batches += 1;
        }
        let (val_loss, val_acc) = evaluate_model(&spec, &theta, val)?;
        records.push(MetricsRecord {
            seed,
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss,
            val_acc,
            wall_seconds: elapsed(cfg, start),
        });
    }
    Ok(SeedRun {
        records,
        divergence,
    })
}

fn run_seed_synthetic(
    cfg: &ExperimentConfig,
    synth: &SyntheticProblem,
    seed: u64,
) -> Result<SeedRun, HarnessError> {
    let problem = synth.problem();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta: Vec<f64> = (0..synth.dim())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut stream = MiniBatchStream::new(
        synth.len(),
        1,
        cfg.shuffle,
        seed.wrapping_add(STREAM_SEED_OFFSET),
    )?;
    let mut opt = Optimizer::new(
        cfg.optimizer,
        cfg.hp,
        theta.len(),
        seed.wrapping_add(OPTIMIZER_SEED_OFFSET),
    )?;

    let start = Instant::now();
    let mut records = Vec::new();
    let mut divergence = None;
    let mut step: u64 = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0u32;
        for _ in 0..synth.len() {
            let batch = stream.next_batch()[0];
            let (loss, grad) = synth.eval(batch, &theta);
            step += 1;
            match take_step(&mut opt, &mut theta, &grad, loss, seed, step)? {
                None => {}
                Some(d) => {
                    divergence = Some(d);
                    break 'epochs;
                }
            }
            loss_sum += loss;
            batches += 1;
        }
        let val_loss = problem.full_loss(&theta)?;
        records.push(MetricsRecord {
            seed,
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss,
            val_acc: 0.0,
            wall_seconds: elapsed(cfg, start),
        });
    }
    Ok(SeedRun {
        records,
        divergence,
    })
}

/// A non-finite loss or gradient aborts the seed (reported as a divergence
/// naming the step); every other optimizer error propagates.
fn take_step(
    opt: &mut Optimizer,
    theta: &mut [f64],
    grad: &[f64],
    loss: f64,
    seed: u64,
    step: u64,
) -> Result<Option<Divergence>, HarnessError> {
    if !loss.is_finite() {
        return Ok(Some(Divergence { seed, step }));
    }
    match opt.step(theta, StepInput { grad, loss }) {
        Ok(()) => Ok(None),
        Err(OptimError::NonFiniteInput { .. }) => Ok(Some(Divergence { seed, step })),
        Err(e) => Err(e.into()),
    }
}

fn elapsed(cfg: &ExperimentConfig, start: Instant) -> f64 {
    if cfg.record_timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Mean loss and accuracy (%) over a dataset, evaluated in fixed-order
/// chunks.
pub fn evaluate_model(
    spec: &ModelSpec,
    theta: &[f64],
    dataset: &Dataset,
) -> Result<(f64, f64), HarnessError> {
    const CHUNK: usize = 1000;
    let n = dataset.len();
    let mut weighted_loss = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (features, labels) = dataset.batch(&indices);
        let logits = model_logits(spec, theta, features.view())?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        weighted_loss += loss * (end - start) as f64;
        for (row, &label) in labels.iter().enumerate() {
            let scores = logits.row(row);
            let mut best = 0;
            for c in 1..scores.len() {
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        start = end;
    }
    Ok((
        weighted_loss / n as f64,
        100.0 * correct as f64 / n as f64,
    ))
}
