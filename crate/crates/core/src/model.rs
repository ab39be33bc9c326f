//! Desk-scale differentiable classifiers with hand-derived gradients.
//!
//! Both model kinds are chains of affine layers over a flat parameter
//! vector; the multilayer variant inserts ReLU between layers. Gradients are
//! exact backprop through the stabilized softmax cross-entropy, checked
//! against central finite differences in the tests.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("expected {expected} labels for {expected} rows, got {actual}")]
    LabelCountMismatch { expected: usize, actual: usize },
    #[error("parameter vector has {actual} entries, model needs {expected}")]
    ParamCountMismatch { expected: usize, actual: usize },
    #[error("feature width {actual} does not match model input width {expected}")]
    FeatureWidthMismatch { expected: usize, actual: usize },
}

/// Architecture of a classifier over flat feature vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    /// Single affine layer into the class logits.
    LogisticRegression { inputs: usize, classes: usize },
    /// Affine chain with ReLU between layers: inputs -> hidden... -> classes.
    Mlp {
        inputs: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
}

impl ModelSpec {
    /// `(fan_in, fan_out)` per affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        match self {
            ModelSpec::LogisticRegression { inputs, classes } => vec![(*inputs, *classes)],
            ModelSpec::Mlp {
                inputs,
                hidden,
                classes,
            } => {
                let mut dims = Vec::with_capacity(hidden.len() + 1);
                let mut fan_in = *inputs;
                for &h in hidden {
                    dims.push((fan_in, h));
                    fan_in = h;
                }
                dims.push((fan_in, *classes));
                dims
            }
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { inputs, .. } => *inputs,
            ModelSpec::Mlp { inputs, .. } => *inputs,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { classes, .. } => *classes,
            ModelSpec::Mlp { classes, .. } => *classes,
        }
    }

    /// Total parameter count: `(fan_in + 1) * fan_out` summed over layers.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fi, fo)| (fi + 1) * fo)
            .sum()
    }

    /// Seeded initialization: weights uniform in
    /// `+/- sqrt(6 / (fan_in + fan_out))`, biases zero. Layout is layer by
    /// layer, row-major weight block followed by its bias block.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out) in self.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-limit..limit));
            }
            params.resize(params.len() + fan_out, 0.0);
        }
        params
    }
}

/// Mean softmax cross-entropy over a batch of logit rows, with the gradient
/// w.r.t. the logits. Stabilized by row-max subtraction; the gradient is
/// `(softmax - onehot) / batch_size`.
pub fn softmax_cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), ModelError> {
    let batch = logits.nrows();
    let classes = logits.ncols();
    if batch == 0 {
        return Err(ModelError::EmptyBatch);
    }
    if labels.len() != batch {
        return Err(ModelError::LabelCountMismatch {
            expected: batch,
            actual: labels.len(),
        });
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(ModelError::LabelOutOfRange {
                row,
                label,
                classes,
            });
        }
    }

    let mut probs = logits.clone();
    let mut loss = 0.0;
    for (row, mut r) in probs.rows_mut().into_iter().enumerate() {
        let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        r.mapv_inplace(|x| (x - max).exp());
        let total: f64 = r.sum();
        r.mapv_inplace(|x| x / total);
        loss -= r[labels[row]].ln();
    }
    loss /= batch as f64;

    let mut dlogits = probs;
    for (row, &label) in labels.iter().enumerate() {
        dlogits[(row, label)] -= 1.0;
    }
    dlogits.mapv_inplace(|x| x / batch as f64);
    Ok((loss, dlogits))
}

/// Weight-matrix view and bias slice of one affine layer.
type LayerView<'a> = (ArrayView2<'a, f64>, &'a [f64]);

/// Splits the flat parameter vector into per-layer weight and bias views.
fn layer_views<'a>(spec: &ModelSpec, params: &'a [f64]) -> Result<Vec<LayerView<'a>>, ModelError> {
    if params.len() != spec.param_count() {
        return Err(ModelError::ParamCountMismatch {
            expected: spec.param_count(),
            actual: params.len(),
        });
    }
    let mut layers = Vec::new();
    let mut offset = 0;
    for (fan_in, fan_out) in spec.layer_dims() {
        let w = ArrayView2::from_shape((fan_in, fan_out), &params[offset..offset + fan_in * fan_out])
            .expect("weight block shape follows from the layout");
        offset += fan_in * fan_out;
        let b = &params[offset..offset + fan_out];
        offset += fan_out;
        layers.push((w, b));
    }
    Ok(layers)
}

fn check_features(spec: &ModelSpec, features: &ArrayView2<'_, f64>) -> Result<(), ModelError> {
    if features.ncols() != spec.inputs() {
        return Err(ModelError::FeatureWidthMismatch {
            expected: spec.inputs(),
            actual: features.ncols(),
        });
    }
    Ok(())
}

/// Forward pass to the class logits.
pub fn model_logits(
    spec: &ModelSpec,
    params: &[f64],
    features: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, ModelError> {
    check_features(spec, &features)?;
    let layers = layer_views(spec, params)?;
    let last = layers.len() - 1;
    let mut activation = features.to_owned();
    for (k, (w, b)) in layers.iter().enumerate() {
        let mut z = activation.dot(w);
        z += &ArrayView1::from(*b);
        if k < last {
            z.mapv_inplace(|x| x.max(0.0));
        }
        activation = z;
    }
    Ok(activation)
}

/// Mean batch loss and its exact gradient w.r.t. the flat parameter vector.
/// Pure function of `(params, batch)`.
pub fn model_loss_grad(
    spec: &ModelSpec,
    params: &[f64],
    features: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Vec<f64>), ModelError> {
    check_features(spec, &features)?;
    let layers = layer_views(spec, params)?;
    let last = layers.len() - 1;

    // forward, keeping each layer's input activation for the backward pass
    let mut activations: Vec<Array2<f64>> = vec![features.to_owned()];
    for (k, (w, b)) in layers.iter().enumerate() {
        let mut z = activations[k].dot(w);
        z += &ArrayView1::from(*b);
        if k < last {
            z.mapv_inplace(|x| x.max(0.0));
        }
        activations.push(z);
    }

    let (loss, dlogits) = softmax_cross_entropy(&activations[last + 1], labels)?;

    let mut grad = vec![0.0; params.len()];
    let mut delta = dlogits;
    // per-layer offsets into the flat gradient, rebuilt back-to-front
    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for (fan_in, fan_out) in spec.layer_dims() {
        offsets.push(offset);
        offset += (fan_in + 1) * fan_out;
    }
    for k in (0..layers.len()).rev() {
        let (w, _) = &layers[k];
        let input = &activations[k];
        let dw = input.t().dot(&delta);
        let db = delta.sum_axis(Axis(0));
        let (fan_in, fan_out) = (w.nrows(), w.ncols());
        let base = offsets[k];
        grad[base..base + fan_in * fan_out]
            .copy_from_slice(dw.as_slice().expect("dot output is standard layout"));
        grad[base + fan_in * fan_out..base + (fan_in + 1) * fan_out]
            .copy_from_slice(db.as_slice().expect("sum output is contiguous"));
        if k > 0 {
            let mut upstream = delta.dot(&w.t());
            // ReLU gate: the stored activation is already max(0, z)
            upstream.zip_mut_with(input, |u, &a| {
                if a <= 0.0 {
                    *u = 0.0;
                }
            });
            delta = upstream;
        }
    }
    Ok((loss, grad))
}
