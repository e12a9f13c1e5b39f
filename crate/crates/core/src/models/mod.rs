//! Trainable predictors with hand-derived gradients.
//!
//! Two model families share one code path: a stack of affine layers with ReLU
//! between consecutive layers. A [`ModelSpec::Linear`] model is a single
//! bias-free layer (`y = W x`), a [`ModelSpec::Mlp`] has biases on every layer
//! and ReLU after every hidden layer.
//!
//! Parameters travel as one flat [`ParameterVector`]. Packing order, layer by
//! layer from input to output: the weight matrix in row-major order with shape
//! `(out, in)`, then the bias vector of that layer if it has one. Sanitization
//! and clustering act on this flat vector, so the order is part of the format
//! of exported hypotheses.

pub(crate) mod params;
mod sgd;

pub use params::ParameterVector;
pub use sgd::{local_update, LocalTraining};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Architecture of a predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `y = W x` without intercept.
    Linear {
        input_dim: usize,
        #[serde(default = "one")]
        output_dim: usize,
    },
    /// Fully connected ReLU network with the given hidden widths.
    Mlp {
        input_dim: usize,
        hidden: Vec<usize>,
        #[serde(default = "one")]
        output_dim: usize,
    },
}

fn one() -> usize {
    1
}

/// Objective minimized by local training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `‖Y − f(X, θ)‖₂ / √m` over the whole batch.
    #[default]
    Rmse,
    /// Mean negative log-softmax of the target class; targets hold class indices.
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    bias: bool,
}

impl Layer {
    fn len(&self) -> usize {
        self.inputs * self.outputs + if self.bias { self.outputs } else { 0 }
    }
}

impl ModelSpec {
    /// The hospital cost regressor: 3 inputs, one hidden layer of 2 ReLU
    /// units, scalar output; 11 parameters.
    pub fn hospital_default() -> Self {
        ModelSpec::Mlp {
            input_dim: 3,
            hidden: vec![2],
            output_dim: 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::Linear { input_dim, .. } | ModelSpec::Mlp { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ModelSpec::Linear { output_dim, .. } | ModelSpec::Mlp { output_dim, .. } => *output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 || self.output_dim() == 0 {
            return Err(Error::invalid("model input and output dimensions must be positive"));
        }
        if let ModelSpec::Mlp { hidden, .. } = self {
            if hidden.contains(&0) {
                return Err(Error::invalid("hidden layer widths must be positive"));
            }
        }
        Ok(())
    }

    fn layers(&self) -> Vec<Layer> {
        match self {
            ModelSpec::Linear {
                input_dim,
                output_dim,
            } => vec![Layer {
                inputs: *input_dim,
                outputs: *output_dim,
                bias: false,
            }],
            ModelSpec::Mlp {
                input_dim,
                hidden,
                output_dim,
            } => {
                let mut widths = Vec::with_capacity(hidden.len() + 2);
                widths.push(*input_dim);
                widths.extend_from_slice(hidden);
                widths.push(*output_dim);
                widths
                    .windows(2)
                    .map(|w| Layer {
                        inputs: w[0],
                        outputs: w[1],
                        bias: true,
                    })
                    .collect()
            }
        }
    }

    /// Length `n` of the flat parameter vector.
    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(Layer::len).sum()
    }

    /// Draws initial parameters.
    ///
    /// Linear models use independent standard normals (hypotheses "centered in
    /// 0 with unit variance"); MLPs use `U[-1/√fan_in, 1/√fan_in]` for weights
    /// and biases alike.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let mut values = Vec::with_capacity(self.parameter_count());
        match self {
            ModelSpec::Linear { .. } => {
                values.extend((0..self.parameter_count()).map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z
                }));
            }
            ModelSpec::Mlp { .. } => {
                for layer in self.layers() {
                    let bound = 1.0 / (layer.inputs as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                    values.extend((0..layer.len()).map(|_| dist.sample(rng)));
                }
            }
        }
        ParameterVector::new(values).expect("initial parameters are finite")
    }

    /// Splits a flat vector into per-layer `(weights, biases)` slices.
    ///
    /// Biases are empty for bias-free layers.
    pub fn unpack<'a>(&self, params: &'a [f64]) -> Result<Vec<(&'a [f64], &'a [f64])>> {
        check_dim(self.parameter_count(), params.len())?;
        let mut out = Vec::new();
        let mut rest = params;
        for layer in self.layers() {
            let (w, tail) = rest.split_at(layer.inputs * layer.outputs);
            let (b, tail) = tail.split_at(if layer.bias { layer.outputs } else { 0 });
            out.push((w, b));
            rest = tail;
        }
        Ok(out)
    }

    /// Inverse of [`ModelSpec::unpack`].
    pub fn pack(&self, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<ParameterVector> {
        let shapes = self.layers();
        check_dim(shapes.len(), layers.len())?;
        let mut values = Vec::with_capacity(self.parameter_count());
        for (shape, (w, b)) in shapes.iter().zip(layers) {
            check_dim(shape.inputs * shape.outputs, w.len())?;
            check_dim(if shape.bias { shape.outputs } else { 0 }, b.len())?;
            values.extend_from_slice(w);
            values.extend_from_slice(b);
        }
        ParameterVector::new(values)
    }
}

/// A set of supervised samples, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    features: Vec<f64>,
    feature_dim: usize,
    targets: Vec<f64>,
    target_dim: usize,
}

impl Batch {
    /// `features` holds `rows × feature_dim` values, `targets` holds
    /// `rows × target_dim` values.
    pub fn new(
        features: Vec<f64>,
        feature_dim: usize,
        targets: Vec<f64>,
        target_dim: usize,
    ) -> Result<Self> {
        if feature_dim == 0 || target_dim == 0 {
            return Err(Error::invalid("feature and target widths must be positive"));
        }
        if !features.len().is_multiple_of(feature_dim) || !targets.len().is_multiple_of(target_dim) {
            return Err(Error::invalid("ragged batch"));
        }
        let rows = features.len() / feature_dim;
        check_dim(rows, targets.len() / target_dim)?;
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("batch contains non-finite values"));
        }
        Ok(Batch {
            features,
            feature_dim,
            targets,
            target_dim,
        })
    }

    /// Single-target batch from `(features, target)` rows.
    pub fn from_rows<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        let mut dim = None;
        for (x, y) in rows {
            let d = *dim.get_or_insert(x.len());
            check_dim(d, x.len())?;
            features.extend(x);
            targets.push(y);
        }
        Batch::new(features, dim.unwrap_or(1), targets, 1)
    }

    pub fn len(&self) -> usize {
        self.targets.len() / self.target_dim
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> (&[f64], &[f64]) {
        (
            &self.features[i * self.feature_dim..(i + 1) * self.feature_dim],
            &self.targets[i * self.target_dim..(i + 1) * self.target_dim],
        )
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut targets = Vec::with_capacity(indices.len() * self.target_dim);
        for &i in indices {
            let (x, y) = self.row(i);
            features.extend_from_slice(x);
            targets.extend_from_slice(y);
        }
        Batch {
            features,
            feature_dim: self.feature_dim,
            targets,
            target_dim: self.target_dim,
        }
    }
}

/// Per-sample activations kept for the backward pass.
struct Trace {
    // inputs to each layer; inputs[0] is the sample itself
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

fn forward(layers: &[Layer], packed: &[(&[f64], &[f64])], x: &[f64]) -> Trace {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut current = x.to_vec();
    for (idx, (layer, (w, b))) in layers.iter().zip(packed).enumerate() {
        let mut next = vec![0.0; layer.outputs];
        for (o, slot) in next.iter_mut().enumerate() {
            let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
            let mut acc: f64 = row.iter().zip(&current).map(|(a, b)| a * b).sum();
            if layer.bias {
                acc += b[o];
            }
            *slot = acc;
        }
        if idx + 1 < layers.len() {
            next.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        inputs.push(std::mem::replace(&mut current, next));
    }
    Trace {
        inputs,
        output: current,
    }
}

/// Accumulates `∂L/∂θ` for one sample given `∂L/∂output` into `grad`.
fn backward(
    layers: &[Layer],
    packed: &[(&[f64], &[f64])],
    trace: &Trace,
    output_grad: Vec<f64>,
    grad: &mut [f64],
) {
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for layer in layers {
        offsets.push(off);
        off += layer.len();
    }

    let mut delta = output_grad;
    for idx in (0..layers.len()).rev() {
        let layer = layers[idx];
        let input = &trace.inputs[idx];
        let base = offsets[idx];
        for o in 0..layer.outputs {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
            row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
            if layer.bias {
                grad[base + layer.inputs * layer.outputs + o] += d;
            }
        }
        if idx == 0 {
            break;
        }
        // input of this layer is ReLU(pre) of the previous one; ReLU'(z) = [z > 0]
        let w = packed[idx].0;
        let mut prev = vec![0.0; layer.inputs];
        for (i, p) in prev.iter_mut().enumerate() {
            if input[i] > 0.0 {
                *p = (0..layer.outputs)
                    .map(|o| w[o * layer.inputs + i] * delta[o])
                    .sum();
            }
        }
        delta = prev;
    }
}

fn check_features(spec: &ModelSpec, params: &[f64], feature_dim: usize) -> Result<()> {
    spec.validate()?;
    check_dim(spec.parameter_count(), params.len())?;
    check_dim(spec.input_dim(), feature_dim)
}

/// Model outputs for row-major `features`, row-major `rows × output_dim`.
pub fn predict(spec: &ModelSpec, params: &ParameterVector, features: &[f64]) -> Result<Vec<f64>> {
    check_features(spec, params.as_slice(), spec.input_dim())?;
    if !features.len().is_multiple_of(spec.input_dim()) {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            actual: features.len() % spec.input_dim(),
        });
    }
    let layers = spec.layers();
    let packed = spec.unpack(params.as_slice())?;
    Ok(features
        .chunks(spec.input_dim())
        .flat_map(|x| forward(&layers, &packed, x).output)
        .collect())
}

fn check_batch(spec: &ModelSpec, params: &ParameterVector, batch: &Batch, objective: Objective) -> Result<()> {
    check_features(spec, params.as_slice(), batch.feature_dim())?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    match objective {
        Objective::Rmse => check_dim(spec.output_dim(), batch.target_dim()),
        Objective::CrossEntropy => {
            check_dim(1, batch.target_dim())?;
            let k = spec.output_dim();
            match batch.targets().iter().find(|&&c| c < 0.0 || c.fract() != 0.0 || c >= k as f64) {
                Some(c) => Err(Error::invalid(format!("class label {c} outside 0..{k}"))),
                None => Ok(()),
            }
        }
    }
}

fn log_softmax_parts(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// Batch objective value.
pub fn loss(spec: &ModelSpec, params: &ParameterVector, batch: &Batch, objective: Objective) -> Result<f64> {
    Ok(loss_and_gradient(spec, params, batch, objective, false)?.0)
}

/// Analytic gradient of the batch objective with respect to the flat vector.
///
/// The RMSE gradient is `−Jᵀ r / (√m ‖r‖)`; at an exactly zero residual the
/// zero vector is returned (a valid subgradient).
pub fn gradient(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &Batch,
    objective: Objective,
) -> Result<Vec<f64>> {
    Ok(loss_and_gradient(spec, params, batch, objective, true)?.1)
}

fn loss_and_gradient(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &Batch,
    objective: Objective,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    check_batch(spec, params, batch, objective)?;
    let layers = spec.layers();
    let packed = spec.unpack(params.as_slice())?;
    let m = batch.len();
    let traces: Vec<Trace> = (0..m)
        .map(|i| forward(&layers, &packed, batch.row(i).0))
        .collect();

    let mut grad = vec![0.0; if want_grad { params.len() } else { 0 }];
    let value = match objective {
        Objective::Rmse => {
            let residuals: Vec<Vec<f64>> = traces
                .iter()
                .enumerate()
                .map(|(i, t)| batch.row(i).1.iter().zip(&t.output).map(|(y, f)| y - f).collect())
                .collect();
            let norm = residuals.iter().flatten().map(|r| r * r).sum::<f64>().sqrt();
            let scale = (m as f64).sqrt();
            if want_grad && norm > 0.0 {
                let factor = -1.0 / (scale * norm);
                for (trace, r) in traces.iter().zip(residuals) {
                    let og = r.into_iter().map(|v| v * factor).collect();
                    backward(&layers, &packed, trace, og, &mut grad);
                }
            }
            norm / scale
        }
        Objective::CrossEntropy => {
            let mut total = 0.0;
            for (i, trace) in traces.iter().enumerate() {
                let class = batch.row(i).1[0] as usize;
                let (lse, probs) = log_softmax_parts(&trace.output);
                total += lse - trace.output[class];
                if want_grad {
                    let og = probs
                        .into_iter()
                        .enumerate()
                        .map(|(c, p)| (p - if c == class { 1.0 } else { 0.0 }) / m as f64)
                        .collect();
                    backward(&layers, &packed, trace, og, &mut grad);
                }
            }
            total / m as f64
        }
    };
    Ok((value, grad))
}

#[cfg(test)]
mod tests;
