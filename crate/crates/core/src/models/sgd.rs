use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gradient, Batch, ModelSpec, Objective, ParameterVector};
use crate::error::{Error, Result};

/// Hyper-parameters of a client's local optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTraining {
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub objective: Objective,
}

/// Runs `epochs` passes of mini-batch SGD over `dataset` starting at `params`.
///
/// Each epoch reshuffles the sample order with `rng` and walks it in chunks of
/// `batch_size`; the final chunk may be short.
pub fn local_update<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ParameterVector,
    dataset: &Batch,
    training: &LocalTraining,
    rng: &mut R,
) -> Result<ParameterVector> {
    if training.batch_size < 1 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut theta = params.as_slice().to_vec();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..training.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(training.batch_size) {
            let batch = dataset.select(chunk);
            let current = ParameterVector::new(theta)?;
            let g = gradient(spec, &current, &batch, training.objective)?;
            theta = current.into_inner();
            theta
                .iter_mut()
                .zip(g)
                .for_each(|(t, g)| *t -= training.step_size * g);
        }
    }
    ParameterVector::new(theta).map_err(|_| Error::invalid("local update diverged to non-finite parameters"))
}
