use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ClientData, ClientPopulation};
use crate::error::{Error, Result};
use crate::models::Batch;

/// Linear-regression population: `y = xᵀθ*_j + u` with `x ~ N(0, I)` and
/// `u ~ U[0, 1)`, clients split evenly across the generating `θ*_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "default_samples")]
    pub samples_per_client: usize,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<Vec<f64>>,
    /// Id of the first generated client.
    #[serde(default)]
    pub first_id: usize,
}

fn default_clients() -> usize {
    100
}

fn default_samples() -> usize {
    10
}

fn default_thetas() -> Vec<Vec<f64>> {
    vec![vec![5.0, 6.0], vec![4.0, -4.5]]
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            clients: default_clients(),
            samples_per_client: default_samples(),
            thetas: default_thetas(),
            first_id: 0,
        }
    }
}

/// `xᵀθ + u`.
pub fn synthetic_target(x: &[f64], theta: &[f64], u: f64) -> f64 {
    x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + u
}

pub fn generate_synthetic<R: Rng + ?Sized>(config: &SyntheticConfig, rng: &mut R) -> Result<ClientPopulation> {
    let k = config.thetas.len();
    if k == 0 || config.clients == 0 || config.samples_per_client == 0 {
        return Err(Error::invalid("synthetic population needs clients, samples and at least one theta"));
    }
    let dim = config.thetas[0].len();
    if dim == 0 || config.thetas.iter().any(|t| t.len() != dim) {
        return Err(Error::invalid("generating thetas must share a positive dimension"));
    }

    let mut labels: Vec<usize> = (0..config.clients).map(|i| i % k).collect();
    labels.shuffle(rng);

    let mut clients = Vec::with_capacity(config.clients);
    for (i, &label) in labels.iter().enumerate() {
        let theta = &config.thetas[label];
        let mut features = Vec::with_capacity(config.samples_per_client * dim);
        let mut targets = Vec::with_capacity(config.samples_per_client);
        for _ in 0..config.samples_per_client {
            let x: Vec<f64> = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z
                })
                .collect();
            let u: f64 = rng.random();
            targets.push(synthetic_target(&x, theta, u));
            features.extend(x);
        }
        clients.push(ClientData {
            id: config.first_id + i,
            data: Batch::new(features, dim, targets, 1)?,
        });
    }
    let keys = clients.iter().map(|c| c.id.to_string()).collect();
    ClientPopulation::new(clients, labels.into_iter().map(Some).collect(), keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_formula() {
        assert_eq!(synthetic_target(&[1.0, 0.0], &[5.0, 6.0], 0.0), 5.0);
    }

    #[test]
    fn residuals_lie_in_unit_interval() {
        let cfg = SyntheticConfig::default();
        let pop = generate_synthetic(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(pop.len(), 100);
        for (i, c) in pop.clients().iter().enumerate() {
            let theta = &cfg.thetas[pop.true_cluster(i).unwrap()];
            assert_eq!(c.data.len(), 10);
            for r in 0..c.data.len() {
                let (x, y) = c.data.row(r);
                let u = y[0] - synthetic_target(x, theta, 0.0);
                assert!((0.0..1.0 + 1e-12).contains(&u), "u = {u}");
            }
        }
    }

    #[test]
    fn clusters_are_balanced() {
        let pop = generate_synthetic(&SyntheticConfig::default(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let ones = (0..pop.len()).filter(|&i| pop.true_cluster(i) == Some(1)).count();
        assert_eq!(ones, 50);
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = SyntheticConfig {
            first_id: 500,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = generate_synthetic(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clients()[0].id, 500);
    }

    #[test]
    fn rejects_inconsistent_thetas() {
        let cfg = SyntheticConfig {
            thetas: vec![vec![1.0, 2.0], vec![1.0]],
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
