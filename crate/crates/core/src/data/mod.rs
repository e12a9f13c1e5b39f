//! Client populations: synthetic generators, hospital-style CSV ingestion,
//! train/validation splits, and a fixture writer for desk-scale runs.

mod fixture;
mod synthetic;
mod tabular;

pub use fixture::{write_fixture, FixtureConfig};
pub use synthetic::{generate_synthetic, synthetic_target, SyntheticConfig};
pub use tabular::{ingest_csv, population_from_rows, read_tabular, Scaling, TabularOptions, TabularRow};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::accounting::ClientId;
use crate::error::{Error, Result};
use crate::models::Batch;

/// A client's local supervised samples.
pub type ClientDataset = Batch;

/// What the federation layer may see of a client.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientData {
    pub id: ClientId,
    pub data: ClientDataset,
}

/// A set of clients plus, for generated data, each client's true cluster.
///
/// The labels are for evaluation only; they are not serialized and the
/// federation API only accepts [`ClientData`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientPopulation {
    clients: Vec<ClientData>,
    #[serde(skip)]
    labels: Vec<Option<usize>>,
    /// External key of each client (provider id for ingested data).
    keys: Vec<String>,
}

impl ClientPopulation {
    pub fn new(clients: Vec<ClientData>, labels: Vec<Option<usize>>, keys: Vec<String>) -> Result<Self> {
        if labels.len() != clients.len() || keys.len() != clients.len() {
            return Err(Error::invalid("labels and keys must align with clients"));
        }
        if let Some(c) = clients.iter().find(|c| c.data.is_empty()) {
            return Err(Error::invalid(format!("client {} has no samples", c.id)));
        }
        Ok(ClientPopulation { clients, labels, keys })
    }

    pub fn clients(&self) -> &[ClientData] {
        &self.clients
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    /// Generating cluster of the client at `index`; `None` for ingested data.
    pub fn true_cluster(&self, index: usize) -> Option<usize> {
        self.labels.get(index).copied().flatten()
    }

    /// Pools the samples of every client whose true cluster is `cluster`.
    pub fn pooled_by_cluster(&self, cluster: usize) -> Option<Batch> {
        let members: Vec<&ClientData> = self
            .clients
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == Some(cluster))
            .map(|(c, _)| c)
            .collect();
        let first = members.first()?;
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for c in &members {
            features.extend_from_slice(c.data.features());
            targets.extend_from_slice(c.data.targets());
        }
        Batch::new(features, first.data.feature_dim(), targets, first.data.target_dim()).ok()
    }

    fn subset(&self, indices: &[usize]) -> ClientPopulation {
        ClientPopulation {
            clients: indices.iter().map(|&i| self.clients[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            keys: indices.iter().map(|&i| self.keys[i].clone()).collect(),
        }
    }
}

/// Randomly splits clients into `(train, validation)`.
///
/// The validation side gets `⌈fraction · N⌉` clients; both sides keep the
/// population's original order.
pub fn split_population<R: Rng + ?Sized>(
    population: &ClientPopulation,
    validation_fraction: f64,
    rng: &mut R,
) -> Result<(ClientPopulation, ClientPopulation)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::invalid("validation fraction must lie strictly between 0 and 1"));
    }
    let n = population.len();
    // shave rounding noise so that e.g. 0.3 × 100 stays 30
    let n_val = (validation_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::invalid(format!(
            "validation fraction {validation_fraction} leaves an empty side for {n} clients"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut val: Vec<usize> = order[..n_val].to_vec();
    let mut train: Vec<usize> = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((population.subset(&train), population.subset(&val)))
}
