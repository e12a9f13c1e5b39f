//! Lloyd's k-means seeded at the server's current hypotheses.
//!
//! Ties in the nearest-centroid step go to the lowest cluster index. A cluster
//! that receives no points keeps its incoming centroid, so an unused hypothesis
//! survives the round unchanged.

use crate::accounting::ClientId;
use crate::error::{check_dim, Error, Result};
use crate::models::params::squared_distance;
use crate::models::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (L2).
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iters: 100,
            tol: 1e-9,
        }
    }
}

/// Result of clustering one round's releases.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster of each input point, in input order.
    pub labels: Vec<usize>,
    /// Client ids per cluster, in input order; possibly empty.
    pub members: Vec<Vec<ClientId>>,
    pub centroids: Vec<ParameterVector>,
    /// Lloyd iterations performed.
    pub iterations: usize,
    /// Within-cluster sum of squares after each update step.
    pub inertia: Vec<f64>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Index of the closest centroid; the first one wins ties.
pub fn nearest(point: &[f64], centroids: &[ParameterVector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c.as_slice());
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Clusters `points` starting from `init` as centroids.
pub fn kmeans_from_hypotheses(
    points: &[(ClientId, ParameterVector)],
    init: &[ParameterVector],
    options: KMeansOptions,
) -> Result<ClusterAssignment> {
    let k = init.len();
    if k == 0 {
        return Err(Error::invalid("k-means needs at least one centroid"));
    }
    let n = init[0].len();
    for c in init {
        check_dim(n, c.len())?;
    }
    for (_, p) in points {
        check_dim(n, p.len())?;
    }

    let mut centroids = init.to_vec();
    let mut labels: Vec<usize> = Vec::new();
    let mut inertia = Vec::new();
    let mut iterations = 0;
    while iterations < options.max_iters.max(1) {
        iterations += 1;
        let next: Vec<usize> = points.iter().map(|(_, p)| nearest(p.as_slice(), &centroids)).collect();
        let unchanged = iterations > 1 && next == labels;
        labels = next;
        if unchanged {
            break;
        }

        let mut moved: f64 = 0.0;
        let mut updated = Vec::with_capacity(k);
        for (j, old) in centroids.iter().enumerate() {
            let mean = ParameterVector::mean(
                points
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == j)
                    .map(|((_, p), _)| p),
            )?;
            let c = mean.unwrap_or_else(|| old.clone());
            moved = moved.max(c.distance(old)?);
            updated.push(c);
        }
        centroids = updated;
        inertia.push(
            points
                .iter()
                .zip(&labels)
                .map(|((_, p), &l)| squared_distance(p.as_slice(), centroids[l].as_slice()))
                .sum(),
        );
        if moved < options.tol {
            break;
        }
    }

    let mut members = vec![Vec::new(); k];
    for ((id, _), &l) in points.iter().zip(&labels) {
        members[l].push(*id);
    }
    Ok(ClusterAssignment {
        labels,
        members,
        centroids,
        iterations,
        inertia,
    })
}
