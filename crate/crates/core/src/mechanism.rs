//! The Euclidean Laplace mechanism in `R^n`.
//!
//! Density `K·exp(−ε‖x − x₀‖₂)` with
//! `K = εⁿ Γ(n/2) / (2 π^{n/2} Γ(n))`. Releasing `x₀ + ρ` with `ρ` drawn from
//! the zero-centered law is `ε·d₂`-private: the log-density ratio of two centers
//! at any output is bounded by `ε‖x₁ − x₂‖₂`.
//!
//! Sampling is two-stage. The radius `‖ρ‖` follows `Gamma(shape n, scale 1/ε)`
//! and is drawn as a sum of `n` unit exponentials divided by `ε`; the direction
//! is a normalized vector of independent standard normals, which is uniform on
//! the unit sphere.
//!
//! All densities are evaluated in log space; `εⁿ` and `Γ(n)` overflow for
//! moderately large `n`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::models::ParameterVector;

/// Privacy parameter `ε` together with the dimension `n` of the released vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScale {
    epsilon: f64,
    dimension: usize,
}

impl NoiseScale {
    pub fn new(epsilon: f64, dimension: usize) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if dimension == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(NoiseScale { epsilon, dimension })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `E‖ρ‖ = n/ε`.
    pub fn mean_radius(&self) -> f64 {
        self.dimension as f64 / self.epsilon
    }

    /// `Var‖ρ‖ = n/ε²`.
    pub fn radius_variance(&self) -> f64 {
        self.dimension as f64 / (self.epsilon * self.epsilon)
    }

    /// Per-coordinate variance `(n + 1)/ε²`.
    pub fn component_variance(&self) -> f64 {
        (self.dimension as f64 + 1.0) / (self.epsilon * self.epsilon)
    }
}

/// A draw `ρ` from the zero-centered mechanism, with its norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector {
    components: Vec<f64>,
    radius: f64,
}

impl NoiseVector {
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }
}

/// `ln K`.
pub fn log_normalization_constant(scale: &NoiseScale) -> f64 {
    let n = scale.dimension as f64;
    n * scale.epsilon.ln() + ln_gamma(n / 2.0) - 2f64.ln() - (n / 2.0) * PI.ln() - ln_gamma(n)
}

/// `K = εⁿ Γ(n/2) / (2 π^{n/2} Γ(n))`.
pub fn normalization_constant(scale: &NoiseScale) -> f64 {
    log_normalization_constant(scale).exp()
}

/// `ln K − ε‖point − center‖₂`.
pub fn log_density(point: &[f64], center: &[f64], scale: &NoiseScale) -> Result<f64> {
    check_dim(scale.dimension, point.len())?;
    check_dim(scale.dimension, center.len())?;
    let dist = point
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(log_normalization_constant(scale) - scale.epsilon * dist)
}

pub fn density(point: &[f64], center: &[f64], scale: &NoiseScale) -> Result<f64> {
    log_density(point, center, scale).map(f64::exp)
}

/// One draw from `Gamma(n, 1/ε)` as `Σ Exp(1) / ε`.
pub fn sample_radius<R: Rng + ?Sized>(scale: &NoiseScale, rng: &mut R) -> f64 {
    let total: f64 = (0..scale.dimension)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e
        })
        .sum();
    total / scale.epsilon
}

/// A direction uniform on the unit sphere `S^{n−1}`.
pub fn sample_direction<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Result<Vec<f64>> {
    if dimension == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    loop {
        let v: Vec<f64> = (0..dimension)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm >= 1e-300 {
            return Ok(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

/// One draw `ρ` from the mechanism centered at the origin.
pub fn sample_noise<R: Rng + ?Sized>(scale: &NoiseScale, rng: &mut R) -> NoiseVector {
    let radius = sample_radius(scale, rng);
    let direction = sample_direction(scale.dimension, rng).expect("dimension checked at construction");
    NoiseVector {
        components: direction.into_iter().map(|u| u * radius).collect(),
        radius,
    }
}

/// `vector + ρ`.
pub fn sanitize<R: Rng + ?Sized>(
    vector: &ParameterVector,
    scale: &NoiseScale,
    rng: &mut R,
) -> Result<ParameterVector> {
    check_dim(scale.dimension, vector.len())?;
    let noise = sample_noise(scale, rng);
    vector.offset_by(noise.components())
}

/// One row of an empirical-versus-theoretical moment comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub statistic: &'static str,
    pub empirical: f64,
    pub theoretical: f64,
}

impl MomentCheck {
    pub fn abs_error(&self) -> f64 {
        (self.empirical - self.theoretical).abs()
    }

    pub fn rel_error(&self) -> f64 {
        self.abs_error() / self.theoretical.abs()
    }
}

/// Draws `samples` noise vectors and compares mean radius, radius variance and
/// pooled per-component variance against their closed forms.
pub fn moment_report<R: Rng + ?Sized>(scale: &NoiseScale, samples: usize, rng: &mut R) -> Result<Vec<MomentCheck>> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let n = scale.dimension;
    let mut radius_sum = 0.0;
    let mut radius_sq = 0.0;
    let mut comp_sum = vec![0.0; n];
    let mut comp_sq = vec![0.0; n];
    for _ in 0..samples {
        let v = sample_noise(scale, rng);
        radius_sum += v.radius;
        radius_sq += v.radius * v.radius;
        for (i, x) in v.components.iter().enumerate() {
            comp_sum[i] += x;
            comp_sq[i] += x * x;
        }
    }
    let m = samples as f64;
    let unbiased = |sum: f64, sq: f64| (sq - sum * sum / m) / (m - 1.0);
    let mean_radius = radius_sum / m;
    let radius_var = unbiased(radius_sum, radius_sq);
    let comp_var = comp_sum
        .iter()
        .zip(&comp_sq)
        .map(|(&s, &q)| unbiased(s, q))
        .sum::<f64>()
        / n as f64;
    Ok(vec![
        MomentCheck {
            statistic: "mean_radius",
            empirical: mean_radius,
            theoretical: scale.mean_radius(),
        },
        MomentCheck {
            statistic: "radius_variance",
            empirical: radius_var,
            theoretical: scale.radius_variance(),
        },
        MomentCheck {
            statistic: "component_variance",
            empirical: comp_var,
            theoretical: scale.component_variance(),
        },
    ])
}
