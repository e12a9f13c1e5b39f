//! Hospital-like CSV generator for desk-scale runs.
//!
//! Generative model. Providers are split evenly (then shuffled) into `C`
//! regional clusters. Cluster `c` has a center at longitude
//! `-120 + 45 (c + 1/2) / C` and a latitude spread over 32..44 degrees;
//! providers scatter around it with a 1.5 degree normal jitter. Every provider
//! offers every service `s = 1..=V`. In thousands of dollars the payment is
//!
//! `offset_c + slope_c · (s − (V + 1)/2) / max(1, (V − 1)/2) + noise`
//!
//! with `offset_c` spread evenly over `[1, 10]` (or taken from the config),
//! `slope_c = 0.2 + 0.15 · (c mod 3)`, and noise `N(0, (0.03 · offset_c)²)`;
//! the result is clamped at zero and written in dollars. Because the service
//! term is centered, the mean payment of cluster `c` is `offset_c` thousand.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tabular::COLUMNS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub providers: usize,
    pub services: usize,
    pub clusters: usize,
    /// Per-cluster cost offsets in thousands; defaults to an even spread over
    /// `[1, 10]`.
    #[serde(default)]
    pub offsets: Option<Vec<f64>>,
}

impl FixtureConfig {
    pub fn offsets(&self) -> Vec<f64> {
        match &self.offsets {
            Some(o) => o.clone(),
            None if self.clusters <= 1 => vec![1.0; self.clusters],
            None => (0..self.clusters)
                .map(|c| 1.0 + 9.0 * c as f64 / (self.clusters - 1) as f64)
                .collect(),
        }
    }
}

/// Writes the fixture and returns the true cluster of every provider.
pub fn write_fixture<W: Write, R: Rng + ?Sized>(config: &FixtureConfig, rng: &mut R, writer: W) -> Result<Vec<usize>> {
    if config.providers == 0 || config.services == 0 || config.clusters == 0 {
        return Err(Error::invalid("fixture needs providers, services and clusters"));
    }
    let offsets = config.offsets();
    if offsets.len() != config.clusters || offsets.iter().any(|o| !o.is_finite()) {
        return Err(Error::invalid("need one finite offset per cluster"));
    }

    let mut labels: Vec<usize> = (0..config.providers).map(|p| p % config.clusters).collect();
    labels.shuffle(rng);

    let jitter = Normal::new(0.0, 1.5).expect("valid sigma");
    let c_count = config.clusters as f64;
    let v = config.services as f64;
    let center_s = (v + 1.0) / 2.0;
    let half_span = ((v - 1.0) / 2.0).max(1.0);

    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for (p, &c) in labels.iter().enumerate() {
        let lon0 = -120.0 + 45.0 * (c as f64 + 0.5) / c_count;
        let lat0 = 32.0 + 12.0 * (0.618_033_988_75 * c as f64 + 0.25).fract();
        let lon = lon0 + jitter.sample(rng);
        let lat = lat0 + jitter.sample(rng);
        let offset = offsets[c];
        let slope = 0.2 + 0.15 * (c % 3) as f64;
        let noise = Normal::new(0.0, 0.03 * offset.abs()).expect("valid sigma");
        for s in 1..=config.services {
            let thousands = offset + slope * (s as f64 - center_s) / half_span + noise.sample(rng);
            let payment = (1000.0 * thousands).max(0.0);
            w.write_record([
                format!("P{p:05}"),
                s.to_string(),
                format!("{lon:.4}"),
                format!("{lat:.4}"),
                format!("{payment:.2}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn render(config: &FixtureConfig, seed: u64) -> (String, Vec<usize>) {
        let mut buf = Vec::new();
        let labels = write_fixture(config, &mut ChaCha8Rng::seed_from_u64(seed), &mut buf).unwrap();
        (String::from_utf8(buf).unwrap(), labels)
    }

    #[test]
    fn row_count_is_providers_times_services() {
        let cfg = FixtureConfig {
            providers: 5,
            services: 4,
            clusters: 2,
            offsets: None,
        };
        let (text, labels) = render(&cfg, 1);
        assert_eq!(text.lines().count(), 21);
        assert_eq!(labels.len(), 5);
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = FixtureConfig {
            providers: 30,
            services: 4,
            clusters: 3,
            offsets: None,
        };
        assert_eq!(render(&cfg, 9), render(&cfg, 9));
        assert_ne!(render(&cfg, 9).0, render(&cfg, 10).0);
    }

    #[test]
    fn default_offsets_span_one_to_ten() {
        let cfg = FixtureConfig {
            providers: 1,
            services: 1,
            clusters: 4,
            offsets: None,
        };
        assert_eq!(cfg.offsets(), vec![1.0, 4.0, 7.0, 10.0]);
    }
}
