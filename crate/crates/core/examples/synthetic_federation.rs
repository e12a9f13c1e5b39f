//! Two-cluster linear regression federation with private releases.
//!
//! Runs a handful of seeds and reports how far the best-round hypotheses land
//! from the per-cluster least-squares fit of the pooled population.
//!
//! ```text
//! cargo run --release --example synthetic_federation [seeds] [noise_multiplier]
//! ```

use dpfl::data::{generate_synthetic, SyntheticConfig};
use dpfl::federation::{run_experiment, FederationConfig};
use dpfl::models::{Batch, ModelSpec};
use dpfl::rng::{stream, Role};

fn least_squares_2d(batch: &Batch) -> [f64; 2] {
    let (mut a, mut b, mut c, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..batch.len() {
        let (x, y) = batch.row(i);
        a += x[0] * x[0];
        b += x[0] * x[1];
        c += x[1] * x[1];
        r0 += x[0] * y[0];
        r1 += x[1] * y[0];
    }
    let det = a * c - b * b;
    [(c * r0 - b * r1) / det, (a * r1 - b * r0) / det]
}

fn main() -> dpfl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let nu: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5.0);

    let spec = ModelSpec::Linear { input_dim: 2, output_dim: 1 };
    let train = generate_synthetic(&SyntheticConfig::default(), &mut stream(0, Role::Population, 0, 0))?;
    let validation = generate_synthetic(
        &SyntheticConfig { first_id: 100, ..SyntheticConfig::default() },
        &mut stream(0, Role::Population, 1, 0),
    )?;
    let targets: Vec<[f64; 2]> = (0..2)
        .map(|j| least_squares_2d(&train.pooled_by_cluster(j).expect("cluster is populated")))
        .collect();
    println!("least-squares targets: {targets:?}");

    for seed in 0..seeds {
        let config = FederationConfig {
            noise_multiplier: nu,
            master_seed: seed,
            ..FederationConfig::synthetic_default()
        };
        let out = run_experiment(train.clients(), validation.clients(), &spec, &config)?;
        let h: Vec<&[f64]> = out.best.hypotheses.iter().map(|p| p.as_slice()).collect();
        let dist = |p: &[f64], t: &[f64; 2]| ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt();
        let straight = dist(h[0], &targets[0]).max(dist(h[1], &targets[1]));
        let swapped = dist(h[0], &targets[1]).max(dist(h[1], &targets[0]));
        println!(
            "seed {seed}: rounds {:>3}, validation rmse {:.3}, worst distance to target {:.3}",
            out.history.len(),
            out.final_validation_loss.unwrap_or(f64::NAN),
            straight.min(swapped),
        );
    }
    Ok(())
}
