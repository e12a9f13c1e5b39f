//! Generates a hospital-like charge file, ingests it with constant scaling,
//! splits providers 70/30 and trains a few hypotheses with private releases.

use dpfl::data::{ingest_csv, split_population, FixtureConfig, TabularOptions};
use dpfl::experiment::make_fixture;
use dpfl::federation::{run_experiment, FederationConfig};
use dpfl::models::{ModelSpec, Objective};
use dpfl::rng::{stream, Role};

fn main() -> dpfl::Result<()> {
    let dir = std::env::temp_dir().join("dpfl-hospital-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("charges.csv");
    let fixture = FixtureConfig {
        providers: 200,
        services: 4,
        clusters: 20,
        offsets: None,
    };
    make_fixture(&fixture, 3, &path)?;
    println!("fixture at {}", path.display());

    let population = ingest_csv(&path, &TabularOptions::default())?;
    let (train, validation) = split_population(&population, 0.3, &mut stream(0, Role::Split, 0, 0))?;
    println!("{} providers: {} train, {} validation", population.len(), train.len(), validation.len());

    let spec = ModelSpec::hospital_default();
    for nu in [0.0, 3.0] {
        let config = FederationConfig {
            hypotheses: 3,
            rounds: 300,
            users_per_round: 30,
            batch_size: 4,
            objective: Objective::Rmse,
            noise_multiplier: nu,
            validation_every: 1,
            validation_patience: 30,
            master_seed: 1,
            ..FederationConfig::synthetic_default()
        };
        let out = run_experiment(train.clients(), validation.clients(), &spec, &config)?;
        let summary = out.ledger.summary();
        println!(
            "nu = {nu}: {} rounds, validation rmse {:.3}, median leakage {}, max {}",
            out.history.len(),
            out.final_validation_loss.unwrap_or(f64::NAN),
            summary.overall.median,
            summary.overall.max
        );
    }
    Ok(())
}
