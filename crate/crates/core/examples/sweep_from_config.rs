//! Runs every cell of an experiment config and writes the per-run metrics,
//! ledgers and hypotheses plus the summary table.
//!
//! ```text
//! cargo run --release --example sweep_from_config -- configs/synthetic.toml target/sweeps
//! ```

use std::path::PathBuf;

use dpfl::experiment::{run_sweep, ExperimentConfig};

fn main() -> dpfl::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic.toml"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dpfl-sweeps"));

    let config = ExperimentConfig::load(&config)?;
    let report = run_sweep(&config, &out)?;
    println!("{} cells under {}", report.cells.len(), report.root.display());
    println!("{:>6} {:>3} {:>12} {:>12} {:>10}", "nu", "k", "val mean", "val std", "max leak");
    for row in &report.summary {
        println!(
            "{:>6} {:>3} {:>12.4} {:>12.4} {:>10.2}",
            row.noise_multiplier, row.hypotheses, row.mean_validation_loss, row.std_validation_loss, row.max_budget
        );
    }
    Ok(())
}
