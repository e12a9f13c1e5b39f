use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dpfl::data::FixtureConfig;
use dpfl::experiment::{self, ExperimentConfig};
use dpfl::Error;

/// Personalized federated learning with Euclidean Laplace sanitization.
#[derive(Debug, Parser)]
#[command(name = "dpfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (noise multiplier, hypotheses, seed) cell of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare empirical noise moments with their closed forms.
    VerifyMechanism {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for mechanism_report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic hospital-charge CSV.
    MakeFixture {
        #[arg(long)]
        providers: usize,
        #[arg(long)]
        services: usize,
        #[arg(long, default_value_t = 2)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let report = experiment::run_sweep(&config, &out)?;
            println!("{} runs written under {}", report.cells.len(), report.root.display());
            for row in &report.summary {
                println!(
                    "nu={:<6} k={:<3} validation={:.4} ± {:.4}  max_budget={}",
                    row.noise_multiplier, row.hypotheses, row.mean_validation_loss, row.std_validation_loss, row.max_budget
                );
            }
        }
        Command::VerifyMechanism {
            dim,
            epsilon,
            samples,
            seed,
            out,
        } => {
            let checks = experiment::verify_mechanism(dim, epsilon, samples, seed)
                .map_err(|e| Error::Config {
                    field: "verify-mechanism".into(),
                    message: e.to_string(),
                })?;
            print!("{}", experiment::format_moment_table(&checks));
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let path = dir.join("mechanism_report.csv");
                experiment::write_moment_csv(&checks, fs::File::create(&path)?)?;
                println!("wrote {}", path.display());
            }
        }
        Command::MakeFixture {
            providers,
            services,
            clusters,
            seed,
            out,
        } => {
            let cfg = FixtureConfig {
                providers,
                services,
                clusters,
                offsets: None,
            };
            if providers == 0 || services == 0 || clusters == 0 {
                return Err(Error::Config {
                    field: "make-fixture".into(),
                    message: "providers, services and clusters must be positive".into(),
                });
            }
            experiment::make_fixture(&cfg, seed, &out)?;
            println!("wrote {} rows to {}", providers * services, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
