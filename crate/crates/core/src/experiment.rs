//! Experiment configs, parameter sweeps, and the files they produce.
//!
//! A sweep runs every combination of noise multiplier, hypothesis count and
//! seed, each into its own directory:
//!
//! ```text
//! <out>/<name>/<nu>_<k>_<seed>/metrics.csv
//!                              ledger.csv
//!                              hypotheses.txt         (best validation round)
//!                              final_hypotheses.txt
//!                              config.toml            (effective config of this cell)
//! <out>/<name>/summary.csv
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, ClientPopulation, Scaling, SyntheticConfig, TabularOptions};
use crate::error::{Error, Result};
use crate::federation::{self, ExperimentOutcome, FederationConfig};
use crate::mechanism::{self, MomentCheck, NoiseScale};
use crate::models::ModelSpec;
use crate::rng::{self, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output sub-directory name.
    pub name: String,
    pub model: ModelSpec,
    pub federation: FederationConfig,
    pub data: DataConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic(SyntheticData),
    Tabular(TabularData),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "default_clients")]
    pub validation_clients: usize,
    #[serde(default = "default_samples")]
    pub samples_per_client: usize,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<Vec<f64>>,
    /// Seed of the population; independent of the sweep seeds.
    #[serde(default)]
    pub seed: u64,
}

fn default_clients() -> usize {
    100
}

fn default_samples() -> usize {
    10
}

fn default_thetas() -> Vec<Vec<f64>> {
    SyntheticConfig::default().thetas
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularData {
    /// Resolved against the config file's directory at load time.
    pub path: PathBuf,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub service_allowlist: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_validation_fraction() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub noise_multipliers: Vec<f64>,
    pub hypotheses: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    /// Parses and validates a TOML config; relative data paths are resolved
    /// against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().message().to_string())
        })?;
        if let DataConfig::Tabular(t) = &mut config.data {
            let resolved = base_dir.join(&t.path);
            t.path = resolved.canonicalize().map_err(|e| {
                Error::config("data.path", format!("{}: {e}", resolved.display()))
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty plain directory name"));
        }
        self.model
            .validate()
            .map_err(|e| Error::config("model", e.to_string()))?;
        let s = &self.sweep;
        if s.noise_multipliers.is_empty() {
            return Err(Error::config("sweep.noise_multipliers", "must not be empty"));
        }
        if s.hypotheses.is_empty() {
            return Err(Error::config("sweep.hypotheses", "must not be empty"));
        }
        if s.seeds.is_empty() {
            return Err(Error::config("sweep.seeds", "must not be empty"));
        }
        for &nu in &s.noise_multipliers {
            for &k in &s.hypotheses {
                self.cell(nu, k, 0).validate()?;
            }
        }
        let input = match &self.data {
            DataConfig::Synthetic(d) => {
                if d.clients < self.federation.users_per_round {
                    return Err(Error::config("data.clients", "fewer clients than users_per_round"));
                }
                if d.validation_clients == 0 {
                    return Err(Error::config("data.validation_clients", "must be positive"));
                }
                d.thetas.first().map_or(0, Vec::len)
            }
            DataConfig::Tabular(t) => {
                if !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0) {
                    return Err(Error::config("data.validation_fraction", "must lie in (0, 1)"));
                }
                3
            }
        };
        if input != self.model.input_dim() {
            return Err(Error::config(
                "model.input_dim",
                format!("data has {input} features, model expects {}", self.model.input_dim()),
            ));
        }
        Ok(())
    }

    /// Federation settings of one sweep cell.
    pub fn cell(&self, noise_multiplier: f64, hypotheses: usize, seed: u64) -> FederationConfig {
        FederationConfig {
            hypotheses,
            noise_multiplier,
            master_seed: seed,
            ..self.federation.clone()
        }
    }

    /// This config narrowed to a single cell.
    pub fn single_cell(&self, noise_multiplier: f64, hypotheses: usize, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            sweep: SweepConfig {
                noise_multipliers: vec![noise_multiplier],
                hypotheses: vec![hypotheses],
                seeds: vec![seed],
            },
            ..self.clone()
        }
    }

    /// Builds the `(train, validation)` populations.
    pub fn populations(&self) -> Result<(ClientPopulation, ClientPopulation)> {
        match &self.data {
            DataConfig::Synthetic(d) => {
                let train_cfg = SyntheticConfig {
                    clients: d.clients,
                    samples_per_client: d.samples_per_client,
                    thetas: d.thetas.clone(),
                    first_id: 0,
                };
                let val_cfg = SyntheticConfig {
                    clients: d.validation_clients,
                    first_id: d.clients,
                    ..train_cfg.clone()
                };
                let train = data::generate_synthetic(&train_cfg, &mut rng::stream(d.seed, Role::Population, 0, 0))?;
                let val = data::generate_synthetic(&val_cfg, &mut rng::stream(d.seed, Role::Population, 1, 0))?;
                Ok((train, val))
            }
            DataConfig::Tabular(t) => {
                let options = TabularOptions {
                    scaling: t.scaling,
                    service_allowlist: t.service_allowlist.clone(),
                };
                let all = data::ingest_csv(&t.path, &options)?;
                data::split_population(&all, t.validation_fraction, &mut rng::stream(t.seed, Role::Split, 0, 0))
            }
        }
    }
}

/// Directory name of a sweep cell.
pub fn cell_dir_name(noise_multiplier: f64, hypotheses: usize, seed: u64) -> String {
    format!("{noise_multiplier}_{hypotheses}_{seed}")
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub noise_multiplier: f64,
    pub hypotheses: usize,
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: ExperimentOutcome,
}

impl CellResult {
    /// Full validation-set loss of the returned (best-round) hypotheses.
    pub fn final_validation_loss(&self) -> f64 {
        self.outcome.final_validation_loss.unwrap_or(f64::NAN)
    }

    pub fn final_train_loss(&self) -> f64 {
        self.outcome.history.last().map_or(f64::NAN, |m| m.mean_train_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub noise_multiplier: f64,
    pub hypotheses: usize,
    pub runs: usize,
    pub mean_validation_loss: f64,
    pub std_validation_loss: f64,
    pub mean_train_loss: f64,
    pub std_train_loss: f64,
    /// Median composed leakage over every client of every seed.
    pub median_budget: f64,
    pub max_budget: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub root: PathBuf,
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_cell(config: &ExperimentConfig, cell: &CellResult) -> Result<()> {
    fs::create_dir_all(&cell.dir)?;
    let k = cell.hypotheses;
    let mut w = create(&cell.dir.join("metrics.csv"))?;
    federation::write_metrics_csv(&cell.outcome.history, k, &mut w)?;
    w.flush()?;
    let mut w = create(&cell.dir.join("ledger.csv"))?;
    cell.outcome.ledger.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&cell.dir.join("hypotheses.txt"))?;
    cell.outcome.best.write_text(&mut w)?;
    w.flush()?;
    let mut w = create(&cell.dir.join("final_hypotheses.txt"))?;
    cell.outcome.final_hypotheses.write_text(&mut w)?;
    w.flush()?;
    let echo = config.single_cell(cell.noise_multiplier, cell.hypotheses, cell.seed);
    fs::write(cell.dir.join("config.toml"), echo.to_toml_string())?;
    Ok(())
}

/// Runs one cell against prepared populations without touching the disk.
pub fn run_cell(
    config: &ExperimentConfig,
    train: &ClientPopulation,
    validation: &ClientPopulation,
    noise_multiplier: f64,
    hypotheses: usize,
    seed: u64,
) -> Result<ExperimentOutcome> {
    let fed = config.cell(noise_multiplier, hypotheses, seed);
    federation::run_experiment(train.clients(), validation.clients(), &config.model, &fed)
}

/// Runs the full sweep, writing every artifact under `out/<name>/`.
pub fn run_sweep(config: &ExperimentConfig, out: &Path) -> Result<SweepReport> {
    config.validate()?;
    let (train, validation) = config.populations()?;
    let root = out.join(&config.name);
    fs::create_dir_all(&root)?;

    let mut grid = Vec::new();
    for &nu in &config.sweep.noise_multipliers {
        for &k in &config.sweep.hypotheses {
            for &seed in &config.sweep.seeds {
                grid.push((nu, k, seed));
            }
        }
    }

    let cells: Vec<CellResult> = grid
        .par_iter()
        .map(|&(nu, k, seed)| {
            let name = cell_dir_name(nu, k, seed);
            let wrap = |e: Error| Error::Run {
                run: name.clone(),
                source: Box::new(e),
            };
            let outcome = run_cell(config, &train, &validation, nu, k, seed).map_err(wrap)?;
            let cell = CellResult {
                noise_multiplier: nu,
                hypotheses: k,
                seed,
                dir: root.join(&name),
                outcome,
            };
            write_cell(config, &cell).map_err(wrap)?;
            Ok(cell)
        })
        .collect::<Result<_>>()?;

    let summary = summarize(config, &cells);
    let mut w = create(&root.join("summary.csv"))?;
    write_summary_csv(&summary, &mut w)?;
    w.flush()?;
    Ok(SweepReport { root, cells, summary })
}

/// One row per `(ν, k)` in config order.
pub fn summarize(config: &ExperimentConfig, cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &nu in &config.sweep.noise_multipliers {
        for &k in &config.sweep.hypotheses {
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.noise_multiplier.to_bits() == nu.to_bits() && c.hypotheses == k)
                .collect();
            if group.is_empty() {
                continue;
            }
            let val: Vec<f64> = group.iter().map(|c| c.final_validation_loss()).collect();
            let train: Vec<f64> = group.iter().map(|c| c.final_train_loss()).collect();
            let budgets: Vec<f64> = group
                .iter()
                .flat_map(|c| {
                    let ledger = &c.outcome.ledger;
                    ledger.clients().map(move |id| ledger.composed(id))
                })
                .collect();
            let stats = crate::accounting::BudgetStats::from_values(budgets);
            let (mv, sv) = mean_std(&val);
            let (mt, st) = mean_std(&train);
            rows.push(SummaryRow {
                noise_multiplier: nu,
                hypotheses: k,
                runs: group.len(),
                mean_validation_loss: mv,
                std_validation_loss: sv,
                mean_train_loss: mt,
                std_train_loss: st,
                median_budget: stats.median,
                max_budget: stats.max,
            });
        }
    }
    rows
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "noise_multiplier",
        "hypotheses",
        "runs",
        "mean_validation_loss",
        "std_validation_loss",
        "mean_train_loss",
        "std_train_loss",
        "median_budget",
        "max_budget",
    ])?;
    for r in rows {
        w.write_record([
            r.noise_multiplier.to_string(),
            r.hypotheses.to_string(),
            r.runs.to_string(),
            r.mean_validation_loss.to_string(),
            r.std_validation_loss.to_string(),
            r.mean_train_loss.to_string(),
            r.std_train_loss.to_string(),
            r.median_budget.to_string(),
            r.max_budget.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical moments of the mechanism at `(dimension, epsilon)`.
pub fn verify_mechanism(dimension: usize, epsilon: f64, samples: usize, seed: u64) -> Result<Vec<MomentCheck>> {
    let scale = NoiseScale::new(epsilon, dimension)?;
    mechanism::moment_report(&scale, samples, &mut rng::stream(seed, Role::Diagnostics, 0, 0))
}

pub fn write_moment_csv<W: Write>(checks: &[MomentCheck], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["statistic", "empirical", "theoretical", "abs_error"])?;
    for c in checks {
        w.write_record([
            c.statistic.to_string(),
            c.empirical.to_string(),
            c.theoretical.to_string(),
            c.abs_error().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text table of a moment report.
pub fn format_moment_table(checks: &[MomentCheck]) -> String {
    let mut s = format!("{:<20} {:>14} {:>14} {:>12} {:>9}\n", "statistic", "empirical", "theoretical", "abs_error", "rel_err");
    for c in checks {
        s.push_str(&format!(
            "{:<20} {:>14.6} {:>14.6} {:>12.6} {:>8.3}%\n",
            c.statistic,
            c.empirical,
            c.theoretical,
            c.abs_error(),
            100.0 * c.rel_error()
        ));
    }
    s
}

/// Writes a hospital-like fixture to `path`; returns the providers' clusters.
pub fn make_fixture(config: &data::FixtureConfig, seed: u64, path: &Path) -> Result<Vec<usize>> {
    let mut w = create(path)?;
    let labels = data::write_fixture(config, &mut rng::stream(seed, Role::Fixture, 0, 0), &mut w)?;
    w.flush()?;
    Ok(labels)
}
