//! Hospital-charge style CSV input.
//!
//! Schema (header required, any column order):
//! `provider_id,service_id,longitude,latitude,avg_total_payment`.
//! Every provider becomes one client; its rows become samples with features
//! `(service_id, longitude, latitude)` and target `avg_total_payment`, each
//! divided by a fixed constant from the config. No statistic of the pooled
//! data is used for scaling.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClientData, ClientPopulation};
use crate::error::{Error, Result};
use crate::models::Batch;

pub const COLUMNS: [&str; 5] = ["provider_id", "service_id", "longitude", "latitude", "avg_total_payment"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularRow {
    pub provider_id: String,
    pub service_id: f64,
    pub longitude: f64,
    pub latitude: f64,
    pub avg_total_payment: f64,
}

/// Constant divisors applied at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub service_id: f64,
    pub longitude: f64,
    pub latitude: f64,
    pub payment: f64,
}

impl Scaling {
    pub const IDENTITY: Scaling = Scaling {
        service_id: 1.0,
        longitude: 1.0,
        latitude: 1.0,
        payment: 1.0,
    };

    fn validate(&self) -> Result<()> {
        let all = [self.service_id, self.longitude, self.latitude, self.payment];
        if all.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return Err(Error::invalid("scaling constants must be finite and nonzero"));
        }
        Ok(())
    }
}

impl Default for Scaling {
    fn default() -> Self {
        Scaling {
            service_id: 1.0,
            longitude: 100.0,
            latitude: 100.0,
            payment: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularOptions {
    #[serde(default)]
    pub scaling: Scaling,
    /// Keep only these services; `None` keeps all.
    #[serde(default)]
    pub service_allowlist: Option<Vec<f64>>,
}

fn parse_field(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: format!("`{name}` is not a number: {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: format!("`{name}` is not finite"),
        });
    }
    Ok(v)
}

/// Parses and validates every row of `path`.
pub fn read_tabular(path: &Path) -> Result<Vec<TabularRow>> {
    let bad = |message: String| Error::BadInput {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(bad("empty file".into()));
    }
    let mut index = [usize::MAX; 5];
    for (i, h) in headers.iter().enumerate() {
        match COLUMNS.iter().position(|c| *c == h.trim()) {
            Some(j) if index[j] == usize::MAX => index[j] = i,
            Some(_) => return Err(bad(format!("duplicate column `{h}`"))),
            None => return Err(bad(format!("unknown column `{h}`"))),
        }
    }
    if let Some(j) = index.iter().position(|&i| i == usize::MAX) {
        return Err(bad(format!("missing column `{}`", COLUMNS[j])));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let provider_id = record[index[0]].trim().to_string();
        if provider_id.is_empty() {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: "empty provider_id".into(),
            });
        }
        let row = TabularRow {
            provider_id,
            service_id: parse_field(path, line, COLUMNS[1], &record[index[1]])?,
            longitude: parse_field(path, line, COLUMNS[2], &record[index[2]])?,
            latitude: parse_field(path, line, COLUMNS[3], &record[index[3]])?,
            avg_total_payment: parse_field(path, line, COLUMNS[4], &record[index[4]])?,
        };
        if row.avg_total_payment < 0.0 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: "negative avg_total_payment".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok(rows)
}

/// Groups rows into clients by provider, in order of first appearance.
pub fn population_from_rows(rows: &[TabularRow], options: &TabularOptions) -> Result<ClientPopulation> {
    options.scaling.validate()?;
    let s = options.scaling;
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for row in rows {
        if let Some(allow) = &options.service_allowlist {
            if !allow.contains(&row.service_id) {
                continue;
            }
        }
        let entry = grouped.entry(row.provider_id.as_str()).or_insert_with(|| {
            order.push(row.provider_id.as_str());
            (Vec::new(), Vec::new())
        });
        entry.0.extend([row.service_id / s.service_id, row.longitude / s.longitude, row.latitude / s.latitude]);
        entry.1.push(row.avg_total_payment / s.payment);
    }
    if order.is_empty() {
        return Err(Error::invalid("no rows left after service filtering"));
    }
    let mut clients = Vec::with_capacity(order.len());
    for (id, key) in order.iter().enumerate() {
        let (features, targets) = grouped.remove(key).expect("grouped above");
        clients.push(ClientData {
            id,
            data: Batch::new(features, 3, targets, 1)?,
        });
    }
    let n = clients.len();
    ClientPopulation::new(clients, vec![None; n], order.into_iter().map(String::from).collect())
}

/// [`read_tabular`] followed by [`population_from_rows`].
pub fn ingest_csv(path: &Path, options: &TabularOptions) -> Result<ClientPopulation> {
    population_from_rows(&read_tabular(path)?, options)
}
