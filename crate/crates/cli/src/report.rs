//! CSV and JSON report files. Every report carries the schema version; JSON
//! summaries also carry the config hash and seed of the run.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Bumped whenever a column or summary field changes meaning or order.
pub const SCHEMA_VERSION: u32 = 1;

/// Header fields every JSON summary starts with.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub gridzero_version: &'static str,
}

impl Provenance {
    pub fn new(command: &'static str, config_hash: String, seed: u64) -> Self {
        Provenance {
            schema_version: SCHEMA_VERSION,
            command,
            config_hash,
            seed,
            gridzero_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Fails on NaN or infinite fields so no report carries them.
pub fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        bail!("{what}: non-finite value {x}");
    }
    Ok(())
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Mean, population standard deviation, min and max.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Stats {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Stats {
            mean,
            std: var.sqrt(),
            min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
            max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}
