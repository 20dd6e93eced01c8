use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gridzero::grid::MicrogridConfig;
use gridzero::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Which trace rows feed training and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Trace CSV; relative paths resolve against the config file.
    pub trace: PathBuf,
    /// The first `train_days` complete days train the agent.
    pub train_days: usize,
    /// The next `validation_days` days score it during training.
    pub validation_days: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            trace: PathBuf::from("traces.csv"),
            train_days: 20,
            validation_days: 10,
        }
    }
}

/// Everything a run depends on. Every field has a default; a config file
/// overrides any subset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub grid: MicrogridConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Reads `path` over the defaults. Errors name the offending field path.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg =
            Self::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        if cfg.data.trace.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.data.trace = base.join(&cfg.data.trace);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let user: toml::Table = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(RunConfig::default())?;
        merge(&mut merged, user);
        let mut unknown = Vec::new();
        let mut note = |p: serde_ignored::Path<'_>| unknown.push(p.to_string());
        let de = serde_ignored::Deserializer::new(toml::Value::Table(merged), &mut note);
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("field `{}`: {}", e.path(), e.inner()))?;
        if let Some(p) = unknown.first() {
            bail!("unknown field `{p}`");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().context("field `grid`")?;
        self.train.validate().context("field `train`")?;
        let m = &self.train.model;
        if m.n_actions != self.grid.battery.action_levels.len() {
            bail!(
                "field `train.model.n_actions`: {} does not match the {} entries of `grid.battery.action_levels`",
                m.n_actions,
                self.grid.battery.action_levels.len()
            );
        }
        if m.history_window != self.grid.history_window {
            bail!(
                "field `train.model.history_window`: {} does not match `grid.history_window` = {}",
                m.history_window,
                self.grid.history_window
            );
        }
        if self.data.train_days == 0 {
            bail!("field `data.train_days`: at least one training day is needed");
        }
        Ok(())
    }

    /// Canonical TOML of the resolved config.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of [`RunConfig::to_toml`], hex.
    pub fn hash(&self) -> Result<String> {
        Ok(format!("{:x}", Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Overlays `user` on `base`; tables merge key by key, everything else is replaced.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
