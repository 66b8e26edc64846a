//! Flat key-value run configuration and the run manifest.
//!
//! The config file mirrors the fitted-parameter file format: one `key=value`
//! per line, `#` comments, with dotted section prefixes for the model, build
//! and sim groups. It is deliberately diff-friendly so fixture configs can be
//! reviewed line by line.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use spectree_core::sim::{AcceptanceMode, PolicyKind, SimConfig, SyntheticModelPair};
use spectree_core::{BuildConfig64, CostModelParams64};

/// All `key=value` pairs from a config file, with duplicate keys rejected.
pub struct RawConfig {
    values: BTreeMap<String, String>,
    path: String,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config `{}`", path.display()))?;
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), idx + 1))?;
            if values
                .insert(key.trim().to_string(), value.trim().to_string())
                .is_some()
            {
                bail!(
                    "{}:{}: duplicate key `{}`",
                    path.display(),
                    idx + 1,
                    key.trim()
                );
            }
        }
        Ok(Self {
            values,
            path: path.display().to_string(),
        })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| anyhow!("{}: missing key `{key}`", self.path))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.parse().map_err(|_| {
            anyhow!(
                "{}: bad value for `{key}`: `{}`",
                self.path,
                self.values[key]
            )
        })
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| anyhow!("{}: bad value for `{key}`: `{raw}`", self.path)),
        }
    }

    /// Assemble a full simulation config; device parameters come from the
    /// separate fitted-parameter file.
    pub fn to_sim_config(&self, params: CostModelParams64) -> Result<SimConfig> {
        let model = SyntheticModelPair {
            vocab_size: self.parse("model.vocab_size")?,
            order: self.parse_or("model.order", 2)?,
            seed: self.parse("model.seed")?,
            mismatch: self.parse("model.mismatch")?,
            sharpen: self.parse_or("model.sharpen", 1.0)?,
        };
        let build = BuildConfig64 {
            k: self.parse("build.k")?,
            d: self.parse("build.d")?,
            alpha: self.parse_or("build.alpha", 0.8)?,
            b_verify: self.parse_or("build.b_verify", 200)?,
            batch_size: self.parse_or("build.batch_size", 1)?,
            rerank_g: self.parse("build.rerank_g")?,
        };
        let policy = match self.parse_or("sim.policy", "smart".to_string())?.as_str() {
            "smart" => PolicyKind::Smart,
            "baseline" => PolicyKind::Baseline,
            other => bail!("{}: unknown sim.policy `{other}`", self.path),
        };
        let acceptance_mode = match self
            .parse_or("sim.acceptance_mode", "greedy_match".to_string())?
            .as_str()
        {
            "greedy_match" => AcceptanceMode::GreedyMatch,
            "stochastic" => AcceptanceMode::Stochastic,
            other => bail!("{}: unknown sim.acceptance_mode `{other}`", self.path),
        };
        Ok(SimConfig {
            model,
            params,
            build,
            policy,
            generation_length: self.parse("sim.generation_length")?,
            num_sequences: self.parse("sim.num_sequences")?,
            acceptance_mode,
            seed: self.parse("sim.seed")?,
        })
    }
}

/// Record of what produced a set of output files.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config_path: Option<&'a str>,
    pub params_path: Option<&'a str>,
    pub resolved_config: Option<&'a SimConfig>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub tool_version: &'static str,
}

impl RunManifest<'_> {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing manifest `{}`", path.display()))?;
        Ok(())
    }
}
