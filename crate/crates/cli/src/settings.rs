//! Run options gathered from flags and an optional TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varcause::identification::{BootstrapConfig, BootstrapScheme, DecisionRule};
use varcause::{CsvOptions, Horizon, LagSpec};

use crate::UsageError;

/// Every option a command can take. Unset fields fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<char>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lags: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<DecisionRule>,
    /// Moving-block resampling with this block length; 0 picks one from the sample size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quota: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datasets: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quick: Option<bool>,
}

macro_rules! merge {
    ($a:ident, $b:ident, $($f:ident),*) => {
        Settings { $($f: $a.$f.or($b.$f)),* }
    };
}

impl Settings {
    pub fn load(path: &Path) -> anyhow::Result<Settings> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
    }

    /// Fields set here win; the rest come from `other`.
    pub fn or(self, other: Settings) -> Settings {
        let (a, b) = (self, other);
        merge!(
            a, b, input, omega, columns, time_column, delimiter, lags, horizon, order, seed, replicates, alpha,
            rule, block_len, quota, structure, target, steps, template, datasets, length, quick
        )
    }

    pub fn csv_options(&self) -> anyhow::Result<CsvOptions> {
        let delimiter = match self.delimiter {
            None => b',',
            Some(c) if c.is_ascii() => c as u8,
            Some(c) => return Err(UsageError(format!("delimiter '{c}' is not ASCII")).into()),
        };
        Ok(CsvOptions {
            delimiter,
            time_column: self.time_column.clone(),
        })
    }

    pub fn lag_spec(&self) -> anyhow::Result<LagSpec> {
        let text = self
            .lags
            .as_deref()
            .ok_or_else(|| UsageError("--lags is required when fitting a model".into()))?;
        LagSpec::parse(text).map_err(|e| UsageError(e.to_string()).into())
    }

    pub fn horizon(&self) -> anyhow::Result<Horizon> {
        parse_horizon(self.horizon.as_deref().unwrap_or("limit"))
    }

    pub fn steps(&self) -> anyhow::Result<Horizon> {
        parse_horizon(self.steps.as_deref().unwrap_or("limit"))
    }

    /// Bootstrap settings; the horizon defaults to one step past the longest lag.
    pub fn bootstrap(&self, lag_spec: LagSpec) -> anyhow::Result<BootstrapConfig> {
        let mut c = BootstrapConfig::new(lag_spec);
        if self.horizon.is_some() {
            c.horizon = self.horizon()?;
        }
        c.seed = self.seed.unwrap_or(0);
        if let Some(r) = self.replicates {
            c.replicates = r;
        }
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        if let Some(r) = self.rule {
            c.decision_rule = r;
        }
        if let Some(b) = self.block_len {
            c.scheme = BootstrapScheme::MovingBlock { block_len: b };
        }
        c.validate().map_err(|e| UsageError(e.to_string()))?;
        for w in c.warnings() {
            log::warn!("{w}");
        }
        Ok(c)
    }
}

fn parse_horizon(text: &str) -> anyhow::Result<Horizon> {
    text.parse().map_err(|e: varcause::Error| UsageError(e.to_string()).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str("lags = \"1,2\"\nseed = 4\nalpha = 0.1\n").unwrap();
        let flags = Settings {
            seed: Some(9),
            ..Settings::default()
        };
        let s = flags.or(file);
        assert_eq!(s.seed, Some(9));
        assert_eq!(s.lags.as_deref(), Some("1,2"));
        assert_eq!(s.alpha, Some(0.1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("lag = \"1\"").is_err());
    }

    #[test]
    fn zero_horizon_is_a_usage_error() {
        let s = Settings {
            horizon: Some("0".into()),
            ..Settings::default()
        };
        assert!(s.horizon().unwrap_err().downcast_ref::<UsageError>().is_some());
    }
}
