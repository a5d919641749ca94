//! Run configuration shared by every command, read from TOML.
//!
//! ```toml
//! [data]
//! path = "table5.csv"
//! label_column = "Label"
//! target_class = "1"
//! features = [
//!     { name = "CPU", kind = "continuous" },
//!     { name = "MEM", kind = "continuous" },
//! ]
//!
//! [discretization]
//! threshold = 6.0
//!
//! [ensemble]
//! n_estimators = 10
//! seed = 0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::Schema;
use crate::selection::SelectionConfig;
use crate::synthesis::Heuristic;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(flatten)]
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// ChiMerge stops once every adjacent pair has chi-square >= threshold.
    pub threshold: f64,
    /// Fixed interior cut points per continuous feature, overriding ChiMerge.
    pub cuts: BTreeMap<String, Vec<f64>>,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig {
            threshold: 6.0,
            cuts: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_estimators: usize,
    /// Features per estimator; half the features (rounded up) when absent.
    pub n_features: Option<usize>,
    pub heuristic: Heuristic,
    pub seed: u64,
    pub parallelism: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n_estimators: 10,
            n_features: None,
            heuristic: Heuristic::CoverageFirst,
            seed: 0,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub folds: usize,
    /// Name written to the `dataset` column of the results table.
    pub dataset: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            folds: 5,
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    pub features: Vec<usize>,
    pub ratios: Vec<f64>,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            sizes: vec![10_000, 20_000],
            features: vec![10],
            ratios: vec![0.01, 0.1, 0.5],
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_records: usize,
    pub n_features: usize,
    pub imbalance_ratio: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_records: 10_000,
            n_features: 10,
            imbalance_ratio: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub model: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub output: OutputConfig,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl RunConfig {
    pub fn new(schema: Schema) -> Self {
        RunConfig {
            data: DataConfig { path: None, schema },
            discretization: DiscretizationConfig::default(),
            ensemble: EnsembleSection::default(),
            selection: SelectionConfig::default(),
            eval: EvalSection::default(),
            bench: BenchSection::default(),
            synth: SynthSection::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the effective configuration in canonical TOML form.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Features per estimator after defaulting.
    pub fn n_features(&self) -> usize {
        self.ensemble
            .n_features
            .unwrap_or(self.data.schema.features.len().div_ceil(2).max(1))
    }

    /// Checks every numeric range. Runs before any data is read.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.data.schema.validate().map_err(|e| invalid(e.to_string()))?;
        let d = &self.discretization;
        if !(d.threshold.is_finite() && d.threshold >= 0.0) {
            return Err(invalid(format!(
                "discretization.threshold must be a finite value >= 0, got {}",
                d.threshold
            )));
        }
        for (name, cuts) in &d.cuts {
            if !self.data.schema.features.iter().any(|f| &f.name == name) {
                return Err(invalid(format!("discretization.cuts names unknown feature `{name}`")));
            }
            if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!(
                    "discretization.cuts for `{name}` must be finite and strictly increasing"
                )));
            }
        }
        let e = &self.ensemble;
        if e.n_estimators == 0 {
            return Err(invalid("ensemble.n_estimators must be at least 1"));
        }
        let total = self.data.schema.features.len();
        if let Some(k) = e.n_features {
            if k == 0 || k > total {
                return Err(invalid(format!("ensemble.n_features = {k} outside 1..={total}")));
            }
        }
        if e.parallelism == 0 {
            return Err(invalid("ensemble.parallelism must be at least 1"));
        }
        self.selection
            .validate()
            .map_err(|e| invalid(format!("selection: {e}")))?;
        if self.selection.max_rules == Some(0) {
            return Err(invalid("selection.max_rules must be at least 1"));
        }
        if !self.selection.min_weight.is_finite() {
            return Err(invalid("selection.min_weight must be finite"));
        }
        if self.eval.folds < 2 {
            return Err(invalid("eval.folds must be at least 2"));
        }
        let b = &self.bench;
        if b.repeats == 0 || b.sizes.contains(&0) || b.features.contains(&0) {
            return Err(invalid("bench sizes, features and repeats must be positive"));
        }
        if b.ratios.iter().any(|r| !(*r > 0.0 && *r <= 0.5)) {
            return Err(invalid("bench ratios must lie in (0, 0.5]"));
        }
        let s = &self.synth;
        if s.n_records == 0 || s.n_features == 0 || !(s.imbalance_ratio > 0.0 && s.imbalance_ratio <= 0.5) {
            return Err(invalid(
                "synth needs n_records >= 1, n_features >= 1, 0 < imbalance_ratio <= 0.5",
            ));
        }
        Ok(())
    }
}
