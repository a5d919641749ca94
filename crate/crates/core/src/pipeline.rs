//! End-to-end training: discretize, binarize, run the ensemble, select
//! rules, build the model.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::binarize::{binarize, BinarizeError, BinarizedDataset, Discretization};
use crate::config::{ConfigError, RunConfig};
use crate::data::{DataError, RawDataset};
use crate::ensemble::{train_ensemble, EnsembleConfig, EnsembleError, EnsembleOutput};
use crate::model::{ModelError, RuleSet};
use crate::selection::{select_rules, Selection, SelectionError};
use crate::synthesis::{BoundarySet, LearnerConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("binarizer: {0}")]
    Binarize(#[from] BinarizeError),
    #[error("ensemble: {0}")]
    Ensemble(#[from] EnsembleError),
    #[error("selection: {0}")]
    Selection(#[from] SelectionError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("evaluation: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    /// Ensemble training, wall clock.
    pub generation: Duration,
    /// Top-K filtering plus set cover, wall clock.
    pub selection: Duration,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: RuleSet,
    pub binarized: BinarizedDataset,
    pub ensemble: EnsembleOutput,
    /// Candidates that entered the set cover.
    pub filtered: BoundarySet,
    pub selection: Selection,
    pub timings: Timings,
}

impl TrainOutput {
    /// Human-readable training log. Contains no timings, so it is
    /// reproducible byte for byte.
    pub fn log(&self) -> String {
        let mut s = String::new();
        let b = &self.binarized;
        let _ = writeln!(
            s,
            "binarized width={} positives={} ({} distinct) negatives={} ({} distinct) collisions={}",
            b.layout.width(),
            b.positive_count(),
            b.positives.len(),
            b.negative_count(),
            b.negatives.len(),
            b.collisions.len()
        );
        for run in &self.ensemble.runs {
            let _ = writeln!(
                s,
                "estimator {} features={:?} points={} unresolvable={}",
                run.subset.estimator,
                run.subset.features,
                run.points.len(),
                run.unresolvable
            );
        }
        let _ = writeln!(s, "candidates before filtering={}", self.ensemble.candidates.len());
        let _ = writeln!(s, "candidates after filtering={}", self.filtered.len());
        s.push_str(&self.selection.trace());
        let (n, atoms) = self.model.complexity();
        let _ = writeln!(s, "rules={n} mean_atoms={atoms:.4}");
        s
    }
}

pub fn ensemble_config(cfg: &RunConfig) -> EnsembleConfig {
    EnsembleConfig {
        n_estimators: cfg.ensemble.n_estimators,
        n_features: cfg.n_features(),
        seed: cfg.ensemble.seed,
        learner: LearnerConfig {
            heuristic: cfg.ensemble.heuristic,
            ..LearnerConfig::default()
        },
        parallelism: cfg.ensemble.parallelism,
    }
}

/// Discretization fitted on `ds` alone, honoring fixed cuts from the config.
pub fn fit(ds: &RawDataset, labels: &[bool], cfg: &RunConfig) -> Result<Discretization, BinarizeError> {
    let cuts: HashMap<String, Vec<f64>> = cfg.discretization.cuts.clone().into_iter().collect();
    Discretization::with_cuts(ds, labels, cfg.discretization.threshold, &cuts)
}

/// Metadata echoed into the model file.
pub fn metadata(cfg: &RunConfig) -> serde_json::Value {
    let mut config = cfg.clone();
    // where the data came from is not part of the model
    config.data.path = None;
    config.output = Default::default();
    // parallelism changes timings only, so it stays out of the artifact
    config.ensemble.parallelism = 1;
    let mut value = serde_json::json!({
        "config_sha256": config.fingerprint(),
        "config": config,
        "n_features_per_estimator": cfg.n_features(),
    });
    if let Some(e) = value["config"]["ensemble"].as_object_mut() {
        e.remove("parallelism");
    }
    value
}

/// Trains a rule set on `ds` with `labels` (true = target class).
pub fn train(ds: &RawDataset, labels: &[bool], cfg: &RunConfig) -> Result<TrainOutput, PipelineError> {
    cfg.validate()?;
    if ds.schema.features != cfg.data.schema.features {
        return Err(ConfigError::Invalid("dataset schema differs from the configured one".into()).into());
    }
    if labels.len() != ds.len() {
        return Err(PipelineError::Eval(format!(
            "{} labels for {} rows",
            labels.len(),
            ds.len()
        )));
    }
    let disc = fit(ds, labels, cfg)?;
    let binarized = binarize(ds, labels, &disc)?;

    let start = Instant::now();
    let ensemble = train_ensemble(&binarized, &ensemble_config(cfg))?;
    let generation = start.elapsed();

    let start = Instant::now();
    let (filtered, selection) = select_rules(&ensemble.candidates, &binarized, &cfg.selection)?;
    let selection_time = start.elapsed();

    let model = RuleSet::from_points(&selection.vectors(), ds.schema.clone(), disc, metadata(cfg))?;
    Ok(TrainOutput {
        model,
        binarized,
        ensemble,
        filtered,
        selection,
        timings: Timings {
            generation,
            selection: selection_time,
        },
    })
}
