//! Metrics, cross-validation and scaling benchmarks.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::binarize::{binarize, fit_discretization, Discretization};
use crate::config::RunConfig;
use crate::data::{split, synth_generate, DataError, RawDataset, SplitKind, SplitSpec};
use crate::ensemble::{draw_subsets, run_estimator, EnsembleConfig};
use crate::model::RuleSet;
use crate::pipeline::{train, PipelineError};
use crate::selection::select_rules;
use crate::synthesis::{BoundaryPoint, BoundarySet, LearnerConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Precision, recall and F1 of the positive (target) class; every 0/0 is 0.
pub fn score(predictions: &[bool], labels: &[bool]) -> Result<Scores, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Scores { precision, recall, f1 })
}

/// Number of rules and mean atoms per rule.
pub fn interpretability_metrics(rs: &RuleSet) -> (usize, f64) {
    rs.complexity()
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub scores: Scores,
    pub n_rules: usize,
    pub mean_atoms: f64,
    /// Seconds.
    pub t_gen: f64,
    pub t_sel: f64,
    #[serde(skip)]
    pub discretization: Discretization,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub folds: Vec<FoldResult>,
    pub f1: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub n_rules: Summary,
    pub mean_atoms: Summary,
    pub t_gen: Summary,
    pub t_sel: Summary,
}

impl EvalReport {
    fn from_folds(dataset: &str, folds: Vec<FoldResult>) -> Self {
        let col = |f: &dyn Fn(&FoldResult) -> f64| Summary::of(&folds.iter().map(f).collect::<Vec<_>>());
        EvalReport {
            dataset: dataset.to_string(),
            f1: col(&|r| r.scores.f1),
            precision: col(&|r| r.scores.precision),
            recall: col(&|r| r.scores.recall),
            n_rules: col(&|r| r.n_rules as f64),
            mean_atoms: col(&|r| r.mean_atoms),
            t_gen: col(&|r| r.t_gen),
            t_sel: col(&|r| r.t_sel),
            folds,
        }
    }

    /// Plain-text summary. Timings are left out so the text is reproducible.
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset {} ({} folds)", self.dataset, self.folds.len());
        for f in &self.folds {
            let _ = writeln!(
                s,
                "fold {} f1={:.4} precision={:.4} recall={:.4} rules={} mean_atoms={:.4}",
                f.fold, f.scores.f1, f.scores.precision, f.scores.recall, f.n_rules, f.mean_atoms
            );
        }
        for (name, v) in [
            ("f1", self.f1),
            ("precision", self.precision),
            ("recall", self.recall),
            ("n_rules", self.n_rules),
            ("mean_atoms", self.mean_atoms),
        ] {
            let _ = writeln!(s, "{name} {:.4} ({:.4})", v.mean, v.std);
        }
        s
    }
}

pub const TABLE_COLUMNS: [&str; 9] = [
    "dataset",
    "fold",
    "f1",
    "precision",
    "recall",
    "n_rules",
    "mean_atoms",
    "t_gen",
    "t_sel",
];

/// One row per fold with the fixed column set.
pub fn write_table<W: Write>(reports: &[EvalReport], out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_COLUMNS)?;
    for r in reports {
        for f in &r.folds {
            w.write_record([
                r.dataset.clone(),
                f.fold.to_string(),
                format!("{:.6}", f.scores.f1),
                format!("{:.6}", f.scores.precision),
                format!("{:.6}", f.scores.recall),
                f.n_rules.to_string(),
                format!("{:.6}", f.mean_atoms),
                format!("{:.6}", f.t_gen),
                format!("{:.6}", f.t_sel),
            ])?;
        }
    }
    w.flush().map_err(|source| DataError::Io {
        path: "table".into(),
        source,
    })?;
    Ok(())
}

fn pick(labels: &[bool], idx: &[usize]) -> Vec<bool> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Stratified k-fold cross-validation. Each fold fits discretization,
/// ensemble and selection on its training rows only, then scores the
/// held-out rows.
pub fn run_cv(ds: &RawDataset, labels: &[bool], cfg: &RunConfig, folds: usize) -> Result<EvalReport, PipelineError> {
    cfg.validate()?;
    let spec = SplitSpec {
        kind: SplitKind::StratifiedKFold(folds),
        seed: cfg.ensemble.seed,
    };
    let parts = split(labels, &spec)?;
    let mut results = Vec::with_capacity(parts.len());
    for (fold, part) in parts.iter().enumerate() {
        let train_ds = ds.subset(&part.train);
        let train_labels = pick(labels, &part.train);
        if !train_labels.iter().any(|&y| y) {
            return Err(PipelineError::Eval(format!(
                "fold {fold} has no positive training rows"
            )));
        }
        let out = train(&train_ds, &train_labels, cfg)?;
        let test_ds = ds.subset(&part.test);
        let predictions = test_ds
            .rows
            .iter()
            .map(|r| out.model.predict(&r.values).map(|p| p.positive))
            .collect::<Result<Vec<_>, _>>()?;
        let scores = score(&predictions, &pick(labels, &part.test)).expect("one prediction per row");
        let (n_rules, mean_atoms) = interpretability_metrics(&out.model);
        log::info!("fold {fold}: f1={:.4} rules={n_rules}", scores.f1);
        results.push(FoldResult {
            fold,
            scores,
            n_rules,
            mean_atoms,
            t_gen: out.timings.generation.as_secs_f64(),
            t_sel: out.timings.selection.as_secs_f64(),
            discretization: out.model.discretization.clone(),
        });
    }
    let name = cfg.eval.dataset.clone().unwrap_or_else(|| "dataset".into());
    Ok(EvalReport::from_folds(&name, results))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n_records: usize,
    /// Features seen by the weak learner.
    pub n_features: usize,
    pub ratio: f64,
    /// Mean points found by one weak learner.
    pub candidates: f64,
    pub n_rules: f64,
    /// Mean seconds per weak learner.
    pub t_gen: f64,
    pub t_sel: f64,
}

pub const BENCH_COLUMNS: [&str; 7] = [
    "n_records",
    "n_features",
    "ratio",
    "candidates",
    "n_rules",
    "t_gen",
    "t_sel",
];

/// Times single weak learners on synthetic data. For every `(n, ratio)` one
/// dataset with `max(features)` columns is generated and discretized once;
/// each of the `repeats` runs per `d` then draws a fresh subset of `d`
/// features, learns its boundary points (`t_gen`) and selects rules from
/// them (`t_sel`).
pub fn bench_scaling(
    sizes: &[usize],
    features: &[usize],
    ratios: &[f64],
    repeats: usize,
    cfg: &RunConfig,
) -> Result<Vec<BenchRow>, PipelineError> {
    let width = features.iter().copied().max().unwrap_or(1);
    let seed = cfg.ensemble.seed;
    let mut rows = Vec::new();
    for &n in sizes {
        for &ratio in ratios {
            let (ds, labels) = synth_generate(n, width, ratio, seed)?;
            let disc = fit_discretization(&ds, &labels, cfg.discretization.threshold)?;
            let bds = binarize(&ds, &labels, &disc)?;
            for &d in features {
                let ens = EnsembleConfig {
                    n_estimators: repeats.max(1),
                    n_features: d,
                    seed,
                    learner: LearnerConfig {
                        heuristic: cfg.ensemble.heuristic,
                        ..LearnerConfig::default()
                    },
                    parallelism: 1,
                };
                let (mut gen, mut sel, mut cands, mut rules) = (0.0, 0.0, 0.0, 0.0);
                for subset in draw_subsets(&bds.layout, &ens)? {
                    let start = Instant::now();
                    let run = run_estimator(&bds, subset, ens.learner)?;
                    gen += start.elapsed().as_secs_f64();
                    let candidates = BoundarySet {
                        points: run
                            .points
                            .into_iter()
                            .map(|point| BoundaryPoint {
                                point,
                                provenance: Vec::new(),
                            })
                            .collect(),
                    };
                    let start = Instant::now();
                    let (_, chosen) = select_rules(&candidates, &bds, &cfg.selection)?;
                    sel += start.elapsed().as_secs_f64();
                    cands += candidates.len() as f64;
                    rules += chosen.chosen.len() as f64;
                }
                let k = repeats.max(1) as f64;
                log::info!(
                    "bench n={n} d={d} ratio={ratio}: t_gen={:.3}s t_sel={:.3}s",
                    gen / k,
                    sel / k
                );
                rows.push(BenchRow {
                    n_records: n,
                    n_features: d,
                    ratio,
                    candidates: cands / k,
                    n_rules: rules / k,
                    t_gen: gen / k,
                    t_sel: sel / k,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bench<W: Write>(rows: &[BenchRow], out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.n_records.to_string(),
            r.n_features.to_string(),
            r.ratio.to_string(),
            format!("{:.2}", r.candidates),
            format!("{:.2}", r.n_rules),
            format!("{:.6}", r.t_gen),
            format!("{:.6}", r.t_sel),
        ])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "bench table".into(),
        source,
    })?;
    Ok(())
}
