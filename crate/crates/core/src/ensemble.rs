//! Weak learners on random feature subsets, merged by union.
//!
//! Estimator `j` samples `k` original features, projects the binarized
//! samples onto those features' bit columns, runs the boundary learner on
//! the projection and embeds each resulting point back into the full width
//! with zeros everywhere else. A zero span means "feature unconstrained", so
//! the embedded rule fires on a full sample exactly when the reduced rule
//! fires on its projection.
//!
//! Embedded points never cover a training negative (a projected negative
//! would have been a conflict), but they constrain only a few features and
//! readily fire on unseen negatives. Rule selection trims the union.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binarize::{BinarizedDataset, BitLayout};
use crate::lattice::{BitVector, LatticeError};
use crate::synthesis::{find_boundary, BoundaryPoint, BoundarySet, LearnerConfig, Provenance, SynthesisError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnsembleError {
    #[error("n_estimators must be at least 1")]
    NoEstimators,
    #[error("n_features = {k} outside 1..={total}")]
    FeatureCount { k: usize, total: usize },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_estimators: usize,
    /// Original features per estimator.
    pub n_features: usize,
    pub seed: u64,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Concurrent estimators; 1 runs serially.
    #[serde(default = "one")]
    pub parallelism: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSubset {
    pub estimator: usize,
    pub features: Vec<usize>,
    /// Union of the selected features' bit spans.
    pub mask: BitVector,
}

/// Per-estimator feature draws: `k` features without replacement from a
/// ChaCha stream keyed by `(seed, estimator)`, sorted ascending.
pub fn draw_subsets(layout: &BitLayout, cfg: &EnsembleConfig) -> Result<Vec<FeatureSubset>, EnsembleError> {
    let total = layout.spans.len();
    if cfg.n_estimators == 0 {
        return Err(EnsembleError::NoEstimators);
    }
    if cfg.n_features == 0 || cfg.n_features > total {
        return Err(EnsembleError::FeatureCount {
            k: cfg.n_features,
            total,
        });
    }
    Ok((0..cfg.n_estimators)
        .map(|estimator| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(estimator as u64);
            let mut features = rand::seq::index::sample(&mut rng, total, cfg.n_features).into_vec();
            features.sort_unstable();
            let mask = layout.mask(&features);
            FeatureSubset {
                estimator,
                features,
                mask,
            }
        })
        .collect())
}

/// Scatters a reduced point into the full width selected by `mask`.
pub fn embed_point(reduced: &BitVector, mask: &BitVector) -> Result<BitVector, LatticeError> {
    reduced.embed(mask)
}

fn distinct_projection(vectors: &[(BitVector, usize)], mask: &BitVector) -> Vec<BitVector> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (v, _) in vectors {
        let p = v.project(mask).expect("mask has the dataset width");
        if seen.insert(p.clone(), ()).is_none() {
            out.push(p);
        }
    }
    out
}

/// What one estimator produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorRun {
    pub subset: FeatureSubset,
    pub points: Vec<BitVector>,
    pub unresolvable: usize,
}

/// Trains one weak learner on the projection of `bds` onto `subset`.
pub fn run_estimator(
    bds: &BinarizedDataset,
    subset: FeatureSubset,
    learner: LearnerConfig,
) -> Result<EstimatorRun, EnsembleError> {
    let dplus = distinct_projection(&bds.positives, &subset.mask);
    let dminus = distinct_projection(&bds.negatives, &subset.mask);
    if dplus.is_empty() {
        log::warn!("estimator {} has no positive samples", subset.estimator);
        return Ok(EstimatorRun {
            subset,
            points: Vec::new(),
            unresolvable: 0,
        });
    }
    let boundary = find_boundary(&dplus, &dminus, learner)?;
    let points = boundary
        .points
        .iter()
        .map(|a| embed_point(a, &subset.mask))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EstimatorRun {
        subset,
        points,
        unresolvable: boundary.unresolvable.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleOutput {
    pub candidates: BoundarySet,
    pub runs: Vec<EstimatorRun>,
}

/// Trains every estimator and merges their points. The union keeps the
/// first occurrence's position and accumulates provenance; the result does
/// not depend on `parallelism`.
pub fn train_ensemble(bds: &BinarizedDataset, cfg: &EnsembleConfig) -> Result<EnsembleOutput, EnsembleError> {
    let subsets = draw_subsets(&bds.layout, cfg)?;
    let runs: Vec<EstimatorRun> = if cfg.parallelism <= 1 {
        subsets
            .into_iter()
            .map(|s| run_estimator(bds, s, cfg.learner))
            .collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| EnsembleError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            subsets
                .into_par_iter()
                .map(|s| run_estimator(bds, s, cfg.learner))
                .collect::<Result<Vec<_>, _>>()
        })?
    };

    let mut index: HashMap<BitVector, usize> = HashMap::new();
    let mut points: Vec<BoundaryPoint> = Vec::new();
    for run in &runs {
        let prov = Provenance {
            estimator: run.subset.estimator,
            features: run.subset.features.clone(),
        };
        for p in &run.points {
            match index.get(p) {
                Some(&i) => points[i].provenance.push(prov.clone()),
                None => {
                    index.insert(p.clone(), points.len());
                    points.push(BoundaryPoint {
                        point: p.clone(),
                        provenance: vec![prov.clone()],
                    });
                }
            }
        }
    }
    Ok(EnsembleOutput {
        candidates: BoundarySet { points },
        runs,
    })
}
