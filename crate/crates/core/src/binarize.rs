//! Discretization and inverse one-hot encoding.
//!
//! Each feature is cut into `m` intervals (continuous) or buckets (one per
//! distinct categorical value). A value falling in interval `z` becomes `m`
//! bits, all ones except a zero at position `z`. Concatenating the features
//! gives a record's lattice element. Any two distinct encoded records are
//! incomparable under bit containment.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureKind, RawDataset, Value};
use crate::lattice::BitVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinarizeError {
    #[error("threshold must be >= 0, got {0}")]
    NegativeThreshold(f64),
    #[error("interval index {index} out of range 0..{width}")]
    IntervalOutOfRange { index: usize, width: usize },
    #[error("feature `{feature}`: expected a {expected} value, got `{got}`")]
    KindMismatch {
        feature: String,
        expected: &'static str,
        got: String,
    },
    #[error("discretization has {got} features, dataset has {expected}")]
    FeatureCount { expected: usize, got: usize },
    #[error("point width {got} does not match layout width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("feature `{0}` has every bit set; the condition can never hold")]
    Unsatisfiable(String),
    #[error("invalid cut points for feature `{0}`")]
    InvalidCuts(String),
}

/// Interval structure of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Bins {
    /// Intervals `[lo, c1), [c1, c2), ..., [c_last, hi]`; `lo`/`hi` are the
    /// observed training range.
    Continuous { lo: f64, cuts: Vec<f64>, hi: f64 },
    /// One bucket per value, in sorted order.
    Categorical { values: Vec<String> },
}

impl Bins {
    /// Number of intervals, `m`.
    pub fn len(&self) -> usize {
        match self {
            Bins::Continuous { cuts, .. } => cuts.len() + 1,
            Bins::Categorical { values } => values.len().max(1),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interval of `value`. Continuous values outside `[lo, hi]` clamp to the
    /// nearest end interval (second field `true`). Unseen categories give `None`.
    pub fn locate(&self, value: &Value) -> Option<(usize, bool)> {
        match (self, value) {
            (Bins::Continuous { lo, cuts, hi }, Value::Number(x)) => {
                let z = cuts.partition_point(|c| c <= x);
                Some((z, x < lo || x > hi))
            }
            (Bins::Categorical { values }, Value::Category(s)) => {
                values.binary_search_by(|v| v.as_str().cmp(s)).ok().map(|z| (z, false))
            }
            (Bins::Categorical { values }, Value::Number(x)) => {
                let s = x.to_string();
                values.binary_search_by(|v| v.as_str().cmp(&s)).ok().map(|z| (z, false))
            }
            (Bins::Continuous { .. }, Value::Category(_)) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub name: String,
    #[serde(flatten)]
    pub bins: Bins,
}

/// Fitted per-feature intervals, aligned with the schema's feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub features: Vec<FeatureBins>,
}

impl Discretization {
    pub fn layout(&self) -> BitLayout {
        BitLayout::from_widths(self.features.iter().map(|f| f.bins.len()))
    }

    /// Uses the given interior cut points for continuous features named in
    /// `cuts`; every other feature keeps its fitted bins. `lo`/`hi` come from
    /// the data.
    pub fn with_cuts(
        ds: &RawDataset,
        labels: &[bool],
        threshold: f64,
        cuts: &HashMap<String, Vec<f64>>,
    ) -> Result<Self, BinarizeError> {
        let mut disc = fit_discretization(ds, labels, threshold)?;
        for f in &mut disc.features {
            if let (Some(c), Bins::Continuous { lo, hi, .. }) = (cuts.get(&f.name), &f.bins) {
                let sorted = c.windows(2).all(|w| w[0] < w[1]);
                if !sorted || c.iter().any(|x| !x.is_finite()) {
                    return Err(BinarizeError::InvalidCuts(f.name.clone()));
                }
                f.bins = Bins::Continuous {
                    lo: *lo,
                    cuts: c.clone(),
                    hi: *hi,
                };
            }
        }
        Ok(disc)
    }
}

/// Bit offsets of each feature's span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub offset: usize,
    pub width: usize,
}

impl Span {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }
}

impl BitLayout {
    pub fn from_widths<I: IntoIterator<Item = usize>>(widths: I) -> Self {
        let mut offset = 0;
        let spans = widths
            .into_iter()
            .map(|width| {
                let s = Span { offset, width };
                offset += width;
                s
            })
            .collect();
        BitLayout { spans }
    }

    /// Total width `d`.
    pub fn width(&self) -> usize {
        self.spans.last().map(|s| s.offset + s.width).unwrap_or(0)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.spans.iter().map(|s| s.width).collect()
    }

    /// Which feature owns bit `bit`.
    pub fn feature_of(&self, bit: usize) -> Option<usize> {
        self.spans.iter().position(|s| s.range().contains(&bit))
    }

    /// Bits of the given features, as a mask over the full width.
    pub fn mask(&self, features: &[usize]) -> BitVector {
        BitVector::from_indices(features.iter().flat_map(|&f| self.spans[f].range()), self.width())
            .expect("spans lie inside the layout")
    }

    pub fn format(&self, v: &BitVector) -> String {
        v.to_grouped_string(&self.widths())
    }
}

/// Inverse one-hot code of interval `index` (zero-based) among `width`.
pub fn encode_value(index: usize, width: usize) -> Result<BitVector, BinarizeError> {
    if index >= width {
        return Err(BinarizeError::IntervalOutOfRange { index, width });
    }
    let mut b = BitVector::ones(width);
    b.clear(index);
    Ok(b)
}

fn chi_square(a: [u64; 2], b: [u64; 2]) -> f64 {
    let n = (a[0] + a[1] + b[0] + b[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let cols = [(a[0] + b[0]) as f64, (a[1] + b[1]) as f64];
    let mut chi = 0.0;
    for row in [a, b] {
        let r = (row[0] + row[1]) as f64;
        for k in 0..2 {
            let e = r * cols[k] / n;
            // empty expected cells contribute nothing
            if e > 0.0 {
                let d = row[k] as f64 - e;
                chi += d * d / e;
            }
        }
    }
    chi
}

#[derive(PartialEq)]
struct Candidate {
    chi: f64,
    left: usize,
    stamp: (u64, u64),
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // min-heap on chi, leftmost pair first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        other.chi.total_cmp(&self.chi).then_with(|| other.left.cmp(&self.left))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bottom-up ChiMerge on one continuous feature. Returns the interior cut
/// points (each the smallest value of the interval it opens).
pub fn chimerge(values: &[f64], labels: &[bool], threshold: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut starts: Vec<f64> = Vec::new();
    let mut counts: Vec<[u64; 2]> = Vec::new();
    for i in order {
        let v = values[i];
        if starts.last() != Some(&v) {
            starts.push(v);
            counts.push([0, 0]);
        }
        let c = counts.last_mut().unwrap();
        c[usize::from(!labels[i])] += 1;
    }
    let n = starts.len();
    if n <= 1 {
        return Vec::new();
    }

    // doubly linked list of live intervals; a stamp records the generation of
    // both ends so stale heap entries can be skipped
    let mut next: Vec<Option<usize>> = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
    let mut prev: Vec<Option<usize>> = (0..n).map(|i| i.checked_sub(1)).collect();
    let mut generation = vec![0u64; n];
    let mut alive = vec![true; n];
    let mut heap = BinaryHeap::new();
    for i in 0..n - 1 {
        heap.push(Candidate {
            chi: chi_square(counts[i], counts[i + 1]),
            left: i,
            stamp: (0, 0),
        });
    }

    while let Some(c) = heap.pop() {
        let l = c.left;
        let Some(r) = next[l] else { continue };
        if !alive[l] || c.stamp != (generation[l], generation[r]) {
            continue;
        }
        if c.chi >= threshold || c.chi.is_nan() {
            break;
        }
        counts[l][0] += counts[r][0];
        counts[l][1] += counts[r][1];
        alive[r] = false;
        next[l] = next[r];
        if let Some(rr) = next[r] {
            prev[rr] = Some(l);
        }
        generation[l] += 1;
        if let Some(p) = prev[l] {
            heap.push(Candidate {
                chi: chi_square(counts[p], counts[l]),
                left: p,
                stamp: (generation[p], generation[l]),
            });
        }
        if let Some(nx) = next[l] {
            heap.push(Candidate {
                chi: chi_square(counts[l], counts[nx]),
                left: l,
                stamp: (generation[l], generation[nx]),
            });
        }
    }

    (1..n).filter(|&i| alive[i]).map(|i| starts[i]).collect()
}

/// ChiMerge on every continuous feature; categorical features get one bucket
/// per distinct value. `threshold = 0` keeps every distinct value apart and
/// `threshold = inf` collapses each continuous feature to one interval.
pub fn fit_discretization(ds: &RawDataset, labels: &[bool], threshold: f64) -> Result<Discretization, BinarizeError> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(BinarizeError::NegativeThreshold(threshold));
    }
    let features = ds
        .schema
        .features
        .iter()
        .enumerate()
        .map(|(f, spec)| {
            let bins = match spec.kind {
                FeatureKind::Continuous => {
                    let values: Vec<f64> = ds
                        .column(f)
                        .map(|v| match v {
                            Value::Number(x) => Ok(*x),
                            Value::Category(s) => Err(BinarizeError::KindMismatch {
                                feature: spec.name.clone(),
                                expected: "numeric",
                                got: s.clone(),
                            }),
                        })
                        .collect::<Result<_, _>>()?;
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    Bins::Continuous {
                        lo,
                        cuts: chimerge(&values, labels, threshold),
                        hi,
                    }
                }
                FeatureKind::Categorical => {
                    let values: BTreeSet<String> = ds.column(f).map(|v| v.to_string()).collect();
                    Bins::Categorical {
                        values: values.into_iter().collect(),
                    }
                }
            };
            Ok(FeatureBins {
                name: spec.name.clone(),
                bins,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Discretization { features })
}

/// Lattice element of one row. Unseen categories leave their span all zero,
/// so only rules that do not constrain that feature fire.
pub fn encode_row(values: &[Value], disc: &Discretization, layout: &BitLayout) -> BitVector {
    let mut v = BitVector::ones(layout.width());
    for ((value, fb), span) in values.iter().zip(&disc.features).zip(&layout.spans) {
        match fb.bins.locate(value) {
            Some((z, _)) => v.clear(span.offset + z),
            None => {
                for b in span.range() {
                    v.clear(b);
                }
            }
        }
    }
    v
}

/// Distinct encoded vectors with their multiplicities, in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedDataset {
    pub layout: BitLayout,
    pub positives: Vec<(BitVector, usize)>,
    pub negatives: Vec<(BitVector, usize)>,
    /// Vectors present in both classes.
    pub collisions: Vec<BitVector>,
}

impl BinarizedDataset {
    pub fn positive_vectors(&self) -> Vec<BitVector> {
        self.positives.iter().map(|(v, _)| v.clone()).collect()
    }

    pub fn negative_vectors(&self) -> Vec<BitVector> {
        self.negatives.iter().map(|(v, _)| v.clone()).collect()
    }

    /// Total positive records, counting multiplicity.
    pub fn positive_count(&self) -> usize {
        self.positives.iter().map(|(_, c)| c).sum()
    }

    pub fn negative_count(&self) -> usize {
        self.negatives.iter().map(|(_, c)| c).sum()
    }
}

fn tally(into: &mut Vec<(BitVector, usize)>, index: &mut HashMap<BitVector, usize>, v: BitVector) {
    match index.get(&v) {
        Some(&i) => into[i].1 += 1,
        None => {
            index.insert(v.clone(), into.len());
            into.push((v, 1));
        }
    }
}

pub fn binarize(ds: &RawDataset, labels: &[bool], disc: &Discretization) -> Result<BinarizedDataset, BinarizeError> {
    if disc.features.len() != ds.schema.features.len() {
        return Err(BinarizeError::FeatureCount {
            expected: ds.schema.features.len(),
            got: disc.features.len(),
        });
    }
    let layout = disc.layout();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut pos_index = HashMap::new();
    let mut neg_index = HashMap::new();
    let mut clamped = 0usize;
    for (row, &label) in ds.rows.iter().zip(labels) {
        for (value, fb) in row.values.iter().zip(&disc.features) {
            if let Some((_, true)) = fb.bins.locate(value) {
                clamped += 1;
            }
        }
        let v = encode_row(&row.values, disc, &layout);
        if label {
            tally(&mut positives, &mut pos_index, v);
        } else {
            tally(&mut negatives, &mut neg_index, v);
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} values outside the fitted range were clamped into the end intervals");
    }
    if positives.is_empty() {
        log::warn!("no positive records after binarization");
    }
    let collisions: Vec<BitVector> = positives
        .iter()
        .filter(|(v, _)| neg_index.contains_key(v))
        .map(|(v, _)| v.clone())
        .collect();
    if !collisions.is_empty() {
        log::warn!(
            "{} binarized vectors occur with both labels: {}",
            collisions.len(),
            collisions
                .iter()
                .take(5)
                .map(|v| layout.format(v))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(BinarizedDataset {
        layout,
        positives,
        negatives,
        collisions,
    })
}

/// A maximal run of consecutive permitted intervals `first..=last`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub first: usize,
    pub last: usize,
    pub lo: f64,
    pub hi: f64,
    /// Starts at the first interval (unbounded below after clamping).
    pub from_min: bool,
    /// Ends at the last interval (closed, unbounded above after clamping).
    pub to_max: bool,
}

impl Range {
    pub fn contains(&self, index: usize) -> bool {
        (self.first..=self.last).contains(&index)
    }
}

/// The permitted values of one feature in a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Condition {
    Ranges { ranges: Vec<Range> },
    Categories { values: Vec<String>, indices: Vec<usize> },
}

impl Condition {
    /// Whether interval `index` of this feature is permitted.
    pub fn permits(&self, index: usize) -> bool {
        match self {
            Condition::Ranges { ranges } => ranges.iter().any(|r| r.contains(index)),
            Condition::Categories { indices, .. } => indices.contains(&index),
        }
    }
}

/// Per-feature conditions encoded by `a`: zeros mark permitted intervals.
/// `None` means the feature is unconstrained (its span is all zeros).
pub fn decode_point(
    a: &BitVector,
    layout: &BitLayout,
    disc: &Discretization,
) -> Result<Vec<Option<Condition>>, BinarizeError> {
    if a.width() != layout.width() {
        return Err(BinarizeError::WidthMismatch {
            expected: layout.width(),
            got: a.width(),
        });
    }
    layout
        .spans
        .iter()
        .zip(&disc.features)
        .map(|(span, fb)| {
            let permitted: Vec<usize> = (0..span.width).filter(|&z| !a.get(span.offset + z)).collect();
            if permitted.is_empty() {
                return Err(BinarizeError::Unsatisfiable(fb.name.clone()));
            }
            if permitted.len() == span.width {
                return Ok(None);
            }
            Ok(Some(match &fb.bins {
                Bins::Continuous { lo, cuts, hi } => {
                    let mut ranges: Vec<Range> = Vec::new();
                    for z in permitted {
                        match ranges.last_mut() {
                            Some(r) if r.last + 1 == z => r.last = z,
                            _ => ranges.push(Range {
                                first: z,
                                last: z,
                                lo: 0.0,
                                hi: 0.0,
                                from_min: false,
                                to_max: false,
                            }),
                        }
                    }
                    for r in &mut ranges {
                        r.lo = if r.first == 0 { *lo } else { cuts[r.first - 1] };
                        r.hi = if r.last == cuts.len() { *hi } else { cuts[r.last] };
                        r.from_min = r.first == 0;
                        r.to_max = r.last == cuts.len();
                    }
                    Condition::Ranges { ranges }
                }
                Bins::Categorical { values } => Condition::Categories {
                    values: permitted.iter().map(|&z| values[z].clone()).collect(),
                    indices: permitted,
                },
            }))
        })
        .collect()
}
