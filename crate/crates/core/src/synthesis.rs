//! The bottom-up weak learner.
//!
//! Starting from an uncovered positive sample `x`, bits of `x` are cleared
//! one at a time (each clear generalizes the rule `x` stands for) until no
//! further bit can be cleared without the point being covered by a negative
//! sample. The result is a boundary point: it covers `x`, covers no negative,
//! and every single-bit generalization of it would cover a negative.
//!
//! Which bit to clear next is decided greedily per candidate bit `i` from
//! three statistics:
//!
//! * `uncovered_zeros`: uncovered positives with a zero at `i`,
//! * `positive_zeros`: all positives with a zero at `i`,
//! * `distance`: the smallest [`BitVector::distance`] from the current point
//!   to a negative with a zero at `i`, or `None` when there is no such
//!   negative.
//!
//! A distance of exactly one means clearing `i` would produce a conflict, so
//! the bit is frozen. [`Heuristic::CoverageFirst`] ranks the remaining bits
//! by `(uncovered_zeros, positive_zeros, distance)`,
//! [`Heuristic::DistanceFirst`] by `(distance, uncovered_zeros,
//! positive_zeros)`; the lexicographic maximum wins, `None` ranks above any
//! finite distance, and ties go to the lowest bit.
//!
//! Distances are computed once per sample and then maintained incrementally:
//! clearing bit `b` lowers by one the distance to exactly those negatives
//! with a zero at `b`, and a per-bit minimum can only decrease.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{BitVector, IndexSets};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthesisError {
    #[error("no positive samples")]
    EmptyPositives,
    #[error("samples have mixed widths ({0} and {1})")]
    WidthMismatch(usize, usize),
    #[error("width {width} exceeds the exhaustive search cap of {cap}")]
    WidthOverCap { width: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Heuristic {
    /// Coverage first: `(uncovered_zeros, positive_zeros, distance)`.
    #[default]
    #[serde(rename = "H1")]
    CoverageFirst,
    /// Distance first: `(distance, uncovered_zeros, positive_zeros)`.
    #[serde(rename = "H2")]
    DistanceFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrder {
    /// Always pick the first uncovered positive.
    #[default]
    DatasetOrder,
    /// Visit positives in a seeded random permutation.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LearnerConfig {
    #[serde(default)]
    pub heuristic: Heuristic,
    #[serde(default)]
    pub sample_order: SampleOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexStats {
    pub uncovered_zeros: usize,
    pub positive_zeros: usize,
    pub distance: Option<usize>,
}

impl IndexStats {
    fn key(&self, heuristic: Heuristic) -> Key {
        let d = self.distance.unwrap_or(usize::MAX);
        match heuristic {
            Heuristic::CoverageFirst => (self.uncovered_zeros, self.positive_zeros, d),
            Heuristic::DistanceFirst => (d, self.uncovered_zeros, self.positive_zeros),
        }
    }
}

/// Lexicographic maximum of the heuristic tuple; lowest index on ties.
pub fn select_best_index(candidates: &[(usize, IndexStats)], heuristic: Heuristic) -> Option<usize> {
    candidates
        .iter()
        .max_by(|(i, a), (j, b)| a.key(heuristic).cmp(&b.key(heuristic)).then_with(|| j.cmp(i)))
        .map(|(i, _)| *i)
}

/// One step of the search, for the line-oriented trace. Bits print
/// one-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Sample { x: BitVector, sets: IndexSets },
    Stats { index: usize, stats: IndexStats },
    Freeze { index: usize, sets: IndexSets },
    Flip { index: usize, sets: IndexSets },
    Distance { index: usize, distance: Option<usize> },
    Emit { point: BitVector, added: bool },
    Unresolvable { x: BitVector },
}

fn fmt_set(f: &mut fmt::Formatter<'_>, name: &str, set: &[usize]) -> fmt::Result {
    let mut s: Vec<usize> = set.iter().map(|i| i + 1).collect();
    s.sort_unstable();
    let body: Vec<String> = s.iter().map(|i| i.to_string()).collect();
    write!(f, "{name}={{{}}}", body.join(","))
}

fn fmt_sets(f: &mut fmt::Formatter<'_>, sets: &IndexSets) -> fmt::Result {
    fmt_set(f, "I", &sets.flippable)?;
    f.write_str(" ")?;
    fmt_set(f, "J", &sets.frozen)
}

fn fmt_dist(d: Option<usize>) -> String {
    d.map_or_else(|| "undefined".to_string(), |d| d.to_string())
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Sample { x, sets } => {
                write!(f, "sample {x} ")?;
                fmt_sets(f, sets)
            }
            TraceEvent::Stats { index, stats } => write!(
                f,
                "stats bit={} s0={} dplus0={} dist={}",
                index + 1,
                stats.uncovered_zeros,
                stats.positive_zeros,
                fmt_dist(stats.distance)
            ),
            TraceEvent::Freeze { index, sets } => {
                write!(f, "freeze bit={} ", index + 1)?;
                fmt_sets(f, sets)
            }
            TraceEvent::Flip { index, sets } => {
                write!(f, "flip bit={} ", index + 1)?;
                fmt_sets(f, sets)
            }
            TraceEvent::Distance { index, distance } => {
                write!(f, "dist bit={} value={}", index + 1, fmt_dist(*distance))
            }
            TraceEvent::Emit { point, added: true } => write!(f, "emit {point}"),
            TraceEvent::Emit { point, added: false } => write!(f, "covered {point}"),
            TraceEvent::Unresolvable { x } => write!(f, "unresolvable {x}"),
        }
    }
}

/// Renders a trace, one event per line.
pub fn render_trace(events: &[TraceEvent]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}

/// Output of one learner run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Boundary {
    pub points: Vec<BitVector>,
    /// Positives covered by some negative (`x <= y`); no conflict-free point
    /// can cover them.
    pub unresolvable: Vec<BitVector>,
}

/// Which estimator (and which original features) produced a point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub estimator: usize,
    pub features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryPoint {
    pub point: BitVector,
    pub provenance: Vec<Provenance>,
}

/// Candidate points with provenance, duplicate-free, in discovery order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundarySet {
    pub points: Vec<BoundaryPoint>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn vectors(&self) -> Vec<BitVector> {
        self.points.iter().map(|p| p.point.clone()).collect()
    }
}

/// Rows of small integers stored back to back.
struct Incidence {
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl Incidence {
    fn from_rows(rows: impl IntoIterator<Item = Vec<u32>>) -> Self {
        let mut offsets = vec![0];
        let mut items = Vec::new();
        for r in rows {
            items.extend(r);
            offsets.push(items.len());
        }
        Incidence { offsets, items }
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.items[self.offsets[i]..self.offsets[i + 1]]
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Dataset-level lookup tables shared by every search.
struct Tables<'a> {
    width: usize,
    dplus: &'a [BitVector],
    dminus: &'a [BitVector],
    /// Zero bits of each negative.
    neg_zero_bits: Incidence,
    /// Negatives with a zero at each bit.
    negs_with_zero: Incidence,
    positive_zeros: Vec<usize>,
}

impl<'a> Tables<'a> {
    fn new(dplus: &'a [BitVector], dminus: &'a [BitVector]) -> Result<Self, SynthesisError> {
        let first = dplus.first().ok_or(SynthesisError::EmptyPositives)?;
        let width = first.width();
        if let Some(v) = dplus.iter().chain(dminus).find(|v| v.width() != width) {
            return Err(SynthesisError::WidthMismatch(width, v.width()));
        }
        let neg_zero_bits = Incidence::from_rows(
            dminus
                .iter()
                .map(|y| y.zeros_indices().into_iter().map(|i| i as u32).collect()),
        );
        let mut by_bit = vec![Vec::new(); width];
        for k in 0..neg_zero_bits.len() {
            for &z in neg_zero_bits.row(k) {
                by_bit[z as usize].push(k as u32);
            }
        }
        let negs_with_zero = Incidence::from_rows(by_bit);
        let mut positive_zeros = vec![0; width];
        for x in dplus {
            for z in x.zeros_indices() {
                positive_zeros[z] += 1;
            }
        }
        Ok(Tables {
            width,
            dplus,
            dminus,
            neg_zero_bits,
            negs_with_zero,
            positive_zeros,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BitStatus {
    Off,
    Flippable,
    Frozen,
}

/// Generalization state of one positive sample: the current point
/// `p(I ∪ J)`, the status of every bit and the distance from the point to
/// every negative.
///
/// Only the per-negative distances are maintained on a flip. A bit's
/// distance is the minimum over the negatives with a zero there and is
/// read on demand. Bit selection uses a max-heap whose keys are upper
/// bounds (distances only shrink): the top entry is re-keyed until its
/// stored key is exact, at which point it is the true maximum.
pub struct SearchState<'t> {
    tables: &'t Tables<'t>,
    uncovered_zeros: &'t [usize],
    current: BitVector,
    status: Vec<BitStatus>,
    neg_dist: Vec<u32>,
    /// Bits whose flip would now reach a negative, not yet frozen.
    pending_freeze: Vec<usize>,
    heap: Option<(Heuristic, KeyHeap)>,
}

type Key = (usize, usize, usize);
type KeyHeap = BinaryHeap<(Key, Reverse<usize>)>;

impl<'t> SearchState<'t> {
    fn new(tables: &'t Tables<'t>, uncovered_zeros: &'t [usize], x: &BitVector) -> Self {
        let mut status = vec![BitStatus::Off; tables.width];
        for i in x.iter_ones() {
            status[i] = BitStatus::Flippable;
        }
        // binarized negatives have one zero per feature, so walking their
        // zeros beats a full-width popcount
        let neg_dist: Vec<u32> = (0..tables.dminus.len())
            .map(|k| {
                tables
                    .neg_zero_bits
                    .row(k)
                    .iter()
                    .filter(|&&z| x.get(z as usize))
                    .count() as u32
            })
            .collect();
        let mut state = SearchState {
            tables,
            uncovered_zeros,
            current: x.clone(),
            status,
            neg_dist,
            pending_freeze: Vec::new(),
            heap: None,
        };
        for k in 0..state.neg_dist.len() {
            if state.neg_dist[k] == 1 {
                state.note_conflict(k);
            }
        }
        state
    }

    /// Negative `k` is at distance one: the single bit where the point has
    /// a one and `k` a zero can no longer be flipped.
    fn note_conflict(&mut self, k: usize) {
        for &z in self.tables.neg_zero_bits.row(k) {
            if self.current.get(z as usize) {
                self.pending_freeze.push(z as usize);
                return;
            }
        }
    }

    /// Current `I` (flippable) and `J` (frozen) sets, ascending.
    pub fn sets(&self) -> IndexSets {
        let pick = |want| (0..self.status.len()).filter(|&i| self.status[i] == want).collect();
        IndexSets {
            flippable: pick(BitStatus::Flippable),
            frozen: pick(BitStatus::Frozen),
        }
    }

    /// `p(I ∪ J)`.
    pub fn point(&self) -> &BitVector {
        &self.current
    }

    fn distance(&self, i: usize) -> Option<usize> {
        self.tables
            .negs_with_zero
            .row(i)
            .iter()
            .map(|&k| self.neg_dist[k as usize] as usize)
            .min()
    }

    /// Statistics of a flippable bit.
    pub fn stats(&self, i: usize) -> IndexStats {
        IndexStats {
            uncovered_zeros: self.uncovered_zeros[i],
            positive_zeros: self.tables.positive_zeros[i],
            distance: self.distance(i),
        }
    }

    pub fn candidates(&self) -> Vec<(usize, IndexStats)> {
        (0..self.status.len())
            .filter(|&i| self.status[i] == BitStatus::Flippable)
            .map(|i| (i, self.stats(i)))
            .collect()
    }

    /// Moves every flippable bit at distance one to the frozen set; returns
    /// the bits moved, ascending.
    pub fn freeze_conflicting(&mut self) -> Vec<usize> {
        let mut frozen = std::mem::take(&mut self.pending_freeze);
        frozen.retain(|&i| self.status[i] == BitStatus::Flippable);
        frozen.sort_unstable();
        frozen.dedup();
        for &i in &frozen {
            self.status[i] = BitStatus::Frozen;
        }
        frozen
    }

    pub fn best_index(&mut self, heuristic: Heuristic) -> Option<usize> {
        if self.heap.as_ref().is_none_or(|(h, _)| *h != heuristic) {
            let heap = (0..self.status.len())
                .filter(|&i| self.status[i] == BitStatus::Flippable)
                .map(|i| (self.stats(i).key(heuristic), Reverse(i)))
                .collect();
            self.heap = Some((heuristic, heap));
        }
        loop {
            let (_, heap) = self.heap.as_mut().expect("built above");
            let (key, Reverse(i)) = *heap.peek()?;
            if self.status[i] != BitStatus::Flippable {
                heap.pop();
                continue;
            }
            let exact = self.stats(i).key(heuristic);
            if exact == key {
                return Some(i);
            }
            let (_, heap) = self.heap.as_mut().expect("built above");
            heap.pop();
            heap.push((exact, Reverse(i)));
        }
    }

    /// Clears flippable bit `b` and updates the distances of the negatives
    /// with a zero at `b`.
    pub fn flip(&mut self, b: usize) {
        assert_eq!(self.status[b], BitStatus::Flippable, "bit {b} is not flippable");
        self.status[b] = BitStatus::Off;
        self.current.clear(b);
        for &k in self.tables.negs_with_zero.row(b) {
            let k = k as usize;
            self.neg_dist[k] -= 1;
            if self.neg_dist[k] == 1 {
                self.note_conflict(k);
            }
        }
        if cfg!(debug_assertions) && self.tables.dminus.len() * self.tables.width <= 1 << 12 {
            for (k, y) in self.tables.dminus.iter().enumerate() {
                debug_assert_eq!(self.neg_dist[k] as usize, self.current.distance(y), "negative {k}");
            }
        }
    }

    /// The distance of bit `i` computed from scratch.
    pub fn recomputed_distance(&self, i: usize) -> Option<usize> {
        self.current
            .distance_to_set(self.tables.dminus.iter().filter(|y| !y.get(i)))
    }
}

/// Runs the greedy search over a fixed pair of sample sets.
pub struct BoundaryLearner<'a> {
    tables: Tables<'a>,
    config: LearnerConfig,
    uncovered: Vec<bool>,
    uncovered_zeros: Vec<usize>,
    points: Vec<BitVector>,
    unresolvable: Vec<usize>,
    trace: Option<Vec<TraceEvent>>,
}

impl<'a> BoundaryLearner<'a> {
    /// `dplus` and `dminus` are expected to be distinct vectors.
    pub fn new(dplus: &'a [BitVector], dminus: &'a [BitVector], config: LearnerConfig) -> Result<Self, SynthesisError> {
        let tables = Tables::new(dplus, dminus)?;
        let mut uncovered = vec![true; dplus.len()];
        let mut unresolvable = Vec::new();
        // x <= y with equal popcounts means x == y, so only negatives with
        // more ones need a containment scan
        let neg_set: HashSet<&BitVector> = dminus.iter().collect();
        let mut by_count: Vec<(usize, &BitVector)> = dminus.iter().map(|y| (y.count_ones(), y)).collect();
        by_count.sort_by_key(|(c, _)| *c);
        for (k, x) in dplus.iter().enumerate() {
            let ones = x.count_ones();
            let above = by_count.partition_point(|(c, _)| *c <= ones);
            if neg_set.contains(x) || by_count[above..].iter().any(|(_, y)| x.leq(y)) {
                uncovered[k] = false;
                unresolvable.push(k);
            }
        }
        if !unresolvable.is_empty() {
            log::debug!(
                "{} positive samples are covered by a negative and cannot be separated",
                unresolvable.len()
            );
        }
        let mut uncovered_zeros = vec![0; tables.width];
        for (x, _) in dplus.iter().zip(&uncovered).filter(|(_, u)| **u) {
            for z in x.zeros_indices() {
                uncovered_zeros[z] += 1;
            }
        }
        Ok(BoundaryLearner {
            tables,
            config,
            uncovered,
            uncovered_zeros,
            points: Vec::new(),
            unresolvable,
            trace: None,
        })
    }

    /// Records a [`TraceEvent`] log while running.
    pub fn with_trace(mut self) -> Self {
        let mut events: Vec<TraceEvent> = Vec::new();
        for &k in &self.unresolvable {
            events.push(TraceEvent::Unresolvable {
                x: self.tables.dplus[k].clone(),
            });
        }
        self.trace = Some(events);
        self
    }

    pub fn is_uncovered(&self, k: usize) -> bool {
        self.uncovered[k]
    }

    /// Fresh search state for positive `k` against the current `S`.
    pub fn search(&self, k: usize) -> SearchState<'_> {
        SearchState::new(&self.tables, &self.uncovered_zeros, &self.tables.dplus[k])
    }

    fn log(&mut self, e: impl FnOnce() -> TraceEvent) {
        if let Some(t) = &mut self.trace {
            t.push(e());
        }
    }

    /// Generalizes positive `k` into a boundary point, adds it unless an
    /// existing point already covers it, and removes newly covered samples
    /// from `S`. Returns the point when it was added.
    pub fn find_boundary_point(&mut self, k: usize) -> Option<BitVector> {
        let heuristic = self.config.heuristic;
        let tracing = self.trace.is_some();
        let mut events = Vec::new();
        let point = {
            let mut state = self.search(k);
            if tracing {
                events.push(TraceEvent::Sample {
                    x: state.point().clone(),
                    sets: state.sets(),
                });
                for (index, stats) in state.candidates() {
                    events.push(TraceEvent::Stats { index, stats });
                }
            }
            loop {
                let mut sets = if tracing { Some(state.sets()) } else { None };
                for index in state.freeze_conflicting() {
                    if let Some(sets) = &mut sets {
                        // one event per bit, each showing the sets right after its move
                        sets.flippable.retain(|&i| i != index);
                        sets.frozen.push(index);
                        sets.frozen.sort_unstable();
                        events.push(TraceEvent::Freeze {
                            index,
                            sets: sets.clone(),
                        });
                    }
                }
                let Some(best) = state.best_index(heuristic) else { break };
                state.flip(best);
                if tracing {
                    events.push(TraceEvent::Flip {
                        index: best,
                        sets: state.sets(),
                    });
                    for &index in &state.sets().flippable {
                        events.push(TraceEvent::Distance {
                            index,
                            distance: state.distance(index),
                        });
                    }
                }
            }
            state.current
        };
        if let Some(t) = &mut self.trace {
            t.append(&mut events);
        }

        let added = !self.points.iter().any(|a| a.leq(&point));
        self.log(|| TraceEvent::Emit {
            point: point.clone(),
            added,
        });
        if !added {
            return None;
        }
        for (j, x) in self.tables.dplus.iter().enumerate() {
            if self.uncovered[j] && point.leq(x) {
                self.uncovered[j] = false;
                for z in x.zeros_indices() {
                    self.uncovered_zeros[z] -= 1;
                }
            }
        }
        self.points.push(point.clone());
        Some(point)
    }

    /// Runs until every resolvable positive is covered.
    pub fn run(mut self) -> (Boundary, Option<Vec<TraceEvent>>) {
        let n = self.tables.dplus.len();
        let order: Vec<usize> = match self.config.sample_order {
            SampleOrder::DatasetOrder => (0..n).collect(),
            SampleOrder::Shuffled { seed } => {
                let mut o: Vec<usize> = (0..n).collect();
                o.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                o
            }
        };
        for k in order {
            if self.uncovered[k] {
                self.find_boundary_point(k);
            }
        }
        let boundary = Boundary {
            points: self.points,
            unresolvable: self
                .unresolvable
                .iter()
                .map(|&k| self.tables.dplus[k].clone())
                .collect(),
        };
        (boundary, self.trace)
    }
}

/// Greedy boundary of `(dplus, dminus)`; inputs should be distinct vectors.
pub fn find_boundary(
    dplus: &[BitVector],
    dminus: &[BitVector],
    config: LearnerConfig,
) -> Result<Boundary, SynthesisError> {
    Ok(BoundaryLearner::new(dplus, dminus, config)?.run().0)
}

/// Like [`find_boundary`], also returning the search trace.
pub fn find_boundary_traced(
    dplus: &[BitVector],
    dminus: &[BitVector],
    config: LearnerConfig,
) -> Result<(Boundary, Vec<TraceEvent>), SynthesisError> {
    let (b, t) = BoundaryLearner::new(dplus, dminus, config)?.with_trace().run();
    Ok((b, t.unwrap_or_default()))
}

pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Every boundary point of `(dplus, dminus)` by exhaustive search over the
/// whole lattice: elements that cover a positive, cover no negative, and
/// whose every single-bit flip-off covers a negative. Sorted ascending.
pub fn enumerate_boundary(
    dplus: &[BitVector],
    dminus: &[BitVector],
    cap: usize,
) -> Result<Vec<BitVector>, SynthesisError> {
    let width = dplus
        .iter()
        .chain(dminus)
        .map(|v| v.width())
        .next()
        .ok_or(SynthesisError::EmptyPositives)?;
    if let Some(v) = dplus.iter().chain(dminus).find(|v| v.width() != width) {
        return Err(SynthesisError::WidthMismatch(width, v.width()));
    }
    if width > cap.min(31) {
        return Err(SynthesisError::WidthOverCap { width, cap });
    }
    let to_mask = |v: &BitVector| v.iter_ones().fold(0u32, |m, i| m | 1 << i);
    let size = 1usize << width;
    // below[m]: m is contained in some listed sample (downward closure)
    let closure = |samples: &[BitVector]| {
        let mut below = vec![false; size];
        for v in samples {
            below[to_mask(v) as usize] = true;
        }
        for m in (0..size).rev() {
            if below[m] {
                continue;
            }
            below[m] = (0..width).any(|b| m & (1 << b) == 0 && below[m | 1 << b]);
        }
        below
    };
    let covers_positive = closure(dplus);
    let conflicts = closure(dminus);
    let mut out = Vec::new();
    for m in 0..size {
        if !covers_positive[m] || conflicts[m] {
            continue;
        }
        if (0..width).all(|b| m & (1 << b) == 0 || conflicts[m & !(1 << b)]) {
            out.push(BitVector::from_indices((0..width).filter(|b| m & (1 << b) != 0), width).expect("in range"));
        }
    }
    out.sort();
    Ok(out)
}
