//! Choosing the final rules from the merged candidates.
//!
//! Candidates are optionally pre-filtered to the top `K` by exclusiveness
//! (`P / (P + N)`) and local support (`P / |D+|`), where `P` and `N` are the
//! positive and negative records a candidate covers. A greedy weighted set
//! cover then repeatedly picks the candidate maximizing
//!
//! ```text
//! alpha * P_new / |D+|  -  (1 - alpha) * N_new / |D-|
//! ```
//!
//! over records not yet covered, preferring more zero bits (more general
//! rules) on ties, and removes everything it covers.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binarize::BinarizedDataset;
use crate::lattice::BitVector;
use crate::synthesis::{BoundaryPoint, BoundarySet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("top_k must be at least 1")]
    TopK,
    #[error("candidate width {got} does not match dataset width {expected}")]
    WidthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub top_k: Option<usize>,
    pub max_rules: Option<usize>,
    /// Stop once the best marginal weight drops below this.
    pub min_weight: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha: 0.7,
            top_k: Some(500),
            max_rules: None,
            min_weight: 0.0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SelectionError::Alpha(self.alpha));
        }
        if self.top_k == Some(0) {
            return Err(SelectionError::TopK);
        }
        Ok(())
    }
}

/// Coverage of one candidate over the full training set, counting
/// multiplicity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateStats {
    pub positives: usize,
    pub negatives: usize,
    pub zeros: usize,
    /// Indices into the dataset's distinct positive / negative vectors.
    pub covered_positives: Vec<usize>,
    pub covered_negatives: Vec<usize>,
}

impl CandidateStats {
    pub fn exclusiveness(&self) -> f64 {
        let total = self.positives + self.negatives;
        if total == 0 {
            1.0
        } else {
            self.positives as f64 / total as f64
        }
    }

    pub fn local_support(&self, positive_total: usize) -> f64 {
        if positive_total == 0 {
            0.0
        } else {
            self.positives as f64 / positive_total as f64
        }
    }
}

/// Zero positions of every sample, for cheap `a <= x` tests: `a <= x`
/// iff `a` has no one where `x` has a zero.
enum ZeroIndex {
    /// Every sample has exactly one zero per feature span: `columns[f][k]`
    /// is the zero of sample `k` in feature `f`.
    Columns(Vec<Vec<u32>>),
    /// Anything else: all zeros of each sample.
    Rows(Vec<Vec<u32>>),
}

impl ZeroIndex {
    fn new(samples: &[(BitVector, usize)], bds: &BinarizedDataset) -> Self {
        let spans = &bds.layout.spans;
        let rows: Vec<Vec<u32>> = samples
            .iter()
            .map(|(x, _)| x.zeros_indices().into_iter().map(|z| z as u32).collect())
            .collect();
        let one_hot = rows
            .iter()
            .all(|z| z.len() == spans.len() && z.iter().zip(spans).all(|(&i, s)| s.range().contains(&(i as usize))));
        if !one_hot {
            return ZeroIndex::Rows(rows);
        }
        ZeroIndex::Columns((0..spans.len()).map(|f| rows.iter().map(|z| z[f]).collect()).collect())
    }

    /// Samples `x` with `a <= x`; `constrained` lists the features where
    /// `a` has a one (any other feature accepts every sample).
    fn covered(&self, a: &BitVector, constrained: &[usize], samples: &[(BitVector, usize)]) -> (usize, Vec<usize>) {
        let words = a.as_words();
        let one = |i: u32| words[i as usize / 64] >> (i % 64) & 1 == 1;
        let idx: Vec<usize> = match self {
            ZeroIndex::Columns(columns) => {
                let mut alive: Option<Vec<usize>> = None;
                for &f in constrained {
                    let col = &columns[f];
                    alive = Some(match alive {
                        None => (0..col.len()).filter(|&k| !one(col[k])).collect(),
                        Some(mut v) => {
                            v.retain(|&k| !one(col[k]));
                            v
                        }
                    });
                }
                alive.unwrap_or_else(|| (0..samples.len()).collect())
            }
            ZeroIndex::Rows(rows) => (0..samples.len())
                .filter(|&k| rows[k].iter().all(|&i| !one(i)))
                .collect(),
        };
        (idx.iter().map(|&k| samples[k].1).sum(), idx)
    }
}

pub fn compute_stats(candidates: &[BitVector], bds: &BinarizedDataset) -> Result<Vec<CandidateStats>, SelectionError> {
    let width = bds.layout.width();
    if let Some(a) = candidates.iter().find(|a| a.width() != width) {
        return Err(SelectionError::WidthMismatch {
            expected: width,
            got: a.width(),
        });
    }
    let pos_zeros = ZeroIndex::new(&bds.positives, bds);
    let neg_zeros = ZeroIndex::new(&bds.negatives, bds);
    Ok(candidates
        .par_iter()
        .map(|a| {
            // most restrictive features first, so the survivor list shrinks fast
            let mut ones = vec![0usize; bds.layout.spans.len()];
            for i in a.iter_ones() {
                if let Some(f) = bds.layout.feature_of(i) {
                    ones[f] += 1;
                }
            }
            let mut constrained: Vec<usize> = (0..ones.len()).filter(|&f| ones[f] > 0).collect();
            let share = |f: usize| ones[f] as f64 / bds.layout.spans[f].width as f64;
            constrained.sort_by(|&f, &g| share(g).total_cmp(&share(f)));
            let (positives, covered_positives) = pos_zeros.covered(a, &constrained, &bds.positives);
            let (negatives, covered_negatives) = neg_zeros.covered(a, &constrained, &bds.negatives);
            CandidateStats {
                positives,
                negatives,
                zeros: a.count_zeros(),
                covered_positives,
                covered_negatives,
            }
        })
        .collect())
}

fn rank_order(stats: &[CandidateStats], positive_total: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&stats[i], &stats[j]);
        b.exclusiveness()
            .total_cmp(&a.exclusiveness())
            .then_with(|| {
                b.local_support(positive_total)
                    .total_cmp(&a.local_support(positive_total))
            })
            .then_with(|| b.zeros.cmp(&a.zeros))
    });
    order
}

fn top_k_with_stats(
    set: &BoundarySet,
    bds: &BinarizedDataset,
    k: usize,
) -> Result<(BoundarySet, Vec<CandidateStats>), SelectionError> {
    if k == 0 {
        return Err(SelectionError::TopK);
    }
    let mut stats = compute_stats(&set.vectors(), bds)?;
    if k >= set.len() {
        return Ok((set.clone(), stats));
    }
    let mut order = rank_order(&stats, bds.positive_count());
    order.truncate(k);
    let points = order.iter().map(|&i| set.points[i].clone()).collect();
    let mut slots: Vec<Option<CandidateStats>> = stats.drain(..).map(Some).collect();
    let kept = order
        .iter()
        .map(|&i| slots[i].take().expect("indices are distinct"))
        .collect();
    Ok((BoundarySet { points }, kept))
}

/// Keeps the best `k` candidates by (exclusiveness, local support, zeros),
/// all descending, stable otherwise. The survivors keep their ranked order.
pub fn filter_top_k(set: &BoundarySet, bds: &BinarizedDataset, k: usize) -> Result<BoundarySet, SelectionError> {
    if k == 0 {
        return Err(SelectionError::TopK);
    }
    if k >= set.len() {
        return Ok(set.clone());
    }
    Ok(top_k_with_stats(set, bds, k)?.0)
}

/// One greedy pick, for the selection trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    pub iteration: usize,
    pub point: BitVector,
    pub weight: f64,
    pub new_positives: usize,
    pub new_negatives: usize,
    pub uncovered_positives: usize,
    pub uncovered_negatives: usize,
}

impl fmt::Display for SelectionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "select iter={} rule={} weight={:.6} new_pos={} new_neg={} uncovered_pos={} uncovered_neg={}",
            self.iteration,
            self.point,
            self.weight,
            self.new_positives,
            self.new_negatives,
            self.uncovered_positives,
            self.uncovered_negatives
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    AllPositivesCovered,
    CandidatesExhausted,
    MaxRules,
    BelowMinWeight,
    NoPositiveGain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chosen: Vec<BoundaryPoint>,
    pub steps: Vec<SelectionStep>,
    pub stop: StopReason,
}

impl Selection {
    pub fn vectors(&self) -> Vec<BitVector> {
        self.chosen.iter().map(|p| p.point.clone()).collect()
    }

    pub fn trace(&self) -> String {
        let mut s: String = self.steps.iter().map(|st| format!("{st}\n")).collect();
        s.push_str(&format!("stop reason={:?}\n", self.stop));
        s
    }
}

/// Greedy weighted set cover over `set`, in its given order.
pub fn weighted_set_cover(
    set: &BoundarySet,
    bds: &BinarizedDataset,
    cfg: &SelectionConfig,
) -> Result<Selection, SelectionError> {
    cfg.validate()?;
    let stats = compute_stats(&set.vectors(), bds)?;
    Ok(cover(set, &stats, bds, cfg))
}

fn cover(set: &BoundarySet, stats: &[CandidateStats], bds: &BinarizedDataset, cfg: &SelectionConfig) -> Selection {
    if set.is_empty() {
        log::warn!("no candidate rules to select from");
    }
    let pos_total = bds.positive_count() as f64;
    let neg_total = bds.negative_count() as f64;
    let mut pos_left: Vec<usize> = bds.positives.iter().map(|(_, m)| *m).collect();
    let mut neg_left: Vec<usize> = bds.negatives.iter().map(|(_, m)| *m).collect();
    let mut uncovered_pos: usize = pos_left.iter().sum();
    let mut uncovered_neg: usize = neg_left.iter().sum();
    let mut remaining: Vec<usize> = (0..set.len()).collect();
    let mut chosen = Vec::new();
    let mut steps = Vec::new();

    let stop = loop {
        if uncovered_pos == 0 {
            break StopReason::AllPositivesCovered;
        }
        if remaining.is_empty() {
            break StopReason::CandidatesExhausted;
        }
        if cfg.max_rules.is_some_and(|m| chosen.len() >= m) {
            break StopReason::MaxRules;
        }
        let gain = |c: usize| {
            let p: usize = stats[c].covered_positives.iter().map(|&k| pos_left[k]).sum();
            let n: usize = stats[c].covered_negatives.iter().map(|&k| neg_left[k]).sum();
            let mut w = cfg.alpha * p as f64 / pos_total;
            if neg_total > 0.0 {
                w -= (1.0 - cfg.alpha) * n as f64 / neg_total;
            }
            (w, p, n)
        };
        let mut best: Option<(usize, (f64, usize, usize))> = None;
        for (slot, &c) in remaining.iter().enumerate() {
            let g = gain(c);
            let better = match best {
                None => true,
                Some((bslot, bg)) => match g.0.total_cmp(&bg.0) {
                    Ordering::Greater => true,
                    Ordering::Equal => stats[c].zeros > stats[remaining[bslot]].zeros,
                    Ordering::Less => false,
                },
            };
            if better {
                best = Some((slot, g));
            }
        }
        let (slot, (weight, p, n)) = best.expect("remaining is non-empty");
        if p == 0 {
            break StopReason::NoPositiveGain;
        }
        if weight < cfg.min_weight {
            break StopReason::BelowMinWeight;
        }
        let c = remaining.remove(slot);
        for &k in &stats[c].covered_positives {
            pos_left[k] = 0;
        }
        for &k in &stats[c].covered_negatives {
            neg_left[k] = 0;
        }
        uncovered_pos -= p;
        uncovered_neg -= n;
        steps.push(SelectionStep {
            iteration: steps.len() + 1,
            point: set.points[c].point.clone(),
            weight,
            new_positives: p,
            new_negatives: n,
            uncovered_positives: uncovered_pos,
            uncovered_negatives: uncovered_neg,
        });
        chosen.push(set.points[c].clone());
    };
    Selection { chosen, steps, stop }
}

/// Top-K filtering (when configured) followed by the set cover. Returns
/// the candidates that entered the cover along with the selection; the
/// coverage statistics are computed once.
pub fn select_rules(
    set: &BoundarySet,
    bds: &BinarizedDataset,
    cfg: &SelectionConfig,
) -> Result<(BoundarySet, Selection), SelectionError> {
    cfg.validate()?;
    let (filtered, stats) = top_k_with_stats(set, bds, cfg.top_k.unwrap_or(usize::MAX))?;
    let selection = cover(&filtered, &stats, bds, cfg);
    Ok((filtered, selection))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarize::BitLayout;

    fn bds(pos: &[(&str, usize)], neg: &[(&str, usize)]) -> BinarizedDataset {
        let width = pos.iter().chain(neg).map(|(s, _)| s.len()).next().unwrap();
        BinarizedDataset {
            layout: BitLayout::from_widths([width]),
            positives: pos.iter().map(|(s, m)| (s.parse().unwrap(), *m)).collect(),
            negatives: neg.iter().map(|(s, m)| (s.parse().unwrap(), *m)).collect(),
            collisions: vec![],
        }
    }

    fn set(points: &[&str]) -> BoundarySet {
        BoundarySet {
            points: points
                .iter()
                .map(|s| BoundaryPoint {
                    point: s.parse().unwrap(),
                    provenance: vec![],
                })
                .collect(),
        }
    }

    fn appendix() -> BinarizedDataset {
        bds(
            &[("11001", 1), ("10110", 1)],
            &[("01101", 2), ("01110", 1), ("10101", 3)],
        )
    }

    #[test]
    fn appendix_keeps_both_points() {
        let cfg = SelectionConfig {
            alpha: 1.0,
            ..Default::default()
        };
        let sel = weighted_set_cover(&set(&["11000", "10010"]), &appendix(), &cfg).unwrap();
        assert_eq!(sel.vectors(), set(&["11000", "10010"]).vectors());
        assert_eq!(sel.stop, StopReason::AllPositivesCovered);
    }

    #[test]
    fn stats_examples() {
        let d = appendix();
        let s = compute_stats(&["00000".parse().unwrap(), "11001".parse().unwrap()], &d).unwrap();
        assert_eq!((s[0].positives, s[0].negatives, s[0].zeros), (2, 6, 5));
        assert!(s[1].positives >= 1);
        assert!(compute_stats(&["000".parse().unwrap()], &d).is_err());
    }

    #[test]
    fn per_feature_counts_agree_with_leq() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let widths = [3, 4, 2];
        let layout = BitLayout::from_widths(widths);
        let row = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut v = BitVector::ones(9);
            for s in &layout.spans {
                v.clear(s.range().start + rng.gen_range(0..s.range().len()));
            }
            (v, rng.gen_range(1..3))
        };
        let d = BinarizedDataset {
            layout: layout.clone(),
            positives: (0..40).map(|_| row(&mut rng)).collect(),
            negatives: (0..40).map(|_| row(&mut rng)).collect(),
            collisions: vec![],
        };
        let cands: Vec<BitVector> = (0..50)
            .map(|_| BitVector::from_bools(&(0..9).map(|_| rng.gen_bool(0.3)).collect::<Vec<_>>()))
            .collect();
        for (a, s) in cands.iter().zip(compute_stats(&cands, &d).unwrap()) {
            let count = |v: &[(BitVector, usize)]| v.iter().filter(|(x, _)| a.leq(x)).map(|(_, m)| m).sum::<usize>();
            assert_eq!(
                (s.positives, s.negatives),
                (count(&d.positives), count(&d.negatives)),
                "{a}"
            );
        }
    }

    // brute-force double loop over the expanded records
    #[test]
    fn stats_match_brute_force() {
        let d = bds(&[("1101", 2), ("0111", 1), ("1011", 3)], &[("1110", 1), ("0101", 4)]);
        let cands: Vec<BitVector> = ["0001", "0100", "1000", "0000", "1100"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let stats = compute_stats(&cands, &d).unwrap();
        let expand = |v: &[(BitVector, usize)]| -> Vec<BitVector> {
            v.iter().flat_map(|(x, m)| std::iter::repeat_n(x.clone(), *m)).collect()
        };
        let (pos, neg) = (expand(&d.positives), expand(&d.negatives));
        for (a, s) in cands.iter().zip(&stats) {
            let p = pos.iter().filter(|x| (0..4).all(|i| !a.get(i) || x.get(i))).count();
            let n = neg.iter().filter(|x| (0..4).all(|i| !a.get(i) || x.get(i))).count();
            assert_eq!((s.positives, s.negatives), (p, n), "{a}");
        }
        // frozen values
        assert_eq!(
            stats.iter().map(|s| (s.positives, s.negatives)).collect::<Vec<_>>(),
            vec![(6, 4), (3, 5), (5, 1), (6, 5), (2, 1)]
        );
    }

    #[test]
    fn top_k_ranking() {
        let d = bds(&[("1101", 2), ("0111", 1), ("1011", 3)], &[("1110", 1), ("0101", 4)]);
        let s = set(&["0001", "0100", "1000", "0000", "1100"]);
        // exclusiveness: 6/10, 3/8, 5/6, 6/11, 2/3
        let top = filter_top_k(&s, &d, 3).unwrap();
        assert_eq!(top.vectors(), set(&["1000", "1100", "0001"]).vectors());
        assert_eq!(filter_top_k(&s, &d, 5).unwrap(), s);
        assert_eq!(filter_top_k(&s, &d, 9).unwrap(), s);
        assert!(filter_top_k(&s, &d, 0).is_err());
    }

    #[test]
    fn pure_candidate_outranks_broad_one() {
        let d = bds(&[("110", 1), ("101", 5)], &[("011", 1)]);
        // "100" covers every positive and nothing else; "001" covers 5
        // positives and the negative
        let s = set(&["001", "110"]);
        let top = filter_top_k(&s, &d, 1).unwrap();
        assert_eq!(top.vectors(), set(&["110"]).vectors());
    }

    #[test]
    fn max_rules_caps_selection() {
        let d = bds(&[("1100", 1), ("0110", 1), ("0011", 1), ("1001", 1)], &[]);
        let s = set(&["1100", "0110", "0011", "1001"]);
        let cfg = SelectionConfig {
            alpha: 1.0,
            max_rules: Some(3),
            ..Default::default()
        };
        let sel = weighted_set_cover(&s, &d, &cfg).unwrap();
        assert_eq!(sel.chosen.len(), 3);
        assert_eq!(sel.stop, StopReason::MaxRules);
    }

    #[test]
    fn ties_prefer_more_zeros() {
        let d = bds(&[("111", 1)], &[]);
        let sel = weighted_set_cover(&set(&["110", "100"]), &d, &SelectionConfig::default()).unwrap();
        assert_eq!(sel.vectors(), set(&["100"]).vectors());
    }

    #[test]
    fn negative_weight_rules_are_not_added() {
        let d = bds(&[("11", 1)], &[("11", 9), ("10", 1)]);
        let cfg = SelectionConfig {
            alpha: 0.3,
            ..Default::default()
        };
        // weight = 0.3 * 1 - 0.7 * 10/10 < 0
        let sel = weighted_set_cover(&set(&["10"]), &d, &cfg).unwrap();
        assert!(sel.chosen.is_empty());
        assert_eq!(sel.stop, StopReason::BelowMinWeight);
    }

    #[test]
    fn empty_candidates() {
        let sel = weighted_set_cover(&BoundarySet::default(), &appendix(), &SelectionConfig::default()).unwrap();
        assert!(sel.chosen.is_empty());
        assert_eq!(sel.stop, StopReason::CandidatesExhausted);
    }

    #[test]
    fn alpha_validation() {
        let cfg = SelectionConfig {
            alpha: 1.5,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(SelectionError::Alpha(1.5)));
    }
}
