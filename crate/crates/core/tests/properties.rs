use proptest::prelude::*;

use rulelattice::binarize::{BinarizedDataset, BitLayout};
use rulelattice::config::RunConfig;
use rulelattice::data::{RawDataset, Record, Value};
use rulelattice::eval::score;
use rulelattice::lattice::{BitVector, IndexSets};
use rulelattice::model::RuleSet;
use rulelattice::pipeline::train;
use rulelattice::selection::{filter_top_k, select_rules, weighted_set_cover, SelectionConfig};
use rulelattice::synthesis::{find_boundary, BoundaryPoint, BoundarySet, Heuristic, LearnerConfig};

fn bits(width: usize) -> impl Strategy<Value = BitVector> {
    prop::collection::vec(any::<bool>(), width).prop_map(|b| BitVector::from_bools(&b))
}

fn triple() -> impl Strategy<Value = (BitVector, BitVector, BitVector)> {
    (1usize..130).prop_flat_map(|w| (bits(w), bits(w), bits(w)))
}

/// Inverse one-hot row: ones everywhere except one zero per span.
fn encode(layout: &BitLayout, picks: &[usize]) -> BitVector {
    let mut v = BitVector::ones(layout.width());
    for (span, &p) in layout.spans.iter().zip(picks) {
        v.clear(span.offset + p % span.width);
    }
    v
}

/// A small encoded dataset with disjoint, duplicate-free classes.
fn dataset() -> impl Strategy<Value = BinarizedDataset> {
    let widths = prop::collection::vec(2usize..5, 1..5);
    widths
        .prop_flat_map(|widths| {
            let rows = prop::collection::vec(
                (prop::collection::vec(0usize..4, widths.len()), any::<bool>(), 1usize..4),
                1..40,
            );
            (Just(widths), rows).prop_map(|(widths, rows)| {
                let layout = BitLayout::from_widths(widths);
                let mut bds = BinarizedDataset {
                    layout,
                    positives: vec![],
                    negatives: vec![],
                    collisions: vec![],
                };
                let mut seen = std::collections::HashSet::new();
                for (picks, positive, mult) in rows {
                    let v = encode(&bds.layout, &picks);
                    if seen.insert(v.clone()) {
                        if positive {
                            bds.positives.push((v, mult));
                        } else {
                            bds.negatives.push((v, mult));
                        }
                    }
                }
                bds
            })
        })
        .prop_filter("needs a positive", |bds| !bds.positives.is_empty())
}

fn heuristic() -> impl Strategy<Value = Heuristic> {
    prop_oneof![Just(Heuristic::CoverageFirst), Just(Heuristic::DistanceFirst)]
}

fn candidates(bds: &BinarizedDataset, h: Heuristic) -> BoundarySet {
    let b = find_boundary(
        &bds.positive_vectors(),
        &bds.negative_vectors(),
        LearnerConfig {
            heuristic: h,
            ..LearnerConfig::default()
        },
    )
    .unwrap();
    BoundarySet {
        points: b
            .points
            .into_iter()
            .map(|point| BoundaryPoint {
                point,
                provenance: vec![],
            })
            .collect(),
    }
}

fn covered_positives(points: &[BitVector], bds: &BinarizedDataset) -> usize {
    bds.positives
        .iter()
        .filter(|(x, _)| points.iter().any(|a| a.leq(x)))
        .map(|(_, m)| m)
        .sum()
}

fn pure_cover() -> SelectionConfig {
    SelectionConfig {
        alpha: 1.0,
        top_k: None,
        max_rules: None,
        min_weight: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn leq_is_a_partial_order((x, y, z) in triple()) {
        prop_assert!(x.leq(&x));
        if x.leq(&y) && y.leq(&x) {
            prop_assert_eq!(&x, &y);
        }
        if x.leq(&y) && y.leq(&z) {
            prop_assert!(x.leq(&z));
        }
    }

    #[test]
    fn zero_distance_is_leq((x, y, _z) in triple()) {
        prop_assert_eq!(x.distance(&y) == 0, x.leq(&y));
    }

    #[test]
    fn flip_off_moves_down((x, y, _z) in triple(), pick in any::<prop::sample::Index>()) {
        let k = pick.index(x.width());
        let z = x.flip_off(k).unwrap();
        prop_assert!(z.leq(&x));
        let drop = usize::from(x.get(k) && !y.get(k));
        prop_assert_eq!(z.distance(&y), x.distance(&y) - drop);
    }

    #[test]
    fn project_inverts_embed(mask in (1usize..200).prop_flat_map(bits), seed in any::<u64>()) {
        let n = mask.count_ones();
        let a = BitVector::from_bools(&(0..n).map(|i| (seed >> (i % 64)) & 1 == 1).collect::<Vec<_>>());
        let full = a.embed(&mask).unwrap();
        prop_assert!(full.leq(&mask));
        prop_assert_eq!(full.project(&mask).unwrap(), a);
        let all = BitVector::ones(mask.width());
        prop_assert_eq!(mask.project(&all).unwrap(), mask.clone());
    }

    #[test]
    fn materialize_keeps_index_sets(x in (1usize..100).prop_flat_map(bits), split in any::<u64>()) {
        let ones = x.ones_indices();
        let (frozen, flippable): (Vec<usize>, Vec<usize>) = ones.iter().partition(|&&i| (split >> (i % 64)) & 1 == 1);
        let sets = IndexSets { flippable, frozen };
        prop_assert_eq!(sets.materialize(x.width()).unwrap(), x);
    }

    #[test]
    fn encoded_rows_are_incomparable(widths in prop::collection::vec(2usize..6, 1..6), a in prop::collection::vec(0usize..6, 6), b in prop::collection::vec(0usize..6, 6)) {
        let layout = BitLayout::from_widths(widths);
        let x = encode(&layout, &a);
        let y = encode(&layout, &b);
        prop_assert_eq!(x.width(), layout.width());
        if x != y {
            prop_assert!(!x.leq(&y) && !y.leq(&x));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn learned_points_are_boundary_points(bds in dataset(), h in heuristic()) {
        let set = candidates(&bds, h);
        let neg = bds.negative_vectors();
        for a in set.vectors() {
            prop_assert!(bds.positives.iter().any(|(x, _)| a.leq(x)));
            prop_assert!(!neg.iter().any(|y| a.leq(y)));
            for k in a.ones_indices() {
                let lower = a.flip_off(k).unwrap();
                prop_assert!(neg.iter().any(|y| lower.leq(y)), "{} can still drop bit {}", a, k);
            }
        }
        prop_assert_eq!(covered_positives(&set.vectors(), &bds), bds.positive_count());
    }

    #[test]
    fn pure_cover_reaches_union_coverage(bds in dataset(), h in heuristic(), alpha in 0.0f64..=1.0) {
        let set = candidates(&bds, h);
        let union = covered_positives(&set.vectors(), &bds);
        let pure = weighted_set_cover(&set, &bds, &pure_cover()).unwrap();
        prop_assert_eq!(covered_positives(&pure.vectors(), &bds), union);
        let weights: Vec<f64> = pure.steps.iter().map(|s| s.weight).collect();
        prop_assert!(weights.windows(2).all(|w| w[0] >= w[1]));
        let other = weighted_set_cover(&set, &bds, &SelectionConfig { alpha, ..pure_cover() }).unwrap();
        prop_assert!(covered_positives(&other.vectors(), &bds) <= union);
        let mut seen = std::collections::HashSet::new();
        prop_assert!(other.vectors().into_iter().all(|v| seen.insert(v)));
    }

    #[test]
    fn filtering_everything_is_identity(bds in dataset(), h in heuristic(), alpha in 0.0f64..=1.0) {
        let set = candidates(&bds, h);
        prop_assume!(!set.is_empty());
        let cfg = SelectionConfig { alpha, ..pure_cover() };
        let filtered = filter_top_k(&set, &bds, set.len()).unwrap();
        let direct = weighted_set_cover(&set, &bds, &cfg).unwrap();
        prop_assert_eq!(weighted_set_cover(&filtered, &bds, &cfg).unwrap().vectors(), direct.vectors());
        let (_, sel) = select_rules(&set, &bds, &SelectionConfig { top_k: Some(set.len()), ..cfg }).unwrap();
        prop_assert_eq!(sel.vectors(), direct.vectors());
    }

    #[test]
    fn score_ignores_row_order(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..60), rot in any::<prop::sample::Index>()) {
        let (p, l): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let a = score(&p, &l).unwrap();
        let mut shuffled = pairs.clone();
        if !shuffled.is_empty() {
            let k = rot.index(shuffled.len());
            shuffled.rotate_left(k);
            shuffled.reverse();
        }
        let (p2, l2): (Vec<bool>, Vec<bool>) = shuffled.into_iter().unzip();
        prop_assert_eq!(a, score(&p2, &l2).unwrap());
    }
}

const CONFIG: &str = r#"
[data]
label_column = "y"
target_class = "1"
features = [
    { name = "a", kind = "continuous" },
    { name = "b", kind = "continuous" },
    { name = "c", kind = "categorical" },
]
[ensemble]
n_estimators = 3
n_features = 2
[selection]
alpha = 0.8
"#;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loaded_model_predicts_like_the_original(
        rows in prop::collection::vec((0u32..100, 0u32..100, 0usize..3), 8..60),
        probe in prop::collection::vec((0u32..120, 0u32..120, 0usize..3), 1..30),
    ) {
        let cfg = RunConfig::from_toml(CONFIG).unwrap();
        let cats = ["red", "green", "blue"];
        let row = |a: u32, b: u32, c: usize| vec![Value::Number(a as f64), Value::Number(b as f64), Value::Category(cats[c].into())];
        let records: Vec<Record> = rows
            .iter()
            .map(|&(a, b, c)| Record {
                values: row(a, b, c),
                label: if a > 60 || (b < 20 && c == 0) { "1" } else { "0" }.into(),
            })
            .collect();
        let labels: Vec<bool> = records.iter().map(|r| r.label == "1").collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let ds = RawDataset::new(cfg.data.schema.clone(), records).unwrap();
        let model = train(&ds, &labels, &cfg).unwrap().model;
        let loaded = RuleSet::from_json(&model.to_json()).unwrap();
        prop_assert_eq!(loaded.to_json(), model.to_json());
        for &(a, b, c) in rows.iter().chain(&probe) {
            let r = row(a, b, c);
            prop_assert_eq!(loaded.predict(&r).unwrap(), model.predict(&r).unwrap());
        }
    }
}
