mod common;

use common::brute_force_split;
use pathseg::tree::{best_split, entropy, fit_forest, fit_tree, ForestParams, Samples, TreeNode, TreeParams};
use proptest::prelude::*;

/// Rows of up to three features on a coarse grid, so ties and repeated
/// values are common.
fn dataset() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<usize>)> {
    (1usize..=3, 2usize..=4, 2usize..=200).prop_flat_map(|(nf, classes, n)| {
        (
            Just(nf),
            Just(classes),
            prop::collection::vec((0i32..12).prop_map(|v| v as f64 * 0.5), n * nf),
            prop::collection::vec(0..classes, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn root_split_matches_exhaustive_search((nf, classes, x, y) in dataset()) {
        let rows: Vec<usize> = (0..y.len()).collect();
        let features: Vec<usize> = (0..nf).collect();
        let fast = best_split(Samples::new(&x, nf).unwrap(), &y, classes, &rows, &features);
        let slow = brute_force_split(&x, nf, &y, classes);
        match (fast, slow) {
            (None, None) => {}
            (Some(f), Some((_, _, g))) => prop_assert!((f.gain - g).abs() <= 1e-12, "{} vs {}", f.gain, g),
            (f, s) => prop_assert!(false, "fast {:?} slow {:?}", f, s),
        }
    }

    #[test]
    fn entropy_is_bounded(counts in prop::collection::vec(0usize..50, 1..8)) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let h = entropy(&counts).unwrap();
        let nonzero = counts.iter().filter(|&&c| c > 0).count() as f64;
        prop_assert!(h >= -1e-15);
        prop_assert!(h <= nonzero.log2() + 1e-12);
    }

    #[test]
    fn deep_tree_fits_distinct_rows(n in 2usize..60, seed in any::<u64>()) {
        let x: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 997) as f64 + i as f64 * 1e-3).collect();
        let y: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % 3).collect();
        let tree = fit_tree(Samples::new(&x, 1).unwrap(), &y, 3, TreeParams { max_depth: 64, max_features: None }).unwrap();
        for (i, &label) in y.iter().enumerate() {
            prop_assert_eq!(tree.predict(&x[i..i + 1]).unwrap(), label);
        }
    }
}

#[test]
fn xor_needs_two_levels() {
    let x = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
    let y = [0, 1, 1, 0];
    let tree = fit_tree(Samples::new(&x, 2).unwrap(), &y, 2, TreeParams::default()).unwrap();
    assert_eq!(tree.root.depth(), 2);
    for r in 0..4 {
        assert_eq!(tree.predict(&x[r * 2..r * 2 + 2]).unwrap(), y[r]);
    }
}

#[test]
fn depth_one_is_a_stump() {
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10) + usize::from(i >= 15)).collect();
    let tree = fit_tree(
        Samples::new(&x, 1).unwrap(),
        &y,
        3,
        TreeParams {
            max_depth: 1,
            max_features: None,
        },
    )
    .unwrap();
    assert!(matches!(tree.root, TreeNode::Split { .. }));
    assert_eq!(tree.root.depth(), 1);
}

#[test]
fn forest_is_seed_deterministic() {
    let x: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64).collect();
    let y: Vec<usize> = (0..100)
        .map(|i| (x[i * 3] as usize + x[i * 3 + 1] as usize) % 2)
        .collect();
    let params = ForestParams {
        n_estimators: 5,
        ..ForestParams::default()
    };
    let a = fit_forest(Samples::new(&x, 3).unwrap(), &y, 2, params, 9).unwrap();
    let b = fit_forest(Samples::new(&x, 3).unwrap(), &y, 2, params, 9).unwrap();
    let c = fit_forest(Samples::new(&x, 3).unwrap(), &y, 2, params, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.trees, c.trees);
}

#[test]
fn importance_sums_to_one() {
    let x: Vec<f64> = (0..200).map(|i| ((i * 13) % 17) as f64).collect();
    let y: Vec<usize> = (0..100).map(|i| usize::from(x[i * 2] > 8.0)).collect();
    let tree = fit_tree(Samples::new(&x, 2).unwrap(), &y, 2, TreeParams::default()).unwrap();
    let imp = tree.feature_importance();
    assert!(imp.has_splits);
    assert!((imp.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(imp.ranking()[0], 0);
}
