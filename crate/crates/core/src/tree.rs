//! Entropy decision trees and random forests over flattened windows.
//!
//! Splits are binary `x[feature] <= threshold`, with candidate thresholds at
//! midpoints between consecutive distinct training values. Gain ties resolve
//! to the lowest feature index, then the lowest threshold. The only early
//! stopping rule is the depth limit; nodes also stop when pure or when no
//! feature has two distinct values. Zero-gain splits of impure nodes are
//! taken, which is what lets a depth-2 tree fit XOR.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shannon entropy in bits of a class histogram.
pub fn entropy(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::domain("entropy of an empty class histogram"));
    }
    Ok(entropy_of(class_counts, total as f64))
}

#[inline]
fn entropy_of(counts: &[usize], total: f64) -> f64 {
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Information gain of splitting `parent` into `left` and the remainder.
pub fn information_gain(parent: &[usize], left: &[usize]) -> f64 {
    let n: usize = parent.iter().sum();
    let nl: usize = left.iter().sum();
    let right: Vec<usize> = parent.iter().zip(left).map(|(p, l)| p - l).collect();
    let nr = n - nl;
    let n = n as f64;
    let mut gain = entropy_of(parent, n);
    if nl > 0 {
        gain -= nl as f64 / n * entropy_of(left, nl as f64);
    }
    if nr > 0 {
        gain -= nr as f64 / n * entropy_of(&right, nr as f64);
    }
    gain
}

/// Row-major view of a sample matrix.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub data: &'a [f64],
    pub n_features: usize,
}

impl<'a> Samples<'a> {
    pub fn new(data: &'a [f64], n_features: usize) -> Result<Self> {
        if n_features == 0 || !data.len().is_multiple_of(n_features) {
            return Err(Error::shape(format!(
                "{} values do not form rows of {n_features} features",
                data.len()
            )));
        }
        Ok(Samples { data, n_features })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.data[row * self.n_features + feature]
    }

    pub fn row(&self, row: usize) -> &'a [f64] {
        &self.data[row * self.n_features..(row + 1) * self.n_features]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: Box<TreeNode>,
        #[serde(rename = "r")]
        right: Box<TreeNode>,
    },
    Leaf {
        #[serde(rename = "c")]
        class_counts: Vec<usize>,
    },
}

/// Index of the largest count; lowest index wins ties.
pub fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl TreeNode {
    pub fn leaf(class_counts: Vec<usize>) -> Self {
        TreeNode::Leaf { class_counts }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
                TreeNode::Leaf { class_counts } => return argmax_count(class_counts),
            }
        }
    }

    /// Class histogram of the training samples that reached this node.
    pub fn counts(&self) -> Vec<usize> {
        match self {
            TreeNode::Leaf { class_counts } => class_counts.clone(),
            TreeNode::Split { left, right, .. } => {
                let mut c = left.counts();
                for (a, b) in c.iter_mut().zip(right.counts()) {
                    *a += b;
                }
                c
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => Some(
                [Some(*feature), left.max_feature_index(), right.max_feature_index()]
                    .into_iter()
                    .flatten()
                    .max()
                    .unwrap(),
            ),
        }
    }

    /// Adds each split's weighted impurity decrease to `acc[feature]`;
    /// returns this node's histogram.
    fn accumulate_importance(&self, acc: &mut [f64], total: f64) -> Vec<usize> {
        match self {
            TreeNode::Leaf { class_counts } => class_counts.clone(),
            TreeNode::Split {
                feature, left, right, ..
            } => {
                let l = left.accumulate_importance(acc, total);
                let r = right.accumulate_importance(acc, total);
                let parent: Vec<usize> = l.iter().zip(&r).map(|(a, b)| a + b).collect();
                let n: usize = parent.iter().sum();
                let gain = information_gain(&parent, &l);
                acc[*feature] += n as f64 / total * gain.max(0.0);
                parent
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 14,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub n_classes: usize,
    pub root: TreeNode,
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

struct Builder<'a> {
    x: Samples<'a>,
    y: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    rng: Option<ChaCha8Rng>,
    scratch: Vec<(f64, u32)>,
}

/// Greedy best split of the rows in `rows` over `features` (ascending).
pub fn best_split(
    x: Samples<'_>,
    y: &[usize],
    n_classes: usize,
    rows: &[usize],
    features: &[usize],
) -> Option<SplitChoice> {
    let mut scratch = Vec::with_capacity(rows.len());
    best_split_with(x, y, n_classes, rows, features, &mut scratch)
}

fn best_split_with(
    x: Samples<'_>,
    y: &[usize],
    n_classes: usize,
    rows: &[usize],
    features: &[usize],
    scratch: &mut Vec<(f64, u32)>,
) -> Option<SplitChoice> {
    let mut parent = vec![0usize; n_classes];
    for &r in rows {
        parent[y[r]] += 1;
    }
    let n = rows.len() as f64;
    let parent_h = entropy_of(&parent, n);
    let mut best: Option<SplitChoice> = None;
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for &f in features {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (x.value(r, f), y[r] as u32)));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if scratch[0].0 == scratch[scratch.len() - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        for i in 0..scratch.len() - 1 {
            let (v, label) = scratch[i];
            left[label as usize] += 1;
            right[label as usize] -= 1;
            let next = scratch[i + 1].0;
            if next == v {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n - nl;
            let gain = parent_h - nl / n * entropy_of(&left, nl) - nr / n * entropy_of(&right, nr);
            if best.is_none_or(|b| gain > b.gain) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

impl Builder<'_> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> TreeNode {
        let mut counts = vec![0usize; self.n_classes];
        for &r in rows.iter() {
            counts[self.y[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || rows.len() < 2 {
            return TreeNode::leaf(counts);
        }
        let n_features = self.x.n_features;
        let features: Vec<usize> = match (self.params.max_features, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < n_features => {
                let mut chosen = sample(rng, n_features, m).into_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..n_features).collect(),
        };
        let Some(split) = best_split_with(self.x, self.y, self.n_classes, rows, &features, &mut self.scratch) else {
            return TreeNode::leaf(counts);
        };
        let x = self.x;
        let mid = partition(rows, |r| x.value(r, split.feature) <= split.threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Stable in-place partition; returns the number of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let mid = yes.len();
    rows[..mid].copy_from_slice(&yes);
    rows[mid..].copy_from_slice(&no);
    mid
}

fn check_inputs(x: Samples<'_>, y: &[usize], n_classes: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} samples but {} labels", x.len(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::shape("cannot fit a tree on zero samples"));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::shape(format!("label {bad} outside {n_classes} classes")));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::shape("non-finite feature value"));
    }
    Ok(())
}

/// Fit a single entropy tree on all rows.
pub fn fit_tree(x: Samples<'_>, y: &[usize], n_classes: usize, params: TreeParams) -> Result<DecisionTree> {
    check_inputs(x, y, n_classes)?;
    let mut rows: Vec<usize> = (0..y.len()).collect();
    Ok(fit_rows(x, y, n_classes, params, &mut rows, None))
}

fn fit_rows(
    x: Samples<'_>,
    y: &[usize],
    n_classes: usize,
    params: TreeParams,
    rows: &mut [usize],
    rng: Option<ChaCha8Rng>,
) -> DecisionTree {
    let mut builder = Builder {
        x,
        y,
        n_classes,
        params,
        rng,
        scratch: Vec::with_capacity(rows.len()),
    };
    let root = builder.build(rows, 0);
    DecisionTree {
        n_features: x.n_features,
        n_classes,
        root,
    }
}

/// Per-feature mean decrease in impurity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    /// Sums to 1 when `has_splits`, all zeros otherwise.
    pub weights: Vec<f64>,
    pub has_splits: bool,
}

impl FeatureImportance {
    /// Feature indices ordered by decreasing weight (stable on ties).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.weights.len()).collect();
        idx.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]));
        idx
    }
}

fn normalize_importance(mut acc: Vec<f64>) -> FeatureImportance {
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
        FeatureImportance {
            weights: acc,
            has_splits: true,
        }
    } else {
        FeatureImportance {
            weights: vec![0.0; acc.len()],
            has_splits: false,
        }
    }
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::shape(format!(
                "tree expects {} inputs, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(self.root.predict(x))
    }

    /// Raw (unnormalized) importance accumulator.
    fn raw_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        let total: usize = self.root.counts().iter().sum();
        self.root.accumulate_importance(&mut acc, total.max(1) as f64);
        acc
    }

    pub fn feature_importance(&self) -> FeatureImportance {
        normalize_importance(self.raw_importance())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.root.max_feature_index() {
            if f >= self.n_features {
                return Err(Error::Format(format!(
                    "tree splits on feature {f} of {}",
                    self.n_features
                )));
            }
        }
        fn leaves_ok(node: &TreeNode, classes: usize) -> bool {
            match node {
                TreeNode::Leaf { class_counts } => {
                    class_counts.len() == classes && class_counts.iter().sum::<usize>() > 0
                }
                TreeNode::Split { left, right, .. } => leaves_ok(left, classes) && leaves_ok(right, classes),
            }
        }
        if !leaves_ok(&self.root, self.n_classes) {
            return Err(Error::Format("malformed tree leaf".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Features per split; `None` uses `ceil(sqrt(n_features))`.
    pub max_features: Option<usize>,
    /// Draw a bootstrap sample per tree; `false` trains every tree on all rows.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 25,
            max_depth: 14,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub feature_subsample_size: usize,
    /// Seed used for each estimator's bootstrap and feature draws.
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<TreeNode>,
}

/// Seed of estimator `i` in a forest seeded with `seed`.
pub fn estimator_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Worker count for parallel fitting, from `PATHSEG_THREADS` or the
/// machine's available parallelism.
pub fn worker_count() -> usize {
    std::env::var("PATHSEG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Fit a bagged forest. Estimators are independent, so fitting them on
/// several threads yields the same forest as fitting them in order.
pub fn fit_forest(
    x: Samples<'_>,
    y: &[usize],
    n_classes: usize,
    params: ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    check_inputs(x, y, n_classes)?;
    if params.n_estimators == 0 {
        return Err(Error::config("n_estimators", "a forest needs at least one tree"));
    }
    let n_features = x.n_features;
    let m = params
        .max_features
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features);
    let seeds: Vec<u64> = (0..params.n_estimators).map(|i| estimator_seed(seed, i)).collect();
    let fit_one = |tree_seed: u64| -> TreeNode {
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
        let n = y.len();
        let mut rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            max_features: Some(m),
        };
        fit_rows(x, y, n_classes, tree_params, &mut rows, Some(rng)).root
    };

    let workers = worker_count().min(seeds.len()).max(1);
    let trees: Vec<TreeNode> = if workers == 1 {
        seeds.iter().map(|&s| fit_one(s)).collect()
    } else {
        let chunk = seeds.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .chunks(chunk)
                .map(|part| {
                    let fit_one = &fit_one;
                    scope.spawn(move || part.iter().map(|&s| fit_one(s)).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("forest worker panicked"))
                .collect()
        })
    };
    Ok(ForestModel {
        n_features,
        n_classes,
        feature_subsample_size: m,
        tree_seeds: seeds,
        trees,
    })
}

/// Majority vote; ties resolve to the lowest class index.
pub fn majority_vote(votes: &[usize], n_classes: usize) -> usize {
    let mut tally = vec![0usize; n_classes];
    for &v in votes {
        tally[v] += 1;
    }
    argmax_count(&tally)
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::shape(format!(
                "forest expects {} inputs, got {}",
                self.n_features,
                x.len()
            )));
        }
        let mut tally = vec![0usize; self.n_classes];
        for tree in &self.trees {
            tally[tree.predict(x)] += 1;
        }
        Ok(argmax_count(&tally))
    }

    pub fn feature_importance(&self) -> FeatureImportance {
        let mut acc = vec![0.0; self.n_features];
        for root in &self.trees {
            let tree = DecisionTree {
                n_features: self.n_features,
                n_classes: self.n_classes,
                root: root.clone(),
            };
            let imp = tree.feature_importance();
            if imp.has_splits {
                for (a, w) in acc.iter_mut().zip(&imp.weights) {
                    *a += w / self.trees.len() as f64;
                }
            }
        }
        normalize_importance(acc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Format("forest has no trees".into()));
        }
        for root in &self.trees {
            DecisionTree {
                n_features: self.n_features,
                n_classes: self.n_classes,
                root: root.clone(),
            }
            .validate()?;
        }
        Ok(())
    }
}
