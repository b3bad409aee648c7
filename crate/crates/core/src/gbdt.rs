//! Least-squares gradient-boosted regression trees.
//!
//! Trees grow leaf-wise: the leaf whose best split removes the most squared
//! error is split first, until `max_leaves` is reached or no split helps.
//! Split search is exhaustive over midpoints between consecutive distinct
//! feature values; ties go to the lowest feature index, then the lowest
//! threshold.

use alloc::boxed::Box;
use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::searchspace::{Architecture, FeatureEncoding, SpaceDef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_leaves: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Expected row width; inferred from the data when absent.
    pub feature_count: Option<usize>,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 100,
            max_leaves: 31,
            learning_rate: 0.1,
            min_samples_leaf: 2,
            feature_count: None,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.max_leaves < 2 {
            return Err(Error::Config("max_leaves must be at least 2".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Largest feature index used by any split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Leaf { .. } => None,
            Node::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbdtModel {
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub feature_count: usize,
    pub trees: Vec<Node>,
}

impl GbdtModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_count {
            return Err(Error::Shape(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.feature_count
            )));
        }
        Ok(self.base_prediction + self.trees.iter().map(|t| self.learning_rate * t.eval(row)).sum::<f64>())
    }

    /// Structural checks for a loaded model.
    pub fn validate(&self) -> Result<()> {
        if !self.base_prediction.is_finite() || !self.learning_rate.is_finite() {
            return Err(Error::NonFinite("model scalars".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.max_feature().is_some_and(|f| f >= self.feature_count) {
                return Err(Error::Data(format!("tree {t} splits on a feature beyond {}", self.feature_count)));
            }
        }
        Ok(())
    }
}

fn check_matrix(features: &[Vec<f64>], width: usize) -> Result<()> {
    for (r, row) in features.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Shape(format!("row {r} has {} features, expected {width}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature row {r}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Grower<'a> {
    features: &'a [Vec<f64>],
    /// Row indices sorted by each feature's value (stable).
    order: Vec<Vec<usize>>,
    min_leaf: usize,
}

impl Grower<'_> {
    fn best_split(&self, residual: &[f64], member: &[bool], rows: &[usize]) -> Option<Split> {
        let n = rows.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let total: f64 = rows.iter().map(|&i| residual[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<Split> = None;
        for (f, order) in self.order.iter().enumerate() {
            let mut left_sum = 0.0;
            let mut prev: Option<f64> = None;
            for (left_n, &i) in order.iter().filter(|&&i| member[i]).enumerate() {
                let x = self.features[i][f];
                if let Some(p) = prev {
                    if x > p && left_n >= self.min_leaf && n - left_n >= self.min_leaf {
                        let right_sum = total - left_sum;
                        let gain = left_sum * left_sum / left_n as f64
                            + right_sum * right_sum / (n - left_n) as f64
                            - parent;
                        if best.is_none_or(|b| gain > b.gain) {
                            let mut threshold = p + 0.5 * (x - p);
                            if threshold >= x {
                                threshold = p;
                            }
                            best = Some(Split {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                }
                left_sum += residual[i];
                prev = Some(x);
            }
        }
        best.filter(|b| b.gain > 0.0)
    }

    fn grow(&self, residual: &[f64], max_leaves: usize) -> Node {
        struct Leaf {
            rows: Vec<usize>,
            split: Option<Split>,
        }
        let n = residual.len();
        let mut member = vec![false; n];
        let evaluate = |rows: Vec<usize>, member: &mut [bool]| -> Leaf {
            rows.iter().for_each(|&i| member[i] = true);
            let split = self.best_split(residual, member, &rows);
            rows.iter().for_each(|&i| member[i] = false);
            Leaf { rows, split }
        };

        // Arena of nodes; leaves reference their slot in `leaves`.
        enum Slot {
            Open(usize),
            Split(usize, f64, usize, usize),
        }
        let mut arena = vec![Slot::Open(0)];
        let mut leaves = vec![evaluate((0..n).collect(), &mut member)];
        let mut leaf_node = vec![0usize];

        while leaves.len() < max_leaves {
            let mut pick: Option<(usize, f64)> = None;
            for (l, leaf) in leaves.iter().enumerate() {
                if let Some(s) = leaf.split {
                    if pick.is_none_or(|(_, g)| s.gain > g) {
                        pick = Some((l, s.gain));
                    }
                }
            }
            let Some((l, _)) = pick else { break };
            let split = leaves[l].split.expect("picked leaf has a split");
            let rows = core::mem::take(&mut leaves[l].rows);
            let (left, right): (Vec<usize>, Vec<usize>) = rows
                .into_iter()
                .partition(|&i| self.features[i][split.feature] <= split.threshold);
            let left_node = arena.len();
            arena.push(Slot::Open(l));
            let right_node = arena.len();
            arena.push(Slot::Open(leaves.len()));
            arena[leaf_node[l]] = Slot::Split(split.feature, split.threshold, left_node, right_node);
            leaves[l] = evaluate(left, &mut member);
            leaf_node[l] = left_node;
            leaves.push(evaluate(right, &mut member));
            leaf_node.push(right_node);
        }

        fn build(arena: &[Slot], at: usize, values: &[f64]) -> Node {
            match arena[at] {
                Slot::Open(l) => Node::Leaf { value: values[l] },
                Slot::Split(feature, threshold, left, right) => Node::Split {
                    feature,
                    threshold,
                    left: Box::new(build(arena, left, values)),
                    right: Box::new(build(arena, right, values)),
                },
            }
        }
        let values: Vec<f64> = leaves
            .iter()
            .map(|leaf| leaf.rows.iter().map(|&i| residual[i]).sum::<f64>() / leaf.rows.len() as f64)
            .collect();
        build(&arena, 0, &values)
    }
}

fn mse(residual: &[f64]) -> f64 {
    residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64
}

/// Fit a boosted ensemble; also returns the training MSE before the first
/// tree and after each tree.
pub fn fit_traced(features: &[Vec<f64>], targets: &[f64], config: &GbdtConfig) -> Result<(GbdtModel, Vec<f64>)> {
    config.validate()?;
    let n = targets.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 training rows, got {n}")));
    }
    if features.len() != n {
        return Err(Error::Shape(format!("{} feature rows for {n} targets", features.len())));
    }
    let width = config.feature_count.unwrap_or(features[0].len());
    check_matrix(features, width)?;
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("targets".into()));
    }

    let anchor = targets[0];
    let base_prediction = anchor + targets.iter().map(|y| y - anchor).sum::<f64>() / n as f64;
    let mut residual: Vec<f64> = targets.iter().map(|y| y - base_prediction).collect();
    let order = (0..width)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| features[a][f].total_cmp(&features[b][f]));
            idx
        })
        .collect();
    let grower = Grower {
        features,
        order,
        min_leaf: config.min_samples_leaf,
    };
    let mut trace = vec![mse(&residual)];
    let mut trees = Vec::with_capacity(config.n_trees);
    for _ in 0..config.n_trees {
        let tree = grower.grow(&residual, config.max_leaves);
        for (r, row) in residual.iter_mut().zip(features) {
            *r -= config.learning_rate * tree.eval(row);
        }
        trace.push(mse(&residual));
        trees.push(tree);
    }
    Ok((
        GbdtModel {
            base_prediction,
            learning_rate: config.learning_rate,
            feature_count: width,
            trees,
        },
        trace,
    ))
}

pub fn fit(features: &[Vec<f64>], targets: &[f64], config: &GbdtConfig) -> Result<GbdtModel> {
    fit_traced(features, targets, config).map(|(m, _)| m)
}

pub fn predict(model: &GbdtModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    features.iter().map(|row| model.predict_row(row)).collect()
}

#[derive(Debug)]
struct Ranked<T> {
    prediction: f64,
    position: usize,
    item: T,
}

impl<T> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T> Eq for Ranked<T> {}
impl<T> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prediction
            .total_cmp(&other.prediction)
            .then(self.position.cmp(&other.position))
    }
}

/// Keeps the `k` smallest predictions seen so far; ties favour earlier candidates.
#[derive(Debug)]
pub struct TopK<T> {
    k: usize,
    heap: BinaryHeap<Ranked<T>>,
    seen: usize,
}

impl<T> TopK<T> {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
            seen: 0,
        }
    }

    /// Offer the next candidate in enumeration order.
    pub fn push(&mut self, item: T, prediction: f64) {
        let position = self.seen;
        self.seen += 1;
        if self.k == 0 {
            return;
        }
        if self.heap.len() == self.k {
            let worst = self.heap.peek().expect("heap is full");
            if prediction.total_cmp(&worst.prediction) != Ordering::Less {
                return;
            }
            self.heap.pop();
        }
        self.heap.push(Ranked {
            prediction,
            position,
            item,
        });
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Ascending by prediction, ties in enumeration order.
    pub fn into_sorted(self) -> Vec<(T, f64)> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| (r.item, r.prediction))
            .collect()
    }
}

/// The `k` candidates with the lowest predicted loss, ascending; ties keep input order.
pub fn rank_candidates(
    model: &GbdtModel,
    archs: &[Architecture],
    space: &SpaceDef,
    k: usize,
    encoding: FeatureEncoding,
) -> Result<Vec<(Architecture, f64)>> {
    if k > archs.len() {
        return Err(Error::Config(format!("k = {k} exceeds {} candidates", archs.len())));
    }
    let mut top = TopK::new(k);
    for arch in archs {
        let row = encoding.encode(arch, space)?;
        top.push(arch.clone(), model.predict_row(&row)?);
    }
    Ok(top.into_sorted())
}
