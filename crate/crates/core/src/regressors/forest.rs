//! Random forest built from scratch: bootstrap-sampled axis-aligned trees
//! with out-of-bag permutation importance (mean decrease in accuracy).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Prediction task; controls split criterion, feature subsampling, and leaf
/// size (variance / ceil(p/3) / 5 rows for regression, Gini / ceil(sqrt p) /
/// 1 row for classification).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestTask {
    Regression,
    Classification,
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// One axis-aligned binary decision tree.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Predict a single row given by a feature accessor.
    pub fn predict_with<F: Fn(usize) -> f64>(&self, feature: F) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => {
                    at = if feature(*f) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.predict_with(|f| x[(row, f)])
    }
}

/// A fitted forest plus the per-tree out-of-bag row sets.
#[derive(Debug, Clone)]
pub struct ForestFit {
    pub trees: Vec<Tree>,
    pub oob_indices: Vec<Vec<usize>>,
    pub task: ForestTask,
    n_classes: usize,
}

struct TreeBuilder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    task: ForestTask,
    mtry: usize,
    min_rows: usize,
    n_classes: usize,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        match self.task {
            ForestTask::Regression => {
                rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64
            }
            ForestTask::Classification => {
                let mut counts = vec![0usize; self.n_classes];
                for &r in rows {
                    counts[self.y[r] as usize] += 1;
                }
                // Majority class; ties break to the smaller label.
                let mut best = 0usize;
                for k in 1..self.n_classes {
                    if counts[k] > counts[best] {
                        best = k;
                    }
                }
                best as f64
            }
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.y[rows[0]];
        rows.iter().all(|&r| self.y[r] == first)
    }

    /// Best split of `rows` on `feature`, returning (score, threshold);
    /// lower score is better. None when the feature is constant on the node.
    fn best_split_on(&self, rows: &[usize], feature: usize, scratch: &mut Vec<(f64, f64)>) -> Option<(f64, f64)> {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (self.x[(r, feature)], self.y[r])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let m = scratch.len();
        if scratch[0].0 == scratch[m - 1].0 {
            return None;
        }
        match self.task {
            ForestTask::Regression => {
                let total: f64 = scratch.iter().map(|p| p.1).sum();
                let mut left_sum = 0.0;
                let mut best: Option<(f64, f64)> = None;
                for i in 0..m - 1 {
                    left_sum += scratch[i].1;
                    if scratch[i].0 == scratch[i + 1].0 {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let nr = (m - i - 1) as f64;
                    let right_sum = total - left_sum;
                    // Minimizing within-node variance is maximizing the
                    // between-node sum of squares.
                    let score = -(left_sum * left_sum / nl + right_sum * right_sum / nr);
                    let threshold = 0.5 * (scratch[i].0 + scratch[i + 1].0);
                    if best.map_or(true, |(s, _)| score < s) {
                        best = Some((score, threshold));
                    }
                }
                best
            }
            ForestTask::Classification => {
                let mut right_counts = vec![0.0_f64; self.n_classes];
                for p in scratch.iter() {
                    right_counts[p.1 as usize] += 1.0;
                }
                let mut left_counts = vec![0.0_f64; self.n_classes];
                let mut best: Option<(f64, f64)> = None;
                for i in 0..m - 1 {
                    let k = scratch[i].1 as usize;
                    left_counts[k] += 1.0;
                    right_counts[k] -= 1.0;
                    if scratch[i].0 == scratch[i + 1].0 {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let nr = (m - i - 1) as f64;
                    let gini = |counts: &[f64], n: f64| -> f64 {
                        1.0 - counts.iter().map(|c| (c / n).powi(2)).sum::<f64>()
                    };
                    let score = nl * gini(&left_counts, nl) + nr * gini(&right_counts, nr);
                    let threshold = 0.5 * (scratch[i].0 + scratch[i + 1].0);
                    if best.map_or(true, |(s, _)| score < s) {
                        best = Some((score, threshold));
                    }
                }
                best
            }
        }
    }

    fn build<R: Rng + ?Sized>(&mut self, rows: Vec<usize>, rng: &mut R) -> usize {
        if rows.len() <= self.min_rows || self.is_pure(&rows) {
            let value = self.leaf_value(&rows);
            self.nodes.push(Node::Leaf { value });
            return self.nodes.len() - 1;
        }

        let p = self.x.ncols();
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(rng);
        features.truncate(self.mtry);
        features.sort_unstable();

        let mut scratch = Vec::new();
        let mut best: Option<(f64, f64, usize)> = None;
        for &f in &features {
            if let Some((score, threshold)) = self.best_split_on(&rows, f, &mut scratch) {
                if best.map_or(true, |(s, _, _)| score < s) {
                    best = Some((score, threshold, f));
                }
            }
        }
        let Some((_, threshold, feature)) = best else {
            let value = self.leaf_value(&rows);
            self.nodes.push(Node::Leaf { value });
            return self.nodes.len() - 1;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.x[(r, feature)] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 }); // placeholder
        let left = self.build(left_rows, rng);
        let right = self.build(right_rows, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Grow a forest of `n_trees` bootstrap trees. Classification requires
/// integer labels `0..K` (any integer coding is accepted and re-indexed).
pub fn fit_forest(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    task: ForestTask,
    n_trees: usize,
    seed: u64,
) -> Result<ForestFit> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 || y.len() != n {
        return Err(Error::Domain(format!(
            "forest needs non-empty data with matching response, got {n}x{p} and {} responses",
            y.len()
        )));
    }
    if n_trees == 0 {
        return Err(Error::Domain("forest needs at least one tree".into()));
    }

    let (y_enc, n_classes) = match task {
        ForestTask::Regression => (y.clone(), 0),
        ForestTask::Classification => {
            if y.iter().any(|v| !v.is_finite() || v.fract() != 0.0) {
                return Err(Error::TypeError(
                    "classification requires integer labels".into(),
                ));
            }
            let mut labels: Vec<i64> = y.iter().map(|&v| v as i64).collect();
            labels.sort_unstable();
            labels.dedup();
            let enc = DVector::from_fn(n, |i, _| {
                labels.binary_search(&(y[i] as i64)).unwrap() as f64
            });
            (enc, labels.len())
        }
    };
    let (mtry, min_rows) = match task {
        ForestTask::Regression => (p.div_ceil(3), 5),
        ForestTask::Classification => ((p as f64).sqrt().ceil() as usize, 1),
    };

    let grown: Vec<(Tree, Vec<usize>)> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, Domain::Bootstrap, t as u64);
            let mut in_bag = vec![false; n];
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let r = rng.random_range(0..n);
                in_bag[r] = true;
                rows.push(r);
            }
            let oob: Vec<usize> = (0..n).filter(|&r| !in_bag[r]).collect();
            let mut builder = TreeBuilder {
                x,
                y: &y_enc,
                task,
                mtry: mtry.max(1).min(p),
                min_rows,
                n_classes,
                nodes: Vec::new(),
            };
            builder.build(rows, &mut rng);
            (
                Tree {
                    nodes: builder.nodes,
                },
                oob,
            )
        })
        .collect();

    let (trees, oob_indices) = grown.into_iter().unzip();
    Ok(ForestFit {
        trees,
        oob_indices,
        task,
        n_classes,
    })
}

/// Out-of-bag prediction per row (mean over trees for regression, majority
/// vote for classification); `None` for rows that were in-bag everywhere.
///
/// Classification predictions are reported in the re-indexed label space
/// `0..K`, matching `forest_error`.
pub fn oob_predictions(fit: &ForestFit, x: &DMatrix<f64>) -> Vec<Option<f64>> {
    let n = x.nrows();
    match fit.task {
        ForestTask::Regression => {
            let mut sum = vec![0.0_f64; n];
            let mut count = vec![0usize; n];
            for (tree, oob) in fit.trees.iter().zip(&fit.oob_indices) {
                for &r in oob {
                    sum[r] += tree.predict_row(x, r);
                    count[r] += 1;
                }
            }
            (0..n)
                .map(|r| (count[r] > 0).then(|| sum[r] / count[r] as f64))
                .collect()
        }
        ForestTask::Classification => {
            let k = fit.n_classes.max(1);
            let mut votes = vec![0usize; n * k];
            let mut count = vec![0usize; n];
            for (tree, oob) in fit.trees.iter().zip(&fit.oob_indices) {
                for &r in oob {
                    let c = tree.predict_row(x, r) as usize;
                    votes[r * k + c] += 1;
                    count[r] += 1;
                }
            }
            (0..n)
                .map(|r| {
                    (count[r] > 0).then(|| {
                        let row = &votes[r * k..(r + 1) * k];
                        let mut best = 0usize;
                        for c in 1..k {
                            if row[c] > row[best] {
                                best = c;
                            }
                        }
                        best as f64
                    })
                })
                .collect()
        }
    }
}

fn tree_oob_error(
    fit: &ForestFit,
    tree: &Tree,
    oob: &[usize],
    x: &DMatrix<f64>,
    y_enc: &DVector<f64>,
    permuted_feature: Option<(usize, &[f64])>,
) -> f64 {
    let mut err = 0.0;
    for (k, &r) in oob.iter().enumerate() {
        let pred = tree.predict_with(|f| match permuted_feature {
            Some((pf, values)) if pf == f => values[k],
            _ => x[(r, f)],
        });
        match fit.task {
            ForestTask::Regression => err += (pred - y_enc[r]).powi(2),
            ForestTask::Classification => {
                if pred != y_enc[r] {
                    err += 1.0;
                }
            }
        }
    }
    err / oob.len() as f64
}

/// Mean-decrease-in-accuracy importance: per feature, the average over trees
/// of (out-of-bag error with that column permuted minus out-of-bag error).
pub fn forest_importance(
    fit: &ForestFit,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    seed: u64,
) -> DVector<f64> {
    let p = x.ncols();
    let y_enc = match fit.task {
        ForestTask::Regression => y.clone(),
        ForestTask::Classification => {
            let mut labels: Vec<i64> = y.iter().map(|&v| v as i64).collect();
            labels.sort_unstable();
            labels.dedup();
            DVector::from_fn(y.len(), |i, _| {
                labels.binary_search(&(y[i] as i64)).unwrap() as f64
            })
        }
    };

    let per_tree: Vec<DVector<f64>> = fit
        .trees
        .par_iter()
        .zip(&fit.oob_indices)
        .enumerate()
        .filter(|(_, (_, oob))| !oob.is_empty())
        .map(|(t, (tree, oob))| {
            let base = tree_oob_error(fit, tree, oob, x, &y_enc, None);
            let mut imp = DVector::zeros(p);
            for f in 0..p {
                let mut rng = substream(seed, Domain::Importance, (t * p + f) as u64);
                let mut values: Vec<f64> = oob.iter().map(|&r| x[(r, f)]).collect();
                values.shuffle(&mut rng);
                let permuted = tree_oob_error(fit, tree, oob, x, &y_enc, Some((f, &values)));
                imp[f] = permuted - base;
            }
            imp
        })
        .collect();

    if per_tree.is_empty() {
        return DVector::zeros(p);
    }
    let mut total = DVector::zeros(p);
    for imp in &per_tree {
        total += imp;
    }
    total / per_tree.len() as f64
}
