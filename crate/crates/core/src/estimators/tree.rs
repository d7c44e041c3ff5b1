//! Depth-limited CART classification tree with Gini impurity.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::ProbabilityEstimator;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        probs: Vec<f64>,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes are stored in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEstimator {
    pub(crate) classes: usize,
    pub(crate) dim: usize,
    pub(crate) max_depth: usize,
    pub(crate) nodes: Vec<TreeNode>,
}

impl TreeEstimator {
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Depth of the deepest leaf.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn leaf_for(&self, x: ArrayView1<'_, f64>) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { probs } => return probs,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub(crate) fn from_nodes(
        classes: usize,
        dim: usize,
        max_depth: usize,
        nodes: Vec<TreeNode>,
    ) -> Result<Self> {
        let t = TreeEstimator {
            classes,
            dim,
            max_depth,
            nodes,
        };
        for n in &t.nodes {
            match n {
                TreeNode::Leaf { probs } if probs.len() != classes => {
                    return Err(Error::Shape("leaf has the wrong class count".into()))
                }
                TreeNode::Split {
                    feature,
                    left,
                    right,
                    ..
                } if *feature >= dim || *left >= t.nodes.len() || *right >= t.nodes.len() => {
                    return Err(Error::Shape("split node refers outside the tree".into()))
                }
                _ => {}
            }
        }
        Ok(t)
    }
}

impl ProbabilityEstimator for TreeEstimator {
    fn classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.classes));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (j, v) in self.leaf_for(row).iter().enumerate() {
                out[[i, j]] = *v;
            }
        }
        out
    }
}

struct Builder<'a, 'b> {
    x: ArrayView2<'a, f64>,
    y: &'b [usize],
    classes: usize,
    max_depth: usize,
    nodes: Vec<TreeNode>,
}

fn counts(y: &[usize], idx: &[usize], c: usize) -> Vec<usize> {
    let mut k = vec![0; c];
    for &i in idx {
        k[y[i]] += 1;
    }
    k
}

/// `Σ_k n_k² / n`; larger means purer.
fn purity(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    counts.iter().map(|&k| (k * k) as f64).sum::<f64>() / n as f64
}

impl Builder<'_, '_> {
    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let c = self.classes;
        let k = counts(self.y, &idx, c);
        let n = idx.len();
        let id = self.nodes.len();
        let probs = if n == 0 {
            vec![1.0 / c as f64; c]
        } else {
            k.iter().map(|&v| v as f64 / n as f64).collect()
        };
        self.nodes.push(TreeNode::Leaf { probs });
        let pure = k.iter().filter(|&&v| v > 0).count() <= 1;
        if depth >= self.max_depth || pure {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[[i, feature]] <= threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Split minimising weighted child Gini impurity. Ties go to the lowest feature, then the
    /// lowest threshold. Splits with zero impurity decrease are allowed.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let c = self.classes;
        let n = idx.len();
        let total = counts(self.y, idx, c);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in 0..self.x.ncols() {
            sorted.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let mut left = vec![0usize; c];
            for pos in 0..n - 1 {
                left[self.y[sorted[pos]]] += 1;
                let a = self.x[[sorted[pos], f]];
                let b = self.x[[sorted[pos + 1], f]];
                if !(a < b) {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let score = purity(&left, pos + 1) + purity(&right, n - pos - 1);
                let better = match best {
                    None => true,
                    Some((s, _, _)) => score > s + 1e-9,
                };
                if better {
                    let mut mid = a + (b - a) / 2.0;
                    if mid >= b {
                        mid = a;
                    }
                    best = Some((score, f, mid));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Greedy recursive partitioning of `(x, labels)` up to `max_depth` levels of splits.
pub fn tree_fit(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    classes: usize,
    max_depth: usize,
) -> Result<TreeEstimator> {
    if labels.len() != x.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    if classes < 2 {
        return Err(Error::Domain("need at least 2 classes".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut b = Builder {
        x,
        y: labels,
        classes,
        max_depth,
        nodes: Vec::new(),
    };
    b.build((0..labels.len()).collect(), 0);
    Ok(TreeEstimator {
        classes,
        dim: x.ncols(),
        max_depth,
        nodes: b.nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn accuracy(t: &TreeEstimator, x: ArrayView2<'_, f64>, y: &[usize]) -> f64 {
        t.predict(x).iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn depth_zero_is_class_frequency_leaf() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let t = tree_fit(x.view(), &[0, 1, 1, 1], 2, 0).unwrap();
        assert_eq!(
            t.nodes(),
            &[TreeNode::Leaf {
                probs: vec![0.25, 0.75]
            }]
        );
    }

    #[test]
    fn pure_data_stays_a_leaf() {
        let x = array![[0.0], [1.0], [2.0]];
        let t = tree_fit(x.view(), &[2, 2, 2], 3, 5).unwrap();
        assert_eq!(t.nodes().len(), 1);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let t1 = tree_fit(x.view(), &y, 2, 1).unwrap();
        let t2 = tree_fit(x.view(), &y, 2, 2).unwrap();
        assert!(accuracy(&t1, x.view(), &y) < 1.0);
        assert_eq!(accuracy(&t2, x.view(), &y), 1.0);
        assert_eq!(t2.depth(), 2);
    }

    #[test]
    fn tie_break_prefers_lowest_feature_and_threshold() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let t = tree_fit(x.view(), &[0, 0, 1, 1], 2, 1).unwrap();
        assert_eq!(
            t.nodes()[0],
            TreeNode::Split {
                feature: 0,
                threshold: 1.5,
                left: 1,
                right: 2
            }
        );
    }

    #[test]
    fn identical_rows_cannot_split() {
        let x = array![[1.0], [1.0]];
        let t = tree_fit(x.view(), &[0, 1], 2, 3).unwrap();
        assert_eq!(t.nodes().len(), 1);
    }
}
