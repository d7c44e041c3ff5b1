//! Probability estimators: the MLP, the CART tree and oracle posteriors.

mod checkpoint;
mod mlp;
mod tree;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Model};
pub use mlp::{Gradients, MlpEstimator};
pub use tree::{tree_fit, TreeEstimator, TreeNode};

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::Result;
use crate::simplex::{argmax, argmax_lowest, ArgMax, Probs};

/// Anything mapping instances to points of the probability simplex.
pub trait ProbabilityEstimator: Send + Sync {
    fn classes(&self) -> usize;

    /// One simplex point per row of `x`.
    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64>;

    fn predict_one(&self, x: ArrayView1<'_, f64>) -> Probs {
        let row = x.insert_axis(ndarray::Axis(0));
        let p = self.predict_proba(row);
        Probs::new(p.row(0).to_vec()).expect("estimators output simplex points")
    }

    /// Plug-in predictions: the lowest index among maximal entries.
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.predict_proba(x)
            .rows()
            .into_iter()
            .map(|r| argmax_lowest(r.as_slice().expect("standard layout")))
            .collect()
    }
}

/// Wraps an estimator and predicts its argmax.
#[derive(Debug, Clone)]
pub struct PluginClassifier<E> {
    pub inner: E,
}

impl<E: ProbabilityEstimator> PluginClassifier<E> {
    pub fn new(inner: E) -> Self {
        PluginClassifier { inner }
    }

    /// Predictions with lowest-index tie-breaking.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.inner.predict(x)
    }

    /// Argmax sets, with ties reported rather than broken.
    pub fn predict_with_ties(&self, x: ArrayView2<'_, f64>) -> Vec<ArgMax> {
        self.inner
            .predict_proba(x)
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("standard layout")))
            .collect()
    }
}

type PosteriorFn = dyn Fn(ArrayView1<'_, f64>) -> Probs + Send + Sync;

/// Returns a supplied posterior field verbatim.
#[derive(Clone)]
pub struct OracleEstimator {
    classes: usize,
    field: Arc<PosteriorFn>,
}

impl std::fmt::Debug for OracleEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleEstimator")
            .field("classes", &self.classes)
            .finish()
    }
}

impl OracleEstimator {
    pub fn posterior(&self, x: ArrayView1<'_, f64>) -> Probs {
        (self.field)(x)
    }
}

impl ProbabilityEstimator for OracleEstimator {
    fn classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.classes));
        for (i, row) in x.rows().into_iter().enumerate() {
            let p = (self.field)(row);
            assert_eq!(
                p.len(),
                self.classes,
                "posterior field returned the wrong class count"
            );
            for (j, v) in p.as_slice().iter().enumerate() {
                out[[i, j]] = *v;
            }
        }
        out
    }
}

/// The estimator that outputs `field(x)` at every `x`. When `field` is the clean posterior its
/// plug-in classifier is Bayes-optimal.
pub fn bayes_from_posterior(
    classes: usize,
    field: impl Fn(ArrayView1<'_, f64>) -> Probs + Send + Sync + 'static,
) -> OracleEstimator {
    OracleEstimator {
        classes,
        field: Arc::new(field),
    }
}

/// Fraction of `predictions` equal to `labels`.
pub(crate) fn agreement(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(crate::Error::Domain(
            "accuracy of an empty dataset is undefined".into(),
        ));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{build_symmetric, is_class_preserving_at};
    use ndarray::{array, Array2};

    #[test]
    fn separable_oracle_predicts_labels() {
        let oracle = bayes_from_posterior(3, |x| Probs::one_hot(3, x[0] as usize).unwrap());
        let x = array![[0.0], [2.0], [1.0], [2.0]];
        assert_eq!(
            PluginClassifier::new(oracle).predict(x.view()),
            vec![0, 2, 1, 2]
        );
    }

    #[test]
    fn uniform_oracle_reports_ties() {
        let oracle = bayes_from_posterior(4, |_| Probs::uniform(4));
        let ties = PluginClassifier::new(oracle).predict_with_ties(Array2::zeros((2, 1)).view());
        assert_eq!(ties[0], ArgMax::Tie(vec![0, 1, 2, 3]));
    }

    #[test]
    fn noisy_plugin_matches_clean_where_preserving() {
        let t = build_symmetric(3, 0.4).unwrap();
        let clean = |x: ArrayView1<'_, f64>| {
            let a = x[0];
            let b = x[1];
            Probs::new(vec![a, b, (1.0 - a - b).max(0.0)]).unwrap()
        };
        let t2 = t.clone();
        let clean_oracle = bayes_from_posterior(3, clean);
        let noisy_oracle = bayes_from_posterior(3, move |x| t2.push(&clean(x)).unwrap());
        let steps = 20;
        for i in 0..=steps {
            for j in 0..=steps - i {
                let x = array![i as f64 / steps as f64, j as f64 / steps as f64];
                let p = clean_oracle.predict_one(x.view());
                if is_class_preserving_at(&t, p.as_slice())
                    .unwrap()
                    .is_preserved()
                {
                    let row = x.view().insert_axis(ndarray::Axis(0));
                    assert_eq!(clean_oracle.predict(row), noisy_oracle.predict(row));
                }
            }
        }
    }
}
