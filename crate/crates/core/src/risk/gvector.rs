use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::estimators::ProbabilityEstimator;
use crate::noise::TransitionMatrix;
use crate::simplex::{check_simplex, Probs, TIE_TOL};

/// Distribution of a classifier's predictions over noisy-posterior ranks: entry `k` is the
/// fraction of instances where the prediction is the `(k+1)`-th most likely noisy label.
#[derive(Debug, Clone, PartialEq)]
pub struct GVector(Vec<f64>);

impl GVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values)?;
        Ok(GVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A g-vector with the number of instances it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct GVectorReport {
    pub g: GVector,
    pub counted: usize,
    /// Instances skipped because two noisy-posterior entries tie.
    pub excluded: usize,
}

fn has_tie(p: &[f64]) -> bool {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| (w[1] - w[0]).abs() <= TIE_TOL)
}

/// How instances whose noisy posterior contains tied entries are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// Skip the instance and count it in [`GVectorReport::excluded`].
    #[default]
    Exclude,
    /// Among tied entries the lower label index ranks first.
    LowestIndex,
}

impl std::str::FromStr for TiePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exclude" => Ok(TiePolicy::Exclude),
            "lowest-index" | "lowest_index" => Ok(TiePolicy::LowestIndex),
            other => Err(Error::config(format!("unknown tie policy `{other}`"))),
        }
    }
}

fn rank_of(p: &[f64], f: usize, ties: TiePolicy) -> usize {
    match ties {
        TiePolicy::Exclude => p.iter().filter(|&&v| v > p[f]).count(),
        TiePolicy::LowestIndex => p
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > p[f] + TIE_TOL || ((v - p[f]).abs() <= TIE_TOL && j < f))
            .count(),
    }
}

/// g-vector of fixed predictions against per-instance noisy posteriors, excluding tied instances.
pub fn g_vector_from_predictions(
    predictions: &[usize],
    noisy_posteriors: &[Vec<f64>],
) -> Result<GVectorReport> {
    g_vector_with_ties(predictions, noisy_posteriors, TiePolicy::Exclude)
}

/// g-vector of fixed predictions with an explicit tie policy.
pub fn g_vector_with_ties(
    predictions: &[usize],
    noisy_posteriors: &[Vec<f64>],
    ties: TiePolicy,
) -> Result<GVectorReport> {
    if predictions.len() != noisy_posteriors.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} posteriors",
            predictions.len(),
            noisy_posteriors.len()
        )));
    }
    let c = noisy_posteriors.first().map_or(0, Vec::len);
    let mut g = vec![0.0; c];
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for (&f, p) in predictions.iter().zip(noisy_posteriors) {
        if p.len() != c || f >= c {
            return Err(Error::Shape("inconsistent class count".into()));
        }
        if ties == TiePolicy::Exclude && has_tie(p) {
            excluded += 1;
            continue;
        }
        let rank = rank_of(p, f, ties);
        g[rank] += 1.0;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Domain(format!(
            "every one of {excluded} instance(s) has tied noisy posteriors"
        )));
    }
    g.iter_mut().for_each(|v| *v /= counted as f64);
    Ok(GVectorReport {
        g: GVector(g),
        counted,
        excluded,
    })
}

/// g-vector of a model's plug-in predictions; `noisy_posterior(i, x_i)` supplies the noisy
/// posterior of the `i`-th instance.
pub fn g_vector(
    model: &dyn ProbabilityEstimator,
    instances: ArrayView2<'_, f64>,
    noisy_posterior: &dyn Fn(usize, ArrayView1<'_, f64>) -> Probs,
) -> Result<GVectorReport> {
    let preds = model.predict(instances);
    let posts: Vec<Vec<f64>> = instances
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, x)| noisy_posterior(i, x).into_inner())
        .collect();
    g_vector_from_predictions(&preds, &posts)
}

/// Noisy accuracy when every instance has the same descending noisy posterior values.
pub fn gvector_noisy_accuracy(g: &GVector, ranked_probs: &[f64]) -> Result<f64> {
    if g.0.len() != ranked_probs.len() {
        return Err(Error::Shape(format!(
            "g-vector has {} entries, ranked probabilities {}",
            g.0.len(),
            ranked_probs.len()
        )));
    }
    Ok(g.0.iter().zip(ranked_probs).map(|(a, b)| a * b).sum())
}

/// Joint frequencies of (prediction `i`, clean label `j`), normalised to sum to one.
pub fn confusion_matrix(predictions: &[usize], clean: &[usize], c: usize) -> Result<Array2<f64>> {
    if predictions.len() != clean.len() || clean.is_empty() {
        return Err(Error::Shape(
            "predictions and labels must have one equal, nonzero length".into(),
        ));
    }
    let mut m = Array2::zeros((c, c));
    for (&p, &y) in predictions.iter().zip(clean) {
        if p >= c || y >= c {
            return Err(Error::Domain(format!("label out of range for {c} classes")));
        }
        m[[p, y]] += 1.0;
    }
    m /= clean.len() as f64;
    Ok(m)
}

/// Expected noisy accuracy `Σ_ij T_ij C_ij` from the (prediction, clean label) frequencies.
pub fn noisy_accuracy_from_confusion(confusion: &Array2<f64>, t: &TransitionMatrix) -> Result<f64> {
    if confusion.dim() != (t.classes(), t.classes()) {
        return Err(Error::Shape(format!(
            "confusion matrix is {:?}, transition matrix has {} classes",
            confusion.dim(),
            t.classes()
        )));
    }
    if confusion.iter().any(|&v| v < 0.0) || (confusion.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(
            "confusion entries must be nonnegative and sum to 1".into(),
        ));
    }
    Ok((confusion * t.entries()).sum())
}

/// Earliest and latest epochs at which the given trajectories reach their minima.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimaWindow {
    /// 1-based epoch.
    pub t1: usize,
    /// 1-based epoch.
    pub t2: usize,
    /// Every trajectory is constant.
    pub degenerate: bool,
}

impl MinimaWindow {
    pub fn width(&self) -> usize {
        self.t2 - self.t1
    }
}

/// Per trajectory the first epoch attaining its minimum; returns the earliest and latest of
/// these.
pub fn simultaneous_minima_window(trajectories: &[Vec<f64>]) -> Result<MinimaWindow> {
    if trajectories.is_empty() {
        return Err(Error::Domain("no trajectories given".into()));
    }
    let len = trajectories[0].len();
    if len < 2 {
        return Err(Error::Domain("need at least 2 epochs".into()));
    }
    if trajectories.iter().any(|t| t.len() != len) {
        return Err(Error::Shape("trajectories differ in length".into()));
    }
    let mut t1 = usize::MAX;
    let mut t2 = 0;
    let mut degenerate = true;
    for t in trajectories {
        let mut best = 0;
        for (i, &v) in t.iter().enumerate() {
            if v < t[best] {
                best = i;
            }
        }
        if t.iter().any(|&v| v != t[0]) {
            degenerate = false;
        }
        t1 = t1.min(best + 1);
        t2 = t2.max(best + 1);
    }
    Ok(MinimaWindow { t1, t2, degenerate })
}
