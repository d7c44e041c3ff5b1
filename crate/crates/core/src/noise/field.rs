//! Instance-dependent noise and label injection.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::TransitionMatrix;
use crate::error::{Error, Result};
use crate::estimators::ProbabilityEstimator;
use crate::rng::{self, Stream};
use crate::simplex::argmax_lowest;

/// Family tag carried by every noise field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Symmetric,
    Pairwise,
    Circular,
    PermutationSymmetric,
    Custom,
    PcaSplit,
    ClassifierInduced,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Pairwise => "pairwise",
            NoiseKind::Circular => "circular",
            NoiseKind::PermutationSymmetric => "permutation-symmetric",
            NoiseKind::Custom => "custom",
            NoiseKind::PcaSplit => "pca-split",
            NoiseKind::ClassifierInduced => "classifier-induced",
        };
        f.write_str(s)
    }
}

/// A map from instances to transition matrices.
pub trait NoiseField: Send + Sync {
    fn classes(&self) -> usize;
    fn kind(&self) -> NoiseKind;
    /// Nominal noise rate used to build the field.
    fn rate(&self) -> f64;

    /// Noisy-label distribution for an instance `x` whose clean label is `clean`.
    fn column_at(&self, x: ArrayView1<'_, f64>, clean: usize) -> Vec<f64>;

    /// The full transition matrix at `x`.
    fn matrix_at(&self, x: ArrayView1<'_, f64>) -> TransitionMatrix {
        let c = self.classes();
        let mut m = Array2::zeros((c, c));
        for j in 0..c {
            for (i, v) in self.column_at(x, j).into_iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        TransitionMatrix::new(m).expect("noise field columns are stochastic")
    }

    /// The single matrix of a uniform field.
    fn uniform_matrix(&self) -> Option<&TransitionMatrix> {
        None
    }

    /// Noisy-label distributions for a batch of labelled instances.
    fn columns(&self, instances: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<Vec<f64>> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| self.column_at(instances.row(i), y))
            .collect()
    }

    /// One-line description echoed into provenance records.
    fn describe(&self) -> String {
        format!("{} eta={}", self.kind(), self.rate())
    }
}

/// The same matrix everywhere.
#[derive(Debug, Clone)]
pub struct UniformNoise {
    matrix: TransitionMatrix,
    kind: NoiseKind,
    rate: f64,
}

impl UniformNoise {
    pub fn new(matrix: TransitionMatrix, kind: NoiseKind, rate: f64) -> Self {
        UniformNoise { matrix, kind, rate }
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }
}

impl NoiseField for UniformNoise {
    fn classes(&self) -> usize {
        self.matrix.classes()
    }
    fn kind(&self) -> NoiseKind {
        self.kind
    }
    fn rate(&self) -> f64 {
        self.rate
    }
    fn column_at(&self, _x: ArrayView1<'_, f64>, clean: usize) -> Vec<f64> {
        self.matrix.column(clean).to_vec()
    }
    fn matrix_at(&self, _x: ArrayView1<'_, f64>) -> TransitionMatrix {
        self.matrix.clone()
    }
    fn uniform_matrix(&self) -> Option<&TransitionMatrix> {
        Some(&self.matrix)
    }
    fn columns(&self, _instances: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<Vec<f64>> {
        labels
            .iter()
            .map(|&y| self.matrix.column(y).to_vec())
            .collect()
    }
}

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 1000;

/// First principal direction of the rows of `centred`, by power iteration on `XᵀX`.
///
/// The start vector is drawn from a fixed seed and the sign is normalised so that the entry of
/// largest magnitude is positive, which makes the result deterministic.
pub fn principal_direction(centred: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let d = centred.ncols();
    let mut r = rng::stream(0x5eed, Stream::Test);
    let mut v: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
    v /= v.dot(&v).sqrt();
    for _ in 0..POWER_MAX_ITER {
        let mut w = centred.t().dot(&centred.dot(&v));
        let norm = w.dot(&w).sqrt();
        if !(norm > 1e-300) {
            return Err(Error::DegenerateGeometry("class has zero variance".into()));
        }
        w /= norm;
        if w.dot(&v) < 0.0 {
            w.mapv_inplace(|x| -x);
        }
        let change = (&w - &v).dot(&(&w - &v)).sqrt();
        v = w;
        if change < POWER_TOL {
            break;
        }
    }
    let lead = v
        .iter()
        .copied()
        .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    if lead < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    Ok(v)
}

/// Per-class half-space noise: each class is cut by the hyperplane through its mean orthogonal
/// to its first principal direction. Instances on the negative side flip through `matrix_a`,
/// the rest through `matrix_b`; in both cases only with probability `eta`.
#[derive(Debug, Clone)]
pub struct PcaSplitField {
    rate: f64,
    matrix_a: TransitionMatrix,
    matrix_b: TransitionMatrix,
    means: Vec<Array1<f64>>,
    directions: Vec<Array1<f64>>,
}

impl PcaSplitField {
    /// True when `x`, taken as a member of class `clean`, is routed to `matrix_a`.
    pub fn routes_to_a(&self, x: ArrayView1<'_, f64>, clean: usize) -> bool {
        (&x - &self.means[clean]).dot(&self.directions[clean]) < 0.0
    }

    pub fn direction(&self, class: usize) -> ArrayView1<'_, f64> {
        self.directions[class].view()
    }
}

impl NoiseField for PcaSplitField {
    fn classes(&self) -> usize {
        self.matrix_a.classes()
    }
    fn kind(&self) -> NoiseKind {
        NoiseKind::PcaSplit
    }
    fn rate(&self) -> f64 {
        self.rate
    }
    fn column_at(&self, x: ArrayView1<'_, f64>, clean: usize) -> Vec<f64> {
        let m = if self.routes_to_a(x, clean) {
            &self.matrix_a
        } else {
            &self.matrix_b
        };
        let mut col: Vec<f64> = m.column(clean).iter().map(|v| self.rate * v).collect();
        col[clean] += 1.0 - self.rate;
        col
    }
}

/// Fits the per-class means and principal directions of `features`/`labels`.
pub fn build_pca_split_field(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    eta: f64,
    matrix_a: TransitionMatrix,
    matrix_b: TransitionMatrix,
) -> Result<PcaSplitField> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("noise rate {eta} is not in [0, 1]")));
    }
    let c = matrix_a.classes();
    if matrix_b.classes() != c {
        return Err(Error::Shape(
            "matrix A and matrix B differ in class count".into(),
        ));
    }
    if labels.len() != features.nrows() {
        return Err(Error::Shape("labels and features differ in length".into()));
    }
    let mut means = Vec::with_capacity(c);
    let mut directions = Vec::with_capacity(c);
    for k in 0..c {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if idx.len() < 2 {
            return Err(Error::Domain(format!(
                "class {k} has {} instance(s); need at least 2",
                idx.len()
            )));
        }
        let rows = features.select(Axis(0), &idx);
        let mean = rows.mean_axis(Axis(0)).expect("nonempty class");
        let centred = &rows - &mean;
        let dir = principal_direction(centred.view())
            .map_err(|_| Error::DegenerateGeometry(format!("class {k} has zero variance")))?;
        means.push(mean);
        directions.push(dir);
    }
    Ok(PcaSplitField {
        rate: eta,
        matrix_a,
        matrix_b,
        means,
        directions,
    })
}

/// With probability `eta` the label becomes the predictor's plug-in output at `x`.
pub struct ClassifierInducedField {
    classes: usize,
    rate: f64,
    predictor: Arc<dyn ProbabilityEstimator>,
    clean_accuracy: Option<f64>,
}

impl ClassifierInducedField {
    /// Accuracy of the predictor against clean labels, if it was measured.
    pub fn clean_accuracy(&self) -> Option<f64> {
        self.clean_accuracy
    }
}

/// Builds the field and measures the predictor's accuracy on `(features, labels)` when given.
pub fn build_classifier_induced_field(
    predictor: Arc<dyn ProbabilityEstimator>,
    eta: f64,
    reference: Option<(ArrayView2<'_, f64>, &[usize])>,
) -> Result<ClassifierInducedField> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("noise rate {eta} is not in [0, 1]")));
    }
    let clean_accuracy = reference.map(|(x, y)| {
        let preds = predictor.predict(x);
        preds.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len().max(1) as f64
    });
    Ok(ClassifierInducedField {
        classes: predictor.classes(),
        rate: eta,
        predictor,
        clean_accuracy,
    })
}

impl NoiseField for ClassifierInducedField {
    fn classes(&self) -> usize {
        self.classes
    }
    fn kind(&self) -> NoiseKind {
        NoiseKind::ClassifierInduced
    }
    fn rate(&self) -> f64 {
        self.rate
    }
    fn column_at(&self, x: ArrayView1<'_, f64>, clean: usize) -> Vec<f64> {
        let p = self.predictor.predict_one(x);
        let mut col = vec![0.0; self.classes];
        col[clean] += 1.0 - self.rate;
        col[argmax_lowest(p.as_slice())] += self.rate;
        col
    }
    fn columns(&self, instances: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<Vec<f64>> {
        let preds = self.predictor.predict(instances);
        labels
            .iter()
            .zip(preds)
            .map(|(&y, f)| {
                let mut col = vec![0.0; self.classes];
                col[y] += 1.0 - self.rate;
                col[f] += self.rate;
                col
            })
            .collect()
    }
}

/// Resamples every label from its noisy-label distribution under `field`.
pub fn apply_noise(
    labels: &[usize],
    field: &dyn NoiseField,
    instances: ArrayView2<'_, f64>,
    seed: u64,
) -> Result<Vec<usize>> {
    let c = field.classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    if field.uniform_matrix().is_none() && instances.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} instances for {} labels",
            instances.nrows(),
            labels.len()
        )));
    }
    let columns = match field.uniform_matrix() {
        Some(t) => labels.iter().map(|&y| t.column(y).to_vec()).collect(),
        None => field.columns(instances, labels),
    };
    let mut r = rng::stream(seed, Stream::Noise);
    Ok(columns
        .iter()
        .map(|col| {
            let u: f64 = r.random();
            let mut acc = 0.0;
            for (i, &p) in col.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            col.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{build_circular, build_subset_symmetric, build_symmetric};
    use ndarray::array;

    fn uniform(t: TransitionMatrix) -> UniformNoise {
        UniformNoise::new(t, NoiseKind::Custom, 0.0)
    }

    #[test]
    fn identity_field_keeps_labels() {
        let labels: Vec<usize> = (0..500).map(|i| i % 4).collect();
        let f = uniform(TransitionMatrix::identity(4).unwrap());
        let out = apply_noise(&labels, &f, Array2::zeros((0, 1)).view(), 3).unwrap();
        assert_eq!(out, labels);
    }

    #[test]
    fn deterministic_per_seed() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let f = uniform(build_symmetric(10, 0.5).unwrap());
        let x = Array2::zeros((0, 1));
        let a = apply_noise(&labels, &f, x.view(), 11).unwrap();
        let b = apply_noise(&labels, &f, x.view(), 11).unwrap();
        let c = apply_noise(&labels, &f, x.view(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_range_label() {
        let f = uniform(build_symmetric(3, 0.2).unwrap());
        assert!(apply_noise(&[0, 3], &f, Array2::zeros((0, 1)).view(), 0).is_err());
    }

    #[test]
    fn empirical_transition_frequencies() {
        let c = 10;
        let n = 100_000;
        let t = build_symmetric(c, 0.5).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let noisy = apply_noise(
            &labels,
            &uniform(t.clone()),
            Array2::zeros((0, 1)).view(),
            5,
        )
        .unwrap();
        let mut counts = Array2::<f64>::zeros((c, c));
        for (&y, &z) in labels.iter().zip(&noisy) {
            counts[[z, y]] += 1.0;
        }
        let per = (n / c) as f64;
        for j in 0..c {
            for i in 0..c {
                let p = t.get(i, j);
                let sd = (per * p * (1.0 - p)).sqrt();
                assert!(
                    (counts[[i, j]] - per * p).abs() <= 3.0 * sd + 1e-9,
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn pca_split_routes_by_projection() {
        let x = array![
            [0.0, 0.0],
            [2.0, 0.1],
            [4.0, 0.0],
            [6.0, -0.1],
            [0.0, 1.0],
            [0.1, 3.0],
            [0.0, 5.0]
        ];
        let y = [0, 0, 0, 0, 1, 1, 1];
        let a = build_symmetric(2, 1.0).unwrap();
        let f = build_pca_split_field(
            x.view(),
            &y,
            0.4,
            a.clone(),
            TransitionMatrix::identity(2).unwrap(),
        )
        .unwrap();
        assert!(f.direction(0)[0].abs() > 0.99);
        assert!(f.routes_to_a(array![0.0, 0.0].view(), 0));
        assert!(!f.routes_to_a(array![6.0, 0.0].view(), 0));
        assert_eq!(f.column_at(array![0.0, 0.0].view(), 0), vec![0.6, 0.4]);
        assert_eq!(f.column_at(array![6.0, 0.0].view(), 0), vec![1.0, 0.0]);
    }

    #[test]
    fn pca_split_zero_rate_is_identity() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [3.0, 2.0], [5.0, 1.0]];
        let y = [0, 0, 1, 1];
        let groups = vec![vec![0, 1]];
        let b = build_subset_symmetric(&groups, 1.0).unwrap();
        let f =
            build_pca_split_field(x.view(), &y, 0.0, build_circular(2, 1.0).unwrap(), b).unwrap();
        for i in 0..4 {
            assert_eq!(
                f.matrix_at(x.row(i)),
                TransitionMatrix::identity(2).unwrap()
            );
        }
    }

    #[test]
    fn pca_split_errors() {
        let x = array![[1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 2.0]];
        let id = TransitionMatrix::identity(2).unwrap();
        let err = build_pca_split_field(x.view(), &[0, 0, 1, 1], 0.3, id.clone(), id.clone())
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)), "{err:?}");
        assert!(build_pca_split_field(x.view(), &[0, 1, 1, 1], 0.3, id.clone(), id).is_err());
    }
}
