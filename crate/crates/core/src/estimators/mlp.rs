//! Fully connected softmax network trained by mini-batch SGD.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};

use super::ProbabilityEstimator;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::rng::{self, Stream};

/// Rectifier hidden layers and a softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEstimator {
    widths: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l + 1` and has shape `(widths[l], widths[l+1])`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    seed: u64,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

impl MlpEstimator {
    /// Weights uniform on `±√(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Domain(
                "an MLP needs at least input and output widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::Domain(format!("zero layer width in {widths:?}")));
        }
        if widths[widths.len() - 1] < 2 {
            return Err(Error::Domain(
                "the output layer needs at least 2 classes".into(),
            ));
        }
        let mut r = rng::stream(seed, Stream::Init);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
            weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || {
                dist.sample(&mut r)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpEstimator {
            widths: widths.to_vec(),
            weights,
            biases,
            seed,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, network has {}",
                params.len(),
                self.parameter_count()
            )));
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub(crate) fn from_parts(widths: Vec<usize>, seed: u64, params: &[f64]) -> Result<Self> {
        let mut m = MlpEstimator::init(&widths, seed)?;
        m.set_parameters(params)?;
        Ok(m)
    }

    /// Activations of every layer; the last entry holds the softmax output.
    fn forward_all(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        for l in 0..=last {
            let mut a = if l == 0 {
                x.dot(&self.weights[l])
            } else {
                acts[l - 1].dot(&self.weights[l])
            };
            a += &self.biases[l];
            if l == last {
                softmax_rows(&mut a);
            } else {
                // NaN must survive the rectifier so that divergence is detected.
                a.mapv_inplace(|v| if v < 0.0 { 0.0 } else { v });
            }
            acts.push(a);
        }
        acts
    }

    /// Per-sample losses and mean gradients over the batch.
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        spec: &LossSpec,
    ) -> Result<(Vec<f64>, Gradients)> {
        let n = x.nrows();
        if n == 0 || labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let c = *self.widths.last().unwrap();
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let acts = self.forward_all(x);
        let q = acts.last().unwrap();
        let mut losses = Vec::with_capacity(n);
        let mut delta = Array2::<f64>::zeros((n, c));
        for (i, &y) in labels.iter().enumerate() {
            let qi = q.row(i);
            let qs = qi.as_slice().expect("standard layout");
            losses.push(spec.value_raw(qs, y));
            let g = spec.logit_gradient(qs, y)?;
            for (d, v) in delta.row_mut(i).iter_mut().zip(g) {
                *d = v / n as f64;
            }
        }
        let layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            gw[l] = if l == 0 {
                x.t().dot(&delta)
            } else {
                acts[l - 1].t().dot(&delta)
            };
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                Zip::from(&mut back).and(&acts[l - 1]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        Ok((
            losses,
            Gradients {
                weights: gw,
                biases: gb,
            },
        ))
    }

    /// Gradient step `θ ← θ − lr·g`.
    pub fn apply_gradients(&mut self, g: &Gradients, lr: f64) {
        for l in 0..self.weights.len() {
            self.weights[l].scaled_add(-lr, &g.weights[l]);
            self.biases[l].scaled_add(-lr, &g.biases[l]);
        }
    }

    /// One shuffled pass of mini-batch gradient descent over `(x, labels)`.
    ///
    /// The batch order comes from the shuffle stream of `seed` indexed by `epoch`. Returns the
    /// mean per-sample loss. A non-finite loss or gradient aborts with the epoch, batch index
    /// and loss kind.
    #[allow(clippy::too_many_arguments)]
    pub fn sgd_epoch(
        &mut self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        spec: &LossSpec,
        lr: f64,
        batch: usize,
        seed: u64,
        epoch: usize,
    ) -> Result<f64> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Domain("cannot train on an empty dataset".into()));
        }
        if batch == 0 {
            return Err(Error::Domain("batch size must be positive".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::substream(seed, Stream::Shuffle, epoch as u32));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (losses, grads) = self.loss_and_gradient(xb.view(), &yb, spec)?;
            let batch_loss: f64 = losses.iter().sum();
            let diag = |what| Error::NonFinite {
                what,
                epoch,
                batch: b,
                loss: spec.kind().to_string(),
            };
            if !batch_loss.is_finite() {
                return Err(diag("loss"));
            }
            if grads
                .weights
                .iter()
                .any(|w| w.iter().any(|v| !v.is_finite()))
                || grads
                    .biases
                    .iter()
                    .any(|w| w.iter().any(|v| !v.is_finite()))
            {
                return Err(diag("gradient"));
            }
            total += batch_loss;
            self.apply_gradients(&grads, lr);
        }
        Ok(total / n as f64)
    }
}

impl ProbabilityEstimator for MlpEstimator {
    fn classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward_all(x).pop().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{backward_correct, forward_correct};
    use crate::noise::build_symmetric;
    use ndarray::Array2;
    use rand::Rng as _;

    fn blob(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = rng::stream(seed, Stream::Test);
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((n, 2), |(i, _)| {
            let centre = if y[i] == 0 { -1.5 } else { 1.5 };
            centre + r.random_range(-1.0..1.0)
        });
        (x, y)
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = MlpEstimator::init(&[20, 64, 64, 3], 1).unwrap();
        assert_eq!(a, MlpEstimator::init(&[20, 64, 64, 3], 1).unwrap());
        assert_ne!(a, MlpEstimator::init(&[20, 64, 64, 3], 2).unwrap());
        let bound = (6.0f64 / 84.0).sqrt();
        assert!(a.weights[0].iter().all(|v| v.abs() <= bound));
        assert!(a.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert_eq!(
            a.parameter_count(),
            20 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3
        );
        assert!(MlpEstimator::init(&[3], 0).is_err());
        assert!(MlpEstimator::init(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn outputs_are_simplex_points() {
        let m = MlpEstimator::init(&[4, 8, 5], 3).unwrap();
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - 3.0) * 100.0 * (j as f64 + 1.0));
        for row in m.predict_proba(x.view()).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let (x, y) = blob(40, 1);
        let mut m = MlpEstimator::init(&[2, 8, 2], 0).unwrap();
        let before = m.clone();
        m.sgd_epoch(x.view(), &y, &LossSpec::CrossEntropy, 0.0, 8, 0, 1)
            .unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn fits_separable_blobs() {
        let (x, y) = blob(200, 2);
        let mut m = MlpEstimator::init(&[2, 16, 2], 0).unwrap();
        for e in 1..=50 {
            m.sgd_epoch(x.view(), &y, &LossSpec::CrossEntropy, 0.1, 16, 0, e)
                .unwrap();
        }
        let acc = m
            .predict(x.view())
            .iter()
            .zip(&y)
            .filter(|(a, b)| a == b)
            .count() as f64
            / 200.0;
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    fn finite_difference_check(spec: &LossSpec, seed: u64) {
        let widths = [3, 5, 4, 3];
        let mut m = MlpEstimator::init(&widths, seed).unwrap();
        let mut r = rng::stream(seed, Stream::Test);
        // Nonzero biases keep hidden pre-activations away from the rectifier's kink at 0.
        let random: Vec<f64> = (0..m.parameter_count())
            .map(|_| r.random_range(-1.0..1.0))
            .collect();
        m.set_parameters(&random).unwrap();
        let x = Array2::from_shape_fn((5, 3), |_| r.random_range(-1.0..1.0));
        let y: Vec<usize> = (0..5).map(|_| r.random_range(0..3)).collect();
        let (_, g) = m.loss_and_gradient(x.view(), &y, spec).unwrap();
        let analytic = g.flatten();
        let theta = m.parameters();
        let mean_loss = |p: &[f64]| {
            let mut mm = m.clone();
            mm.set_parameters(p).unwrap();
            let (l, _) = mm.loss_and_gradient(x.view(), &y, spec).unwrap();
            l.iter().sum::<f64>() / l.len() as f64
        };
        let h = 1e-6;
        let mut numeric = vec![0.0; theta.len()];
        for k in 0..theta.len() {
            let mut p = theta.clone();
            p[k] += h;
            let up = mean_loss(&p);
            p[k] -= 2.0 * h;
            let down = mean_loss(&p);
            numeric[k] = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(1e-12);
        assert!(
            diff / scale <= 1e-4,
            "{spec} seed {seed}: relative error {}",
            diff / scale
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let t = build_symmetric(3, 0.3).unwrap();
        let specs = [
            LossSpec::CrossEntropy,
            LossSpec::Mse,
            LossSpec::gce(0.7).unwrap(),
            LossSpec::sce(1.0, 1.0, -4.0).unwrap(),
            forward_correct(LossSpec::CrossEntropy, &t).unwrap(),
            backward_correct(LossSpec::CrossEntropy, &t).unwrap(),
        ];
        for (i, spec) in specs.iter().enumerate() {
            for s in 0..6 {
                finite_difference_check(spec, (i * 10 + s) as u64);
            }
        }
    }

    #[test]
    fn step_size_scales_linearly() {
        let (x, y) = blob(16, 4);
        let base = MlpEstimator::init(&[2, 6, 2], 9).unwrap();
        let change = |lr: f64| {
            let mut m = base.clone();
            m.sgd_epoch(x.view(), &y, &LossSpec::CrossEntropy, lr, 16, 0, 1)
                .unwrap();
            m.parameters()
                .iter()
                .zip(base.parameters())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let ratio = change(2e-6) / change(1e-6);
        assert!((ratio - 2.0).abs() / 2.0 < 0.05, "ratio {ratio}");
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostic() {
        let x = Array2::from_elem((2, 1), f64::NAN);
        let mut m = MlpEstimator::init(&[1, 2], 0).unwrap();
        let err = m
            .sgd_epoch(x.view(), &[0, 1], &LossSpec::CrossEntropy, 0.1, 1, 0, 7)
            .unwrap_err();
        assert!(
            matches!(
                err,
                Error::NonFinite {
                    epoch: 7,
                    batch: 0,
                    ..
                }
            ),
            "{err:?}"
        );
    }
}
