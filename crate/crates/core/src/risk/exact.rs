use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::noise::TransitionMatrix;
use crate::simplex::{argmax, check_simplex, ArgMax};

/// A distribution over finitely many instances, each with a clean label posterior.
///
/// Risks and expected losses are computed by summation over the support, with no sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    weights: Vec<f64>,
    posteriors: Vec<Vec<f64>>,
}

impl FiniteDistribution {
    pub fn new(weights: Vec<f64>, posteriors: Vec<Vec<f64>>) -> Result<Self> {
        check_simplex(&weights)?;
        if posteriors.len() != weights.len() {
            return Err(Error::Shape(
                "one posterior per support point is required".into(),
            ));
        }
        let c = posteriors[0].len();
        for p in &posteriors {
            check_simplex(p)?;
            if p.len() != c {
                return Err(Error::Shape("posteriors differ in class count".into()));
            }
        }
        Ok(FiniteDistribution {
            weights,
            posteriors,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.posteriors[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn posteriors(&self) -> &[Vec<f64>] {
        &self.posteriors
    }

    /// Every posterior is one-hot.
    pub fn is_separable(&self) -> bool {
        self.posteriors.iter().all(|p| p.contains(&1.0))
    }

    /// Argmax of each clean posterior.
    pub fn bayes_predictions(&self) -> Vec<ArgMax> {
        self.posteriors.iter().map(|p| argmax(p)).collect()
    }

    fn check_preds(&self, preds: &[usize]) -> Result<()> {
        if preds.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} support points",
                preds.len(),
                self.len()
            )));
        }
        if preds.iter().any(|&k| k >= self.classes()) {
            return Err(Error::Domain("prediction out of range".into()));
        }
        Ok(())
    }

    /// `Σ_x w(x) (1 - p(pred(x) | x))`.
    pub fn clean_risk(&self, preds: &[usize]) -> Result<f64> {
        self.check_preds(preds)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.posteriors)
            .zip(preds)
            .map(|((w, p), &k)| w * (1.0 - p[k]))
            .sum())
    }

    /// Noisy risk under one matrix per support point.
    pub fn noisy_risk_field(&self, preds: &[usize], matrices: &[&TransitionMatrix]) -> Result<f64> {
        self.check_preds(preds)?;
        if matrices.len() != self.len() {
            return Err(Error::Shape(
                "one matrix per support point is required".into(),
            ));
        }
        Ok((0..self.len())
            .map(|i| self.weights[i] * (1.0 - matrices[i].apply(&self.posteriors[i])[preds[i]]))
            .sum())
    }

    /// Noisy risk under uniform noise.
    pub fn noisy_risk(&self, preds: &[usize], t: &TransitionMatrix) -> Result<f64> {
        self.noisy_risk_field(preds, &vec![t; self.len()])
    }

    /// `Σ_x w(x) Σ_y p(y|x) ℓ(q(x), y)`.
    pub fn expected_clean_loss(&self, spec: &LossSpec, outputs: &[Vec<f64>]) -> Result<f64> {
        self.expected_loss(spec, outputs, None)
    }

    /// `Σ_x w(x) Σ_z (T p(·|x))_z ℓ(q(x), z)`.
    pub fn expected_noisy_loss(
        &self,
        spec: &LossSpec,
        outputs: &[Vec<f64>],
        t: &TransitionMatrix,
    ) -> Result<f64> {
        self.expected_loss(spec, outputs, Some(t))
    }

    fn expected_loss(
        &self,
        spec: &LossSpec,
        outputs: &[Vec<f64>],
        t: Option<&TransitionMatrix>,
    ) -> Result<f64> {
        if outputs.len() != self.len() {
            return Err(Error::Shape(
                "one model output per support point is required".into(),
            ));
        }
        let mut total = 0.0;
        for ((w, p), q) in self.weights.iter().zip(&self.posteriors).zip(outputs) {
            check_simplex(q)?;
            let label_dist = match t {
                Some(t) => t.apply(p),
                None => p.clone(),
            };
            for (y, &py) in label_dist.iter().enumerate() {
                if py != 0.0 {
                    total += w * py * spec.value_raw(q, y);
                }
            }
        }
        Ok(total)
    }
}
