//! Training losses on the probability simplex, with forward and backward noise corrections.
//!
//! Every loss `ℓ(q, y)` takes a model output `q` and a label `y`. Gradients are with respect to
//! `q` as a point of `R^c`. The MLP needs gradients with respect to the softmax logits, which
//! [`LossSpec::logit_gradient`] computes from `q ⊙ ∇ℓ` in closed form so that outputs
//! underflowing to zero do not produce `0 · ∞`.

use std::fmt;

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::noise::TransitionMatrix;
use crate::simplex::{argmax_lowest, Probs};

pub const DEFAULT_GCE_RHO: f64 = 0.7;
pub const DEFAULT_SCE_ALPHA: f64 = 1.0;
pub const DEFAULT_SCE_BETA: f64 = 1.0;
pub const DEFAULT_SCE_CLIP: f64 = -4.0;

/// Backward correction refuses matrices whose 2-norm condition number exceeds this.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Ce,
    Mse,
    Gce,
    Sce,
    Fce,
    Bce,
    ZeroOne,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Ce => "ce",
            LossKind::Mse => "mse",
            LossKind::Gce => "gce",
            LossKind::Sce => "sce",
            LossKind::Fce => "fce",
            LossKind::Bce => "bce",
            LossKind::ZeroOne => "zero-one",
        })
    }
}

/// A loss and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    CrossEntropy,
    Mse,
    /// Generalised cross-entropy `(1 - q_y^ρ) / ρ`.
    Gce {
        rho: f64,
    },
    /// Symmetric cross-entropy `α·CE + β·RCE` where `RCE = -A (1 - q_y)` and `A` is the
    /// value substituted for `ln 0`.
    Sce {
        alpha: f64,
        beta: f64,
        clip: f64,
    },
    ZeroOne,
    Forward(Box<ForwardCorrection>),
    Backward(Box<BackwardCorrection>),
}

/// The base loss evaluated at `T · q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCorrection {
    pub base: LossSpec,
    pub matrix: TransitionMatrix,
}

/// The base loss vector over all labels mapped through `(Tᵀ)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardCorrection {
    pub base: LossSpec,
    pub matrix: TransitionMatrix,
    /// `(Tᵀ)⁻¹`.
    pub inverse_transpose: Array2<f64>,
    /// 2-norm condition number of `T`.
    pub condition: f64,
}

impl LossSpec {
    pub fn gce(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Domain(format!("GCE rho = {rho} is not in (0, 1]")));
        }
        Ok(LossSpec::Gce { rho })
    }

    pub fn sce(alpha: f64, beta: f64, clip: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0) {
            return Err(Error::Domain(format!(
                "SCE weights ({alpha}, {beta}) must be nonnegative"
            )));
        }
        if !(clip < 0.0 && clip.is_finite()) {
            return Err(Error::Domain(format!(
                "SCE clip value {clip} must be finite and negative"
            )));
        }
        Ok(LossSpec::Sce { alpha, beta, clip })
    }

    pub fn kind(&self) -> LossKind {
        match self {
            LossSpec::CrossEntropy => LossKind::Ce,
            LossSpec::Mse => LossKind::Mse,
            LossSpec::Gce { .. } => LossKind::Gce,
            LossSpec::Sce { .. } => LossKind::Sce,
            LossSpec::ZeroOne => LossKind::ZeroOne,
            LossSpec::Forward(_) => LossKind::Fce,
            LossSpec::Backward(_) => LossKind::Bce,
        }
    }

    /// Class count the loss is tied to, if it carries a matrix.
    pub fn classes(&self) -> Option<usize> {
        match self {
            LossSpec::Forward(f) => Some(f.matrix.classes()),
            LossSpec::Backward(b) => Some(b.matrix.classes()),
            _ => None,
        }
    }

    /// Loss value at a validated simplex point.
    pub fn value(&self, q: &Probs, label: usize) -> Result<f64> {
        self.check(q.len(), label)?;
        Ok(self.value_raw(q.as_slice(), label))
    }

    /// Gradient with respect to `q`.
    pub fn gradient(&self, q: &Probs, label: usize) -> Result<Vec<f64>> {
        self.check(q.len(), label)?;
        self.differentiable()?;
        Ok(self.grad_raw(q.as_slice(), label))
    }

    /// Gradient with respect to logits `z` where `q = softmax(z)`.
    pub fn logit_gradient(&self, q: &[f64], label: usize) -> Result<Vec<f64>> {
        self.differentiable()?;
        let mut h = self.scaled_grad(q, label);
        let s: f64 = h.iter().sum();
        for (hj, &qj) in h.iter_mut().zip(q) {
            *hj -= qj * s;
        }
        Ok(h)
    }

    fn differentiable(&self) -> Result<()> {
        match self {
            LossSpec::ZeroOne => Err(Error::NotDifferentiable(self.kind().to_string())),
            LossSpec::Forward(f) => f.base.differentiable(),
            LossSpec::Backward(b) => b.base.differentiable(),
            _ => Ok(()),
        }
    }

    fn check(&self, c: usize, label: usize) -> Result<()> {
        if label >= c {
            return Err(Error::Domain(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        if let Some(k) = self.classes() {
            if k != c {
                return Err(Error::Shape(format!("loss expects {k} classes, got {c}")));
            }
        }
        Ok(())
    }

    /// Loss value without validation.
    pub fn value_raw(&self, q: &[f64], y: usize) -> f64 {
        match self {
            LossSpec::CrossEntropy => ce(q[y]),
            LossSpec::Mse => q
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let d = v - if j == y { 1.0 } else { 0.0 };
                    d * d
                })
                .sum(),
            LossSpec::Gce { rho } => (1.0 - q[y].powf(*rho)) / rho,
            LossSpec::Sce { alpha, beta, clip } => alpha * ce(q[y]) - beta * clip * (1.0 - q[y]),
            LossSpec::ZeroOne => {
                if argmax_lowest(q) == y {
                    0.0
                } else {
                    1.0
                }
            }
            LossSpec::Forward(f) => f.base.value_raw(&f.matrix.apply(q), y),
            LossSpec::Backward(b) => {
                let c = q.len();
                (0..c)
                    .map(|k| b.inverse_transpose[[y, k]] * b.base.value_raw(q, k))
                    .sum()
            }
        }
    }

    fn grad_raw(&self, q: &[f64], y: usize) -> Vec<f64> {
        let c = q.len();
        let mut g = vec![0.0; c];
        match self {
            LossSpec::CrossEntropy => g[y] = -1.0 / q[y],
            LossSpec::Mse => {
                for j in 0..c {
                    g[j] = 2.0 * (q[j] - if j == y { 1.0 } else { 0.0 });
                }
            }
            LossSpec::Gce { rho } => g[y] = -q[y].powf(rho - 1.0),
            LossSpec::Sce { alpha, beta, clip } => {
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj = if j == y { -alpha / q[y] } else { -beta * clip };
                }
            }
            LossSpec::ZeroOne => unreachable!("checked by differentiable()"),
            LossSpec::Forward(f) => {
                let p = f.matrix.apply(q);
                let gb = f.base.grad_raw(&p, y);
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj = (0..c).map(|i| f.matrix.get(i, j) * gb[i]).sum();
                }
            }
            LossSpec::Backward(b) => {
                for k in 0..c {
                    let w = b.inverse_transpose[[y, k]];
                    for (gj, v) in g.iter_mut().zip(b.base.grad_raw(q, k)) {
                        *gj += w * v;
                    }
                }
            }
        }
        g
    }

    /// `q ⊙ ∇ℓ(q, y)`, evaluated so that vanishing `q_j` gives finite results.
    fn scaled_grad(&self, q: &[f64], y: usize) -> Vec<f64> {
        let c = q.len();
        let mut h = vec![0.0; c];
        match self {
            LossSpec::CrossEntropy => h[y] = -1.0,
            LossSpec::Mse => {
                for j in 0..c {
                    h[j] = 2.0 * q[j] * (q[j] - if j == y { 1.0 } else { 0.0 });
                }
            }
            LossSpec::Gce { rho } => h[y] = -q[y].powf(*rho),
            LossSpec::Sce { alpha, beta, clip } => {
                for (j, hj) in h.iter_mut().enumerate() {
                    *hj = if j == y { -alpha } else { -beta * clip * q[j] };
                }
            }
            LossSpec::ZeroOne => unreachable!("checked by differentiable()"),
            LossSpec::Forward(f) => {
                // h_j = Σ_i (T_ij q_j / p_i) · hb_i with p = T q; each ratio lies in [0, 1].
                let p = f.matrix.apply(q);
                let hb = f.base.scaled_grad(&p, y);
                for i in 0..c {
                    if hb[i] == 0.0 || p[i] <= 0.0 {
                        continue;
                    }
                    for (j, hj) in h.iter_mut().enumerate() {
                        *hj += f.matrix.get(i, j) * q[j] / p[i] * hb[i];
                    }
                }
            }
            LossSpec::Backward(b) => {
                for k in 0..c {
                    let w = b.inverse_transpose[[y, k]];
                    for (hj, v) in h.iter_mut().zip(b.base.scaled_grad(q, k)) {
                        *hj += w * v;
                    }
                }
            }
        }
        h
    }
}

fn ce(qy: f64) -> f64 {
    if qy <= 0.0 {
        f64::INFINITY
    } else {
        -qy.ln()
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Gce { rho } => write!(f, "gce rho={rho}"),
            LossSpec::Sce { alpha, beta, clip } => {
                write!(f, "sce alpha={alpha} beta={beta} clip={clip}")
            }
            LossSpec::Forward(c) => write!(f, "fce base=({})", c.base),
            LossSpec::Backward(c) => {
                write!(f, "bce base=({}) condition={:.6e}", c.base, c.condition)
            }
            other => write!(f, "{}", other.kind()),
        }
    }
}

fn check_base(base: &LossSpec) -> Result<()> {
    match base {
        LossSpec::ZeroOne | LossSpec::Forward(_) | LossSpec::Backward(_) => {
            Err(Error::Unsupported(format!(
                "corrections need an uncorrected differentiable base loss, got {}",
                base.kind()
            )))
        }
        _ => Ok(()),
    }
}

/// Scores `T · q` against the noisy label.
pub fn forward_correct(base: LossSpec, t: &TransitionMatrix) -> Result<LossSpec> {
    check_base(&base)?;
    Ok(LossSpec::Forward(Box::new(ForwardCorrection {
        base,
        matrix: t.clone(),
    })))
}

/// 2-norm condition number of a square matrix.
pub fn condition_number(m: &Array2<f64>) -> f64 {
    let (r, c) = m.dim();
    let dm = DMatrix::from_fn(r, c, |i, j| m[[i, j]]);
    let sv = dm.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// De-biases the base loss: the value at noisy label `ỹ` is `[(Tᵀ)⁻¹ ℓ(q)]_ỹ`, so its
/// expectation over noisy labels equals the base loss at the clean label.
pub fn backward_correct(base: LossSpec, t: &TransitionMatrix) -> Result<LossSpec> {
    check_base(&base)?;
    let condition = condition_number(t.entries());
    if !(condition <= MAX_CONDITION) {
        return Err(Error::CorrectionUnavailable(format!(
            "transition matrix condition number {condition:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    let c = t.classes();
    let tt = DMatrix::from_fn(c, c, |i, j| t.get(j, i));
    let inv = tt
        .try_inverse()
        .ok_or_else(|| Error::CorrectionUnavailable("transition matrix is singular".into()))?;
    let inverse_transpose = Array2::from_shape_fn((c, c), |(i, j)| inv[(i, j)]);
    Ok(LossSpec::Backward(Box::new(BackwardCorrection {
        base,
        matrix: t.clone(),
        inverse_transpose,
        condition,
    })))
}

/// `ℓ(q, y)` after validating `q` and `y`.
pub fn loss(spec: &LossSpec, q: &Probs, label: usize) -> Result<f64> {
    spec.value(q, label)
}

/// `∇_q ℓ(q, y)`.
pub fn loss_gradient(spec: &LossSpec, q: &Probs, label: usize) -> Result<Vec<f64>> {
    spec.gradient(q, label)
}
