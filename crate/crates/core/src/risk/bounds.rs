use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::noise::{TransitionMatrix, TAXONOMY_TOL};

/// Which form of the worst-case bound was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Both the best noisy risk and the selected model's noisy risk are known.
    General,
    /// The selected model attains the best noisy risk.
    OptimalNoisyRisk,
    /// Pairwise noise.
    Pairwise,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::General => "general",
            Regime::OptimalNoisyRisk => "optimal-noisy-risk",
            Regime::Pairwise => "pairwise",
        })
    }
}

/// Inputs and value of a bound on `|R_k - R_*|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub regime: Regime,
    pub eta: f64,
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
    /// Best achievable noisy risk, or the selected model's noisy risk for pairwise noise.
    pub noisy_risk_star: f64,
    pub noisy_risk_l: Option<f64>,
    pub bound: f64,
}

impl BoundReport {
    /// CSV with `#` provenance lines.
    pub fn to_csv(&self, provenance: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        out.push_str("regime,eta,eta_min,eta_max,noisy_risk_star,noisy_risk_l,bound\n");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            self.regime,
            self.eta,
            opt(self.eta_min),
            opt(self.eta_max),
            self.noisy_risk_star,
            opt(self.noisy_risk_l),
            self.bound
        );
        out
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "regime          {}", self.regime)?;
        writeln!(f, "eta             {}", self.eta)?;
        if let (Some(lo), Some(hi)) = (self.eta_min, self.eta_max) {
            writeln!(f, "eta_min         {lo}")?;
            writeln!(f, "eta_max         {hi}")?;
        }
        writeln!(f, "noisy risk *    {}", self.noisy_risk_star)?;
        if let Some(l) = self.noisy_risk_l {
            writeln!(f, "noisy risk l    {l}")?;
        }
        write!(f, "bound |R_k-R_*| {:.17}", self.bound)
    }
}

/// Worst-case clean-risk gap under column-permutation noise with off-diagonal range
/// `[eta_min, eta_max]` and total flip rate `eta`.
///
/// With `noisy_risk_l` the general form
/// `(R^η_* - η)/(1-η-η_max) - (R^η_l - η)/(1-η-η_min)` is returned; without it the form for a
/// model attaining the best noisy risk, `(R^η_* - η)(1/(1-η-η_max) - 1/(1-η-η_min))`.
pub fn worst_case_gap(
    noisy_risk_star: f64,
    noisy_risk_l: Option<f64>,
    eta: f64,
    eta_min: f64,
    eta_max: f64,
) -> Result<BoundReport> {
    if eta_min > eta_max {
        return Err(Error::Domain(format!(
            "eta_min = {eta_min} exceeds eta_max = {eta_max}"
        )));
    }
    let d_max = 1.0 - eta - eta_max;
    let d_min = 1.0 - eta - eta_min;
    if !(d_max > 0.0) {
        return Err(Error::Regime(format!(
            "1 - eta - eta_max = {d_max} must be positive (eta = {eta}, eta_max = {eta_max})"
        )));
    }
    let (regime, bound) = match noisy_risk_l {
        Some(l) => (
            Regime::General,
            (noisy_risk_star - eta) / d_max - (l - eta) / d_min,
        ),
        None => (
            Regime::OptimalNoisyRisk,
            (noisy_risk_star - eta) * (1.0 / d_max - 1.0 / d_min),
        ),
    };
    Ok(BoundReport {
        regime,
        eta,
        eta_min: Some(eta_min),
        eta_max: Some(eta_max),
        noisy_risk_star,
        noisy_risk_l,
        bound,
    })
}

/// Gap bound under pairwise noise: `η (R^η_k - η) / ((1-2η)(1-η))`.
pub fn pairwise_gap(noisy_risk_k: f64, eta: f64) -> Result<BoundReport> {
    if !(eta < 0.5) {
        return Err(Error::Regime(format!(
            "pairwise bound needs eta < 1/2, got {eta}"
        )));
    }
    Ok(BoundReport {
        regime: Regime::Pairwise,
        eta,
        eta_min: None,
        eta_max: None,
        noisy_risk_star: noisy_risk_k,
        noisy_risk_l: None,
        bound: eta * (noisy_risk_k - eta) / ((1.0 - 2.0 * eta) * (1.0 - eta)),
    })
}

/// `(η, η_min, η_max)` of a matrix with constant diagonal: one minus the diagonal and the
/// extreme off-diagonal entries.
pub fn bound_parameters(t: &TransitionMatrix) -> Result<(f64, f64, f64)> {
    let d = t.diagonal();
    if d.iter().any(|&v| (v - d[0]).abs() > TAXONOMY_TOL) {
        return Err(Error::Regime(
            "worst-case bound needs a constant diagonal".into(),
        ));
    }
    let (lo, hi) = t.off_diagonal_range();
    Ok((1.0 - d[0], lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn permutation_example() {
        let t = TransitionMatrix::from_rows(&[
            vec![0.5, 0.2, 0.3],
            vec![0.3, 0.5, 0.2],
            vec![0.2, 0.3, 0.5],
        ])
        .unwrap();
        let (eta, lo, hi) = bound_parameters(&t).unwrap();
        assert_eq!((eta, lo, hi), (0.5, 0.2, 0.3));
        let r = worst_case_gap(0.6, None, eta, lo, hi).unwrap();
        assert_abs_diff_eq!(r.bound, 1.0 / 6.0, epsilon = 1e-12);
        assert_eq!(r.regime, Regime::OptimalNoisyRisk);
    }

    #[test]
    fn degenerate_inputs_give_zero() {
        assert_eq!(worst_case_gap(0.7, None, 0.3, 0.1, 0.1).unwrap().bound, 0.0);
        assert_eq!(
            worst_case_gap(0.3, None, 0.3, 0.05, 0.2).unwrap().bound,
            0.0
        );
        assert_eq!(pairwise_gap(0.2, 0.2).unwrap().bound, 0.0);
    }

    #[test]
    fn general_form_reduces_to_optimal() {
        let a = worst_case_gap(0.6, Some(0.6), 0.5, 0.2, 0.3).unwrap();
        let b = worst_case_gap(0.6, None, 0.5, 0.2, 0.3).unwrap();
        assert_abs_diff_eq!(a.bound, b.bound, epsilon = 1e-15);
        assert_eq!(a.regime, Regime::General);
    }

    #[test]
    fn pairwise_examples() {
        assert_abs_diff_eq!(
            pairwise_gap(0.5, 0.4).unwrap().bound,
            1.0 / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pairwise_gap(0.3, 0.1).unwrap().bound,
            1.0 / 36.0,
            epsilon = 1e-15
        );
        assert!(matches!(pairwise_gap(0.6, 0.5), Err(Error::Regime(_))));
    }

    #[test]
    fn regime_violation() {
        assert!(matches!(
            worst_case_gap(0.6, None, 0.6, 0.2, 0.4),
            Err(Error::Regime(_))
        ));
        assert!(worst_case_gap(0.6, None, 0.3, 0.4, 0.2).is_err());
    }

    #[test]
    fn csv_has_provenance() {
        let r = pairwise_gap(0.5, 0.4).unwrap();
        let csv = r.to_csv(&[("source".into(), "test".into())]);
        assert!(csv.starts_with("# source = test\nregime,"));
        assert!(csv.contains("pairwise,0.4,,,0.5,,"));
    }
}
