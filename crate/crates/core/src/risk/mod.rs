//! Risk theory as functions: empirical 0-1 risk, the affine clean-to-noisy map, the
//! covariance band for instance-dependent symmetric noise, worst-case gap bounds, the search
//! for order-violating posteriors, and g-vectors.

mod bounds;
mod exact;
mod gvector;
mod order;

pub use bounds::*;
pub use exact::*;
pub use gvector::*;
pub use order::*;

use crate::data::{Dataset, LabelTrack};
use crate::error::Result;
use crate::estimators::ProbabilityEstimator;
use crate::training::{evaluate_accuracy, RunLog};

/// Clean and noisy 0-1 risk of the model from one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskPoint {
    pub epoch: usize,
    pub clean: f64,
    pub noisy: f64,
}

/// Validation risks of every logged epoch.
pub fn risk_points(log: &RunLog) -> Vec<RiskPoint> {
    log.records
        .iter()
        .map(|r| RiskPoint {
            epoch: r.epoch,
            clean: 1.0 - r.clean_val_acc,
            noisy: 1.0 - r.noisy_val_acc,
        })
        .collect()
}

/// Mean 0-1 loss of the plug-in classifier against one label track.
pub fn empirical_risk01(
    model: &dyn ProbabilityEstimator,
    dataset: &Dataset,
    track: LabelTrack,
) -> Result<f64> {
    Ok(1.0 - evaluate_accuracy(model, dataset, track)?)
}

/// `1 - cη/(c-1)`, the slope of the affine map between clean and noisy risk.
pub fn affine_slope(eta: f64, c: usize) -> f64 {
    1.0 - c as f64 * eta / (c as f64 - 1.0)
}

/// Noisy risk predicted from clean risk under uniform symmetric noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineRisk {
    pub noisy_risk: f64,
    /// `eta < (c-1)/c`: the map is increasing, so risk rankings carry over.
    pub class_preserving: bool,
}

/// `R^η = R (1 - cη/(c-1)) + η`.
pub fn affine_noisy_risk(risk: f64, eta: f64, c: usize) -> AffineRisk {
    AffineRisk {
        noisy_risk: risk * affine_slope(eta, c) + eta,
        class_preserving: eta < (c as f64 - 1.0) / c as f64,
    }
}

/// Accuracy form of the same map: `A^η = A (1 - cη/(c-1)) + η/(c-1)`.
pub fn affine_noisy_accuracy(accuracy: f64, eta: f64, c: usize) -> f64 {
    accuracy * affine_slope(eta, c) + eta / (c as f64 - 1.0)
}

/// Summary statistics of a per-instance noise rate `η_x` and per-instance accuracy `g(x)`
/// (probability that the prediction at `x` equals the clean label).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceStats {
    pub mean_eta: f64,
    pub sd_eta: f64,
    pub mean_g: f64,
    pub sd_g: f64,
    pub cov: f64,
}

impl CovarianceStats {
    /// Weighted plug-in (1/n) moments. Weights are normalised internally.
    pub fn from_samples(weights: &[f64], eta: &[f64], g: &[f64]) -> Result<Self> {
        use crate::error::Error;
        if weights.len() != eta.len() || eta.len() != g.len() || eta.is_empty() {
            return Err(Error::Shape(
                "weights, rates and accuracies must have one equal, nonzero length".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Domain(
                "weights must be nonnegative with a positive sum".into(),
            ));
        }
        let mean = |v: &[f64]| v.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / total;
        let me = mean(eta);
        let mg = mean(g);
        let e2: Vec<f64> = eta.iter().map(|e| (e - me) * (e - me)).collect();
        let g2: Vec<f64> = g.iter().map(|x| (x - mg) * (x - mg)).collect();
        let eg: Vec<f64> = eta
            .iter()
            .zip(g)
            .map(|(e, x)| (e - me) * (x - mg))
            .collect();
        Ok(CovarianceStats {
            mean_eta: me,
            sd_eta: mean(&e2).max(0.0).sqrt(),
            mean_g: mg,
            sd_g: mean(&g2).max(0.0).sqrt(),
            cov: mean(&eg),
        })
    }

    /// Uniform weights.
    pub fn from_unweighted(eta: &[f64], g: &[f64]) -> Result<Self> {
        Self::from_samples(&vec![1.0; eta.len()], eta, g)
    }
}

/// `R^η = R (1 - cη̄/(c-1)) + η̄ + (c/(c-1)) Cov(g, η_x)`.
pub fn covariance_noisy_risk(risk: f64, stats: &CovarianceStats, c: usize) -> f64 {
    let k = c as f64 / (c as f64 - 1.0);
    risk * (1.0 - k * stats.mean_eta) + stats.mean_eta + k * stats.cov
}

/// Interval for the noisy risk when only the spreads are known:
/// the affine value at `η̄` plus or minus `σ_η σ_g c/(c-1)`.
pub fn covariance_band(risk: f64, stats: &CovarianceStats, c: usize) -> (f64, f64) {
    let k = c as f64 / (c as f64 - 1.0);
    let centre = risk * (1.0 - k * stats.mean_eta) + stats.mean_eta;
    let half = stats.sd_eta * stats.sd_g * k;
    (centre - half, centre + half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn affine_examples() {
        assert_eq!(affine_noisy_risk(0.0, 0.36, 10).noisy_risk, 0.36);
        assert_abs_diff_eq!(
            affine_noisy_risk(0.1, 0.36, 10).noisy_risk,
            0.42,
            epsilon = 1e-15
        );
        assert!(affine_noisy_risk(0.1, 0.36, 10).class_preserving);
        assert!(!affine_noisy_risk(0.1, 0.95, 10).class_preserving);
        assert_abs_diff_eq!(affine_slope(0.36, 10), 0.6, epsilon = 1e-15);
        let a = 0.83;
        assert_abs_diff_eq!(
            affine_noisy_accuracy(a, 0.36, 10),
            1.0 - affine_noisy_risk(1.0 - a, 0.36, 10).noisy_risk,
            epsilon = 1e-15
        );
    }

    #[test]
    fn covariance_special_cases() {
        let s = CovarianceStats::from_unweighted(&[0.3, 0.3, 0.3], &[0.9, 0.5, 0.7]).unwrap();
        assert_eq!(s.sd_eta, 0.0);
        assert_abs_diff_eq!(
            covariance_noisy_risk(0.3, &s, 4),
            affine_noisy_risk(0.3, 0.3, 4).noisy_risk,
            epsilon = 1e-15
        );
        let (lo, hi) = covariance_band(0.3, &s, 4);
        assert_abs_diff_eq!(lo, hi, epsilon = 1e-15);
    }

    /// Four support points with hand-set noise rates and accuracies; the noisy risk is summed
    /// pointwise from its definition.
    #[test]
    fn covariance_matches_enumeration() {
        let c = 5;
        let w = [0.1, 0.2, 0.3, 0.4];
        let eta = [0.1, 0.5, 0.2, 0.35];
        let g = [0.95, 0.4, 0.8, 0.6];
        let lhs: f64 = (0..4)
            .map(|i| {
                let noisy_acc = g[i] * (1.0 - eta[i]) + (1.0 - g[i]) * eta[i] / (c as f64 - 1.0);
                w[i] * (1.0 - noisy_acc)
            })
            .sum();
        let risk: f64 = (0..4).map(|i| w[i] * (1.0 - g[i])).sum();
        let s = CovarianceStats::from_samples(&w, &eta, &g).unwrap();
        assert_abs_diff_eq!(covariance_noisy_risk(risk, &s, c), lhs, epsilon = 1e-12);
        assert!(s.cov.abs() <= s.sd_eta * s.sd_g + 1e-15);
        let (lo, hi) = covariance_band(risk, &s, c);
        assert!(lo <= lhs && lhs <= hi);
    }

    #[test]
    fn covariance_rejects_bad_input() {
        assert!(CovarianceStats::from_samples(&[1.0], &[0.1, 0.2], &[0.5, 0.5]).is_err());
        assert!(CovarianceStats::from_samples(&[0.0, 0.0], &[0.1, 0.2], &[0.5, 0.5]).is_err());
    }
}
