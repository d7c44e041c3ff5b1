//! Constructors for the standard noise families.

use ndarray::Array2;

use super::TransitionMatrix;
use crate::error::{Error, Result};

fn check_rate(eta: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&eta) {
        return Err(Error::Domain(format!(
            "noise rate {eta} is not in [0, {max}]"
        )));
    }
    Ok(())
}

fn check_classes(c: usize) -> Result<()> {
    if c < 2 {
        return Err(Error::Domain(format!("need at least 2 classes, got {c}")));
    }
    Ok(())
}

/// Diagonal `1 - eta`, every off-diagonal entry `eta / (c - 1)`.
pub fn build_symmetric(c: usize, eta: f64) -> Result<TransitionMatrix> {
    check_classes(c)?;
    check_rate(eta, 1.0)?;
    let off = eta / (c as f64 - 1.0);
    let m = Array2::from_shape_fn((c, c), |(i, j)| if i == j { 1.0 - eta } else { off });
    TransitionMatrix::new(m)
}

/// Symmetric noise as produced by a label-resampling procedure.
///
/// With `include_original` a corrupted label is drawn uniformly from all `c` classes, so it can
/// land on the clean label again and the effective flip rate is `eta (c-1)/c`. Without it the
/// replacement is drawn from the other `c - 1` classes and `eta` is the flip rate.
pub fn build_symmetric_injection(
    c: usize,
    eta: f64,
    include_original: bool,
) -> Result<TransitionMatrix> {
    check_classes(c)?;
    check_rate(eta, 1.0)?;
    if include_original {
        build_symmetric(c, eta * (c as f64 - 1.0) / c as f64)
    } else {
        build_symmetric(c, eta)
    }
}

/// Label `j` flips to `j + 1 (mod c)` with probability `eta`.
pub fn build_circular(c: usize, eta: f64) -> Result<TransitionMatrix> {
    check_classes(c)?;
    check_rate(eta, 1.0)?;
    let mut m = Array2::zeros((c, c));
    for j in 0..c {
        m[[j, j]] += 1.0 - eta;
        m[[(j + 1) % c, j]] += eta;
    }
    TransitionMatrix::new(m)
}

/// Each `(source, target)` pair moves mass `eta` from `source` to `target`.
pub fn build_pairwise(c: usize, pairs: &[(usize, usize)], eta: f64) -> Result<TransitionMatrix> {
    check_classes(c)?;
    check_rate(eta, 1.0)?;
    let mut sources = vec![false; c];
    let mut targets = vec![false; c];
    let mut m = Array2::eye(c);
    for &(s, t) in pairs {
        if s >= c || t >= c {
            return Err(Error::InvalidPairing(format!(
                "pair ({s}, {t}) out of range for {c} classes"
            )));
        }
        if s == t {
            return Err(Error::InvalidPairing(format!(
                "label {s} paired with itself"
            )));
        }
        if std::mem::replace(&mut sources[s], true) {
            return Err(Error::InvalidPairing(format!(
                "label {s} is a source twice"
            )));
        }
        if std::mem::replace(&mut targets[t], true) {
            return Err(Error::InvalidPairing(format!(
                "label {t} is a target twice"
            )));
        }
        m[[s, s]] = 1.0 - eta;
        m[[t, s]] = eta;
    }
    TransitionMatrix::new(m)
}

/// Ten-class digit noise: within each of `{0,1,2}`, `{3,4,5}`, `{6,7,8}` the block
/// `[[1-η, η, η], [η, 1-η, η], [0, 0, 1-2η]]` applies, and label 9 is untouched.
pub fn build_asym_mnist(eta: f64) -> Result<TransitionMatrix> {
    check_rate(eta, 0.5)?;
    let block = [
        [1.0 - eta, eta, eta],
        [eta, 1.0 - eta, eta],
        [0.0, 0.0, 1.0 - 2.0 * eta],
    ];
    let mut m = Array2::zeros((10, 10));
    for g in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                m[[3 * g + i, 3 * g + j]] = block[i][j];
            }
        }
    }
    m[[9, 9]] = 1.0;
    TransitionMatrix::new(m)
}

fn check_partition(groups: &[Vec<usize>]) -> Result<usize> {
    let c: usize = groups.iter().map(Vec::len).sum();
    let mut seen = vec![false; c];
    for g in groups {
        if g.is_empty() {
            return Err(Error::Domain("empty group in label partition".into()));
        }
        for &l in g {
            if l >= c || std::mem::replace(&mut seen[l], true) {
                return Err(Error::Domain(format!(
                    "groups do not partition 0..{c}: label {l}"
                )));
            }
        }
    }
    Ok(c)
}

/// Circular noise inside each group, following the listed order of its labels.
pub fn build_superclass_circular(groups: &[Vec<usize>], eta: f64) -> Result<TransitionMatrix> {
    check_rate(eta, 1.0)?;
    let c = check_partition(groups)?;
    check_classes(c)?;
    let mut m = Array2::zeros((c, c));
    for g in groups {
        let k = g.len();
        for (pos, &j) in g.iter().enumerate() {
            m[[j, j]] += if k == 1 { 1.0 } else { 1.0 - eta };
            if k > 1 {
                m[[g[(pos + 1) % k], j]] += eta;
            }
        }
    }
    TransitionMatrix::new(m)
}

/// Symmetric noise restricted to each group: a label moves uniformly to the other members of
/// its group at total rate `eta`. Singleton groups keep their label.
pub fn build_subset_symmetric(groups: &[Vec<usize>], eta: f64) -> Result<TransitionMatrix> {
    check_rate(eta, 1.0)?;
    let c = check_partition(groups)?;
    check_classes(c)?;
    let mut m = Array2::zeros((c, c));
    for g in groups {
        let k = g.len();
        for &j in g {
            if k == 1 {
                m[[j, j]] = 1.0;
                continue;
            }
            for &i in g {
                m[[i, j]] = if i == j {
                    1.0 - eta
                } else {
                    eta / (k as f64 - 1.0)
                };
            }
        }
    }
    TransitionMatrix::new(m)
}

/// Groups `{0..k}, {k..2k}, ...` covering `0..c`.
pub fn consecutive_groups(c: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || !c.is_multiple_of(k) {
        return Err(Error::Domain(format!(
            "{c} classes cannot be split into groups of {k}"
        )));
    }
    Ok((0..c / k).map(|g| (g * k..(g + 1) * k).collect()).collect())
}

/// CIFAR-10 flips: truck to automobile, bird to airplane, deer to horse, cat and dog swapped.
pub const CIFAR10_PAIRS: [(usize, usize); 5] = [(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)];

/// Three-class permutation-symmetric matrix used for g-vector experiments.
pub fn build_ternary_gvector(eta: f64) -> Result<TransitionMatrix> {
    check_rate(eta, 2.0 / 3.0)?;
    let a = 1.0 - 1.5 * eta;
    let b = 0.5 * eta;
    TransitionMatrix::from_rows(&[vec![a, b, eta], vec![eta, a, b], vec![b, eta, a]])
}

/// Fixed five-class permutation-symmetric matrix for the five-class g-vector experiment.
pub fn build_five_class_gvector() -> TransitionMatrix {
    let first = [0.5, 0.2, 0.15, 0.1, 0.05];
    let m = Array2::from_shape_fn((5, 5), |(i, j)| first[(i + 5 - j) % 5]);
    TransitionMatrix::new(m).expect("fixed matrix is column-stochastic")
}
