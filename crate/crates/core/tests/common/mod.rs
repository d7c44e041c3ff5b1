//! Independent oracles and random instance generators shared by the integration tests.
#![allow(dead_code)]

use nes_core::noise::TransitionMatrix;
use nes_core::rng::{self, Rng, Stream};
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    rng::stream(seed, Stream::Test)
}

/// A uniformly random point of the simplex with `c` entries.
pub fn random_simplex(r: &mut Rng, c: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..c)
        .map(|_| -r.random::<f64>().max(1e-300).ln())
        .collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Random column-stochastic matrix whose diagonal is at least `margin` above every other
/// entry of its column.
pub fn random_dominant(r: &mut Rng, c: usize, margin: f64) -> TransitionMatrix {
    loop {
        let cols: Vec<Vec<f64>> = (0..c)
            .map(|j| {
                let mut v = random_simplex(r, c);
                let boost = r.random_range(0.5..2.0);
                v[j] += boost;
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect()
            })
            .collect();
        let ok = (0..c).all(|j| (0..c).all(|i| i == j || cols[j][j] >= cols[j][i] + margin));
        if ok {
            let rows: Vec<Vec<f64>> = (0..c)
                .map(|i| (0..c).map(|j| cols[j][i]).collect())
                .collect();
            return TransitionMatrix::from_rows(&rows).unwrap();
        }
    }
}

/// Column-permutation matrix: column `j` holds `values` shifted cyclically by `j`.
pub fn cyclic_matrix(values: &[f64]) -> TransitionMatrix {
    let c = values.len();
    let rows: Vec<Vec<f64>> = (0..c)
        .map(|i| (0..c).map(|j| values[(i + c - j) % c]).collect())
        .collect();
    TransitionMatrix::from_rows(&rows).unwrap()
}

/// Symmetric matrix written out entry by entry.
pub fn symmetric_oracle(c: usize, eta: f64) -> Vec<Vec<f64>> {
    (0..c)
        .map(|i| {
            (0..c)
                .map(|j| {
                    if i == j {
                        1.0 - eta
                    } else {
                        eta / (c as f64 - 1.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Separable finite distribution: support weights and the label of each point.
pub struct Separable {
    pub weights: Vec<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Separable {
    pub fn random(r: &mut Rng, points: usize, classes: usize) -> Self {
        Separable {
            weights: random_simplex(r, points),
            labels: (0..points).map(|_| r.random_range(0..classes)).collect(),
            classes,
        }
    }

    /// One-hot posteriors in the library's representation.
    pub fn posteriors(&self) -> Vec<Vec<f64>> {
        self.labels
            .iter()
            .map(|&y| {
                (0..self.classes)
                    .map(|k| f64::from(u8::from(k == y)))
                    .collect()
            })
            .collect()
    }

    pub fn clean_risk(&self, preds: &[usize]) -> f64 {
        self.weights
            .iter()
            .zip(&self.labels)
            .zip(preds)
            .filter(|((_, y), f)| y != f)
            .map(|((w, _), _)| w)
            .sum()
    }

    /// Brute-force sum over (point, noisy label) pairs.
    pub fn noisy_risk(&self, preds: &[usize], t: &TransitionMatrix) -> f64 {
        let mut risk = 0.0;
        for ((&w, &y), &f) in self.weights.iter().zip(&self.labels).zip(preds) {
            for noisy in 0..self.classes {
                if noisy != f {
                    risk += w * t.get(noisy, y);
                }
            }
        }
        risk
    }

    pub fn random_predictions(&self, r: &mut Rng) -> Vec<usize> {
        (0..self.labels.len())
            .map(|_| r.random_range(0..self.classes))
            .collect()
    }
}

/// Indices attaining the minimum of `v` within `tol`.
pub fn argmin_set(v: &[f64], tol: f64) -> Vec<usize> {
    let m = v.iter().copied().fold(f64::INFINITY, f64::min);
    (0..v.len()).filter(|&i| v[i] <= m + tol).collect()
}
