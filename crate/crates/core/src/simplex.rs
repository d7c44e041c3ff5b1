//! Points of the probability simplex and argmax with explicit ties.

use crate::error::{Error, Result};

/// Tolerance for the sum-to-one check on simplex points.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Two scores closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-12;

/// A probability vector: nonnegative entries summing to one within [`SIMPLEX_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Probs(Vec<f64>);

impl Probs {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values)?;
        Ok(Probs(values))
    }

    pub fn one_hot(c: usize, k: usize) -> Result<Self> {
        if k >= c {
            return Err(Error::Domain(format!(
                "label {k} out of range for {c} classes"
            )));
        }
        let mut v = vec![0.0; c];
        v[k] = 1.0;
        Ok(Probs(v))
    }

    pub fn uniform(c: usize) -> Self {
        Probs(vec![1.0 / c as f64; c])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> ArgMax {
        argmax(&self.0)
    }
}

impl std::ops::Index<usize> for Probs {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Rejects vectors that are empty, contain negative or non-finite entries, or do not sum to one.
pub fn check_simplex(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!(
            "probability entry {bad} is not in [0, 1]"
        )));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Result of an argmax that refuses to break ties silently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgMax {
    Unique(usize),
    /// All indices attaining the maximum, ascending.
    Tie(Vec<usize>),
}

impl ArgMax {
    /// The lowest maximising index, which is the plug-in convention.
    pub fn lowest(&self) -> usize {
        match self {
            ArgMax::Unique(k) => *k,
            ArgMax::Tie(ks) => ks[0],
        }
    }

    pub fn contains(&self, k: usize) -> bool {
        match self {
            ArgMax::Unique(j) => *j == k,
            ArgMax::Tie(ks) => ks.contains(&k),
        }
    }
}

/// Argmax reporting every index within [`TIE_TOL`] of the maximum.
pub fn argmax(values: &[f64]) -> ArgMax {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] >= best - TIE_TOL)
        .collect();
    if winners.len() == 1 {
        ArgMax::Unique(winners[0])
    } else {
        ArgMax::Tie(winners)
    }
}

/// Index of the first exact maximum. Used wherever a single prediction is required.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
