use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::TransitionMatrix;

/// Default simplex grid step.
pub const DEFAULT_GRID_RESOLUTION: f64 = 0.02;

/// Largest class count the grid search accepts.
pub const MAX_SEARCH_CLASSES: usize = 6;

const ORDER_TOL: f64 = 1e-12;

/// A clean posterior at which two labels are ordered differently before and after noise.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderViolation {
    pub posterior: Vec<f64>,
    pub labels: (usize, usize),
}

/// Sweeps the simplex grid with step `resolution` for a posterior `p` and labels `k1 != k2`
/// such that `(Tp)_k2 <= (Tp)_k1` and `p_k2 <= p_k1` disagree.
///
/// Grid points are visited in lexicographic order of their coordinates and label pairs in
/// lexicographic order, so the witness returned is the smallest one regardless of how the
/// search is split across threads.
pub fn find_order_violation(
    t: &TransitionMatrix,
    resolution: f64,
) -> Result<Option<OrderViolation>> {
    let c = t.classes();
    if c > MAX_SEARCH_CLASSES {
        return Err(Error::Domain(format!(
            "grid search supports at most {MAX_SEARCH_CLASSES} classes, got {c}"
        )));
    }
    let steps = (1.0 / resolution).round();
    if !(resolution > 0.0 && resolution <= 1.0) || (steps * resolution - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "resolution {resolution} must divide 1"
        )));
    }
    let m = steps as usize;
    Ok((0..=m).into_par_iter().find_map_first(|first| {
        let mut counts = vec![0usize; c];
        counts[0] = first;
        search(t, &mut counts, 1, m - first, m)
    }))
}

fn search(
    t: &TransitionMatrix,
    counts: &mut [usize],
    pos: usize,
    left: usize,
    m: usize,
) -> Option<OrderViolation> {
    let c = counts.len();
    if pos == c - 1 {
        counts[pos] = left;
        return check(t, counts, m);
    }
    for k in 0..=left {
        counts[pos] = k;
        if let Some(v) = search(t, counts, pos + 1, left - k, m) {
            return Some(v);
        }
    }
    None
}

fn check(t: &TransitionMatrix, counts: &[usize], m: usize) -> Option<OrderViolation> {
    let c = counts.len();
    let p: Vec<f64> = counts.iter().map(|&k| k as f64 / m as f64).collect();
    let tp = t.apply(&p);
    for k1 in 0..c {
        for k2 in 0..c {
            if k1 == k2 {
                continue;
            }
            let clean = counts[k2] <= counts[k1];
            let noisy = tp[k2] <= tp[k1] + ORDER_TOL;
            if clean != noisy {
                return Some(OrderViolation {
                    posterior: p,
                    labels: (k1, k2),
                });
            }
        }
    }
    None
}
