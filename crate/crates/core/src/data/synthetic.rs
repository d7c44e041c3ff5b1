use ndarray::{Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Half-width of the hypercube whose vertices serve as class centres.
const CENTRE_HALF_WIDTH: f64 = 2.0;

/// Gaussian-cluster classification data.
///
/// Each class is one unit-covariance Gaussian in the first `informative` coordinates, centred
/// on a distinct vertex of the hypercube `[-2, 2]^informative` chosen at random per seed.
/// Labels are drawn uniformly. The remaining `d - informative` coordinates are standard normal
/// noise. Every column is finally standardised to zero mean and unit variance.
pub fn make_synthetic(
    n: usize,
    d: usize,
    informative: usize,
    c: usize,
    seed: u64,
) -> Result<Dataset> {
    if informative == 0 || informative > d {
        return Err(Error::Domain(format!(
            "informative = {informative} must be in 1..={d}"
        )));
    }
    if c < 2 {
        return Err(Error::Domain(format!("need at least 2 classes, got {c}")));
    }
    if informative < usize::BITS as usize && c > 1usize << informative {
        return Err(Error::Domain(format!(
            "{c} classes need more than {informative} informative features"
        )));
    }
    let mut r = rng::stream(seed, Stream::Synthetic);
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(c);
    while centres.len() < c {
        let v: Vec<f64> = (0..informative)
            .map(|_| {
                if r.random::<bool>() {
                    CENTRE_HALF_WIDTH
                } else {
                    -CENTRE_HALF_WIDTH
                }
            })
            .collect();
        if !centres.contains(&v) {
            centres.push(v);
        }
    }
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let mut x = Array2::<f64>::zeros((n, d));
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut r);
            x[[i, j]] = if j < informative {
                centres[y][j] + z
            } else {
                z
            };
        }
    }
    if n > 1 {
        let mean = x.mean_axis(Axis(0)).expect("n > 0");
        let sd = x.std_axis(Axis(0), 0.0);
        for mut row in x.rows_mut() {
            for j in 0..d {
                if sd[j] > 0.0 {
                    row[j] = (row[j] - mean[j]) / sd[j];
                }
            }
        }
    }
    Dataset::new(
        x,
        labels,
        c,
        Provenance {
            source: format!("synthetic n={n} d={d} informative={informative} c={c}"),
            seed: Some(seed),
            noise: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_standardisation() {
        let ds = make_synthetic(2000, 20, 10, 3, 42).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes()), (2000, 20, 3));
        let mean = ds.features().mean_axis(Axis(0)).unwrap();
        let sd = ds.features().std_axis(Axis(0), 0.0);
        for j in 0..20 {
            assert!(mean[j].abs() < 1e-10);
            assert!((sd[j] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn balanced_labels() {
        let n = 3000;
        let ds = make_synthetic(n, 5, 5, 3, 1).unwrap();
        let p = 1.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for k in 0..3 {
            let count = ds.clean_labels().iter().filter(|&&y| y == k).count() as f64;
            assert!((count - n as f64 * p).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            make_synthetic(50, 4, 2, 3, 7).unwrap(),
            make_synthetic(50, 4, 2, 3, 7).unwrap()
        );
        assert_ne!(
            make_synthetic(50, 4, 2, 3, 7).unwrap(),
            make_synthetic(50, 4, 2, 3, 8).unwrap()
        );
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(make_synthetic(10, 3, 4, 2, 0).is_err());
        assert!(make_synthetic(10, 3, 1, 3, 0).is_err());
        assert!(make_synthetic(10, 3, 2, 1, 0).is_err());
    }
}
