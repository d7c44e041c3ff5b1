use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::{Dataset, LabelTrack};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Features paired with a single label track.
///
/// The noisy and clean validation sets share one feature matrix; each carries only its own
/// labels, so a consumer handed the noisy set has no access to clean labels.
#[derive(Debug, Clone)]
pub struct EvalSet {
    features: Arc<Array2<f64>>,
    labels: Vec<usize>,
    track: LabelTrack,
    classes: usize,
}

impl EvalSet {
    pub fn new(
        features: Arc<Array2<f64>>,
        labels: Vec<usize>,
        track: LabelTrack,
        classes: usize,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        Ok(EvalSet {
            features,
            labels,
            track,
            classes,
        })
    }

    pub fn from_dataset(ds: &Dataset, track: LabelTrack) -> Result<Self> {
        let labels = ds.labels(track)?.to_vec();
        EvalSet::new(Arc::new(ds.features().clone()), labels, track, ds.classes())
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn track(&self) -> LabelTrack {
        self.track
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Same features, labels replaced. Used by tests that tamper with one track.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        EvalSet::new(self.features.clone(), labels, self.track, self.classes)
    }
}

/// Row indices of the original dataset in each partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Training data plus the three evaluation sets.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    /// Fitting set; models train on its noisy labels.
    pub train: Dataset,
    /// Validation instances with noisy labels, the only set NES reads.
    pub noisy_val: EvalSet,
    /// The same validation instances with clean labels, read by ES.
    pub clean_val: EvalSet,
    /// Held-out instances with clean labels.
    pub test: EvalSet,
    pub indices: SplitIndices,
}

/// Shuffles rows with `seed` and cuts them into contiguous train/validation/test blocks.
///
/// Sizes are `round(n·train)`, `round(n·val)` and the remainder. The dataset must carry noisy
/// labels.
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<SplitBundle> {
    let (ft, fv, fs) = fractions;
    let mut problems = Vec::new();
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) {
        problems.push(format!(
            "split fractions {fractions:?} must all be positive"
        ));
    }
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        problems.push(format!("split fractions sum to {}, not 1", ft + fv + fs));
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let noisy = dataset.labels(LabelTrack::Noisy)?;
    let n = dataset.len();
    let n_train = (n as f64 * ft).round() as usize;
    let n_val = ((n as f64 * fv).round() as usize).min(n - n_train.min(n));
    let n_test = n.saturating_sub(n_train + n_val);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::config(format!(
            "split of {n} rows gives an empty partition ({n_train}/{n_val}/{n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Stream::Split));
    let indices = SplitIndices {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    let c = dataset.classes();
    let x = dataset.features();
    let val_x = Arc::new(x.select(Axis(0), &indices.val));
    let pick = |labels: &[usize], idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let clean = dataset.clean_labels();
    Ok(SplitBundle {
        train: dataset.select(&indices.train),
        noisy_val: EvalSet::new(
            val_x.clone(),
            pick(noisy, &indices.val),
            LabelTrack::Noisy,
            c,
        )?,
        clean_val: EvalSet::new(val_x, pick(clean, &indices.val), LabelTrack::Clean, c)?,
        test: EvalSet::new(
            Arc::new(x.select(Axis(0), &indices.test)),
            pick(clean, &indices.test),
            LabelTrack::Clean,
            c,
        )?,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;

    fn ds(n: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let z: Vec<usize> = (0..n).map(|i| (i + 1) % 3).collect();
        Dataset::new(x, y, 3, Provenance::default())
            .unwrap()
            .with_noisy_labels(z, "shift")
            .unwrap()
    }

    #[test]
    fn proportions() {
        let s = split(&ds(1000), (0.7, 0.15, 0.15), 1).unwrap();
        assert_eq!(
            (s.train.len(), s.noisy_val.len(), s.test.len()),
            (700, 150, 150)
        );
        assert_eq!(s.clean_val.len(), 150);
        assert_eq!(s.noisy_val.features(), s.clean_val.features());
    }

    #[test]
    fn tracks_are_aligned() {
        let d = ds(100);
        let s = split(&d, (0.7, 0.15, 0.15), 4).unwrap();
        for (k, &i) in s.indices.val.iter().enumerate() {
            assert_eq!(s.noisy_val.labels()[k], d.noisy_labels().unwrap()[i]);
            assert_eq!(s.clean_val.labels()[k], d.clean_labels()[i]);
            assert_eq!(s.clean_val.features()[[k, 0]], d.features()[[i, 0]]);
        }
        assert_eq!(s.noisy_val.track(), LabelTrack::Noisy);
        assert_eq!(s.test.track(), LabelTrack::Clean);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = split(&ds(50), (0.7, 0.15, 0.15), 9).unwrap().indices;
        let b = split(&ds(50), (0.7, 0.15, 0.15), 9).unwrap().indices;
        let c = split(&ds(50), (0.7, 0.15, 0.15), 10).unwrap().indices;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(matches!(
            split(&ds(10), (1.0 - 2e-3, 1e-3, 1e-3), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split(&ds(10), (0.5, 0.5, 0.5), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split(&ds(10), (1.2, -0.1, -0.1), 0),
            Err(Error::Config(_))
        ));
        let clean_only = Dataset::new(
            Array2::zeros((10, 1)),
            vec![0; 10],
            2,
            Provenance::default(),
        )
        .unwrap();
        assert!(matches!(
            split(&clean_only, (0.7, 0.15, 0.15), 0),
            Err(Error::MissingTrack(_))
        ));
    }
}
