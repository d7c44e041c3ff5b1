//! Datasets, splits and the synthetic generator.

mod cache;
mod idx;
mod split;
mod synthetic;

pub use cache::{load_cache, read_cache, save_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::{split, EvalSet, SplitBundle, SplitIndices};
pub use synthetic::make_synthetic;

use std::fmt;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Which labels an operation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelTrack {
    Clean,
    Noisy,
}

impl fmt::Display for LabelTrack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelTrack::Clean => "clean",
            LabelTrack::Noisy => "noisy",
        })
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub seed: Option<u64>,
    /// Description of the noise field and seed that produced the noisy labels.
    pub noise: Option<String>,
}

/// Dense features with a clean label track and an optional noisy one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    clean: Vec<usize>,
    noisy: Option<Vec<usize>>,
    classes: usize,
    pub provenance: Provenance,
}

fn check_labels(labels: &[usize], n: usize, c: usize, what: &str) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} {what} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Domain(format!(
            "{what} label {bad} out of range for {c} classes"
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        clean: Vec<usize>,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        check_labels(&clean, features.nrows(), classes, "clean")?;
        Ok(Dataset {
            features,
            clean,
            noisy: None,
            classes,
            provenance,
        })
    }

    /// Attaches a noisy label track, recording how it was produced.
    pub fn with_noisy_labels(
        mut self,
        noisy: Vec<usize>,
        descriptor: impl Into<String>,
    ) -> Result<Self> {
        check_labels(&noisy, self.len(), self.classes, "noisy")?;
        self.noisy = Some(noisy);
        self.provenance.noise = Some(descriptor.into());
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean
    }

    pub fn noisy_labels(&self) -> Option<&[usize]> {
        self.noisy.as_deref()
    }

    pub fn labels(&self, track: LabelTrack) -> Result<&[usize]> {
        match track {
            LabelTrack::Clean => Ok(&self.clean),
            LabelTrack::Noisy => self.noisy_labels().ok_or_else(|| {
                Error::MissingTrack(format!(
                    "dataset {:?} has no noisy labels",
                    self.provenance.source
                ))
            }),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            clean: indices.iter().map(|&i| self.clean[i]).collect(),
            noisy: self
                .noisy
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            classes: self.classes,
            provenance: self.provenance.clone(),
        }
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>, Option<Vec<usize>>) {
        (self.features, self.clean, self.noisy)
    }
}

/// Keeps instances whose clean label is in `keep` and renumbers labels densely in ascending
/// order of the kept labels.
pub fn subset_classes(dataset: &Dataset, keep: &[usize]) -> Result<Dataset> {
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() {
        return Err(Error::Domain("class subset is empty".into()));
    }
    let mut map = vec![None; dataset.classes()];
    for (new, &old) in keep.iter().enumerate() {
        if old >= dataset.classes() {
            return Err(Error::Domain(format!("class {old} out of range")));
        }
        map[old] = Some(new);
    }
    let idx: Vec<usize> = (0..dataset.len())
        .filter(|&i| map[dataset.clean[i]].is_some())
        .collect();
    if idx.is_empty() {
        return Err(Error::Domain(format!(
            "no instance has a label in {keep:?}"
        )));
    }
    if keep.len() < 2 {
        return Err(Error::Domain(
            "a class subset needs at least 2 classes".into(),
        ));
    }
    let features = dataset.features.select(Axis(0), &idx);
    let clean = idx
        .iter()
        .map(|&i| map[dataset.clean[i]].unwrap())
        .collect();
    let mut provenance = dataset.provenance.clone();
    provenance.source = format!("{} classes={keep:?}", provenance.source);
    let mut out = Dataset::new(features, clean, keep.len(), provenance)?;
    if let Some(noisy) = &dataset.noisy {
        // Noisy labels outside the subset have no image in the new label space.
        if idx.iter().all(|&i| map[noisy[i]].is_some()) {
            out.noisy = Some(idx.iter().map(|&i| map[noisy[i]].unwrap()).collect());
            out.provenance.noise = dataset.provenance.noise.clone();
        }
    }
    Ok(out)
}
