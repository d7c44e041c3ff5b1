use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::simplex::{argmax, check_simplex, ArgMax, Probs};

/// Column sums must equal one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Equalities in [`TransitionMatrix::taxonomy`] are tested within this tolerance.
pub const TAXONOMY_TOL: f64 = 1e-9;

/// A column-stochastic map from clean to noisy labels: entry `(i, j)` is `p(noisy = i | clean = j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: Array2<f64>,
}

impl TransitionMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::Shape(format!(
                "transition matrix is {r}x{c}, not square"
            )));
        }
        if c < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {c}")));
        }
        for ((i, j), &v) in entries.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "entry ({i},{j}) = {v} is not in [0, 1]"
                )));
            }
        }
        for (j, col) in entries.columns().into_iter().enumerate() {
            let s = col.sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Domain(format!("column {j} sums to {s}, not 1")));
            }
        }
        Ok(TransitionMatrix { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.len();
        let mut m = Array2::zeros((c, c));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        Self::new(m)
    }

    pub fn identity(c: usize) -> Result<Self> {
        Self::new(Array2::eye(c))
    }

    pub fn classes(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, noisy: usize, clean: usize) -> f64 {
        self.entries[[noisy, clean]]
    }

    /// Noisy-label distribution for clean label `clean`.
    pub fn column(&self, clean: usize) -> ArrayView1<'_, f64> {
        self.entries.column(clean)
    }

    /// `T · p` for a clean posterior `p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.entries.dot(&ArrayView1::from(p)).to_vec()
    }

    /// The noisy posterior corresponding to a clean posterior.
    pub fn push(&self, p: &Probs) -> Result<Probs> {
        if p.len() != self.classes() {
            return Err(Error::Shape(format!(
                "posterior has {} entries, matrix has {} classes",
                p.len(),
                self.classes()
            )));
        }
        Probs::new(self.apply(p.as_slice()))
    }

    /// Matrix product `self · other`, i.e. apply `other` first.
    pub fn compose(&self, other: &TransitionMatrix) -> Result<TransitionMatrix> {
        if other.classes() != self.classes() {
            return Err(Error::Shape("class counts differ".into()));
        }
        let mut m = self.entries.dot(&other.entries);
        m.mapv_inplace(|v| v.clamp(0.0, 1.0));
        TransitionMatrix::new(m)
    }

    pub fn diagonal(&self) -> Array1<f64> {
        self.entries.diag().to_owned()
    }

    /// Largest and smallest off-diagonal entries.
    pub fn off_diagonal_range(&self) -> (f64, f64) {
        let c = self.classes();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..c {
            for j in 0..c {
                if i != j {
                    lo = lo.min(self.entries[[i, j]]);
                    hi = hi.max(self.entries[[i, j]]);
                }
            }
        }
        (lo, hi)
    }

    /// Plain-text form: the class count on the first line, then one row per line.
    /// Entries carry 17 significant digits so parsing restores every bit.
    pub fn to_text(&self) -> String {
        let c = self.classes();
        let mut out = format!("{c}\n");
        for i in 0..c {
            let row: Vec<String> = (0..c)
                .map(|j| format!("{:.16e}", self.entries[[i, j]]))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut offset = 0u64;
        let mut lines = Vec::new();
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                lines.push((offset, trimmed));
            }
            offset += line.len() as u64;
        }
        let Some(&(first_off, first)) = lines.first() else {
            return Err(Error::parse(0, "empty matrix file"));
        };
        let c: usize = first
            .parse()
            .map_err(|_| Error::parse(first_off, format!("bad class count {first:?}")))?;
        if lines.len() != c + 1 {
            return Err(Error::parse(
                offset,
                format!("expected {c} matrix rows, found {}", lines.len() - 1),
            ));
        }
        let mut rows = Vec::with_capacity(c);
        for &(off, line) in &lines[1..] {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| Error::parse(off, format!("bad number {tok:?}")))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// Structural classification of the matrix.
    pub fn taxonomy(&self) -> NoiseTaxonomyReport {
        let c = self.classes();
        let t = &self.entries;
        let eq = |a: f64, b: f64| (a - b).abs() <= TAXONOMY_TOL;
        let d0 = t[[0, 0]];
        let constant_diag = (0..c).all(|i| eq(t[[i, i]], d0));
        let (lo, hi) = self.off_diagonal_range();
        let symmetric = constant_diag && eq(lo, hi);

        let off_nonzero = |i: usize, j: usize| i != j && t[[i, j]] > TAXONOMY_TOL;
        let col_ok = (0..c).all(|j| (0..c).filter(|&i| off_nonzero(i, j)).count() <= 1);
        let row_ok = (0..c).all(|i| (0..c).filter(|&j| off_nonzero(i, j)).count() <= 1);
        let pairwise = col_ok && row_ok;

        let shift = t[[1 % c, 0]];
        let circular = constant_diag
            && (0..c).all(|j| {
                (0..c).all(|i| {
                    let expected = if i == j {
                        d0
                    } else if i == (j + 1) % c {
                        shift
                    } else {
                        0.0
                    };
                    eq(t[[i, j]], expected)
                })
            });

        let diagonally_dominant =
            (0..c).all(|j| (0..c).all(|i| i == j || t[[j, j]] > t[[i, j]] + TAXONOMY_TOL));

        let mut sorted0: Vec<f64> = t.column(0).to_vec();
        sorted0.sort_by(f64::total_cmp);
        let column_permutation = constant_diag
            && (1..c).all(|j| {
                let mut s: Vec<f64> = t.column(j).to_vec();
                s.sort_by(f64::total_cmp);
                s.iter().zip(&sorted0).all(|(a, b)| eq(*a, *b))
            });

        NoiseTaxonomyReport {
            classes: c,
            uniform: true,
            symmetric,
            pairwise,
            circular,
            diagonally_dominant,
            column_permutation,
            class_preserving_for_separable: diagonally_dominant,
            rate: 1.0 - self.diagonal().mean().unwrap_or(1.0),
            threshold: (c as f64 - 1.0) / c as f64,
        }
    }
}

/// Structural flags of a transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTaxonomyReport {
    pub classes: usize,
    /// One matrix for every instance. Always true for a bare matrix.
    pub uniform: bool,
    /// Constant diagonal and equal off-diagonal entries.
    pub symmetric: bool,
    /// Every class flips to at most one other class, and every class receives from at most one.
    pub pairwise: bool,
    /// Label `j` flips only to `j + 1` (mod c), at one common rate.
    pub circular: bool,
    /// Each diagonal entry strictly exceeds every other entry of its column.
    pub diagonally_dominant: bool,
    /// Constant diagonal, and every column is a rearrangement of every other.
    pub column_permutation: bool,
    /// Whether one-hot clean posteriors keep their argmax; equivalent to diagonal dominance.
    pub class_preserving_for_separable: bool,
    /// One minus the mean diagonal entry.
    pub rate: f64,
    /// The symmetric class-preservation threshold `(c-1)/c`.
    pub threshold: f64,
}

/// Outcome of the class-preservation check at one posterior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassPreservation {
    Preserved,
    NotPreserved,
    /// A tie makes the answer depend on a tie-breaking rule; the tied sets are returned.
    Tie {
        clean: ArgMax,
        noisy: ArgMax,
    },
}

impl ClassPreservation {
    pub fn is_preserved(&self) -> bool {
        matches!(self, ClassPreservation::Preserved)
    }
}

/// Whether `T · posterior` has the same most probable label as `posterior`.
///
/// A unique clean winner that is absent from the noisy maximum set is a definite failure even
/// if the noisy maximum is itself tied.
pub fn is_class_preserving_at(
    t: &TransitionMatrix,
    posterior: &[f64],
) -> Result<ClassPreservation> {
    check_simplex(posterior)?;
    if posterior.len() != t.classes() {
        return Err(Error::Shape(format!(
            "posterior has {} entries, matrix has {} classes",
            posterior.len(),
            t.classes()
        )));
    }
    let clean = argmax(posterior);
    let noisy = argmax(&t.apply(posterior));
    Ok(match (&clean, &noisy) {
        (ArgMax::Unique(a), ArgMax::Unique(b)) if a == b => ClassPreservation::Preserved,
        (ArgMax::Unique(a), _) if !noisy.contains(*a) => ClassPreservation::NotPreserved,
        _ => ClassPreservation::Tie { clean, noisy },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cperm() -> TransitionMatrix {
        TransitionMatrix::from_rows(&[
            vec![0.5, 0.2, 0.3],
            vec![0.3, 0.5, 0.2],
            vec![0.2, 0.3, 0.5],
        ])
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.5]]).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![1.2, 0.0], vec![-0.2, 1.0]]).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![1.0]]).is_err());
        assert!(TransitionMatrix::new(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn cperm_taxonomy() {
        let r = cperm().taxonomy();
        assert!(!r.symmetric);
        assert!(r.diagonally_dominant);
        assert!(r.column_permutation);
        assert!(!r.pairwise);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = TransitionMatrix::from_rows(&[vec![1.0 / 3.0, 0.1], vec![2.0 / 3.0, 0.9]]).unwrap();
        let back = TransitionMatrix::from_text(&t.to_text()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn text_errors_name_offsets() {
        let err = TransitionMatrix::from_text("2\n1 0\n0 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 6, .. }), "{err:?}");
        assert!(TransitionMatrix::from_text("").is_err());
        assert!(TransitionMatrix::from_text("3\n1 0 0\n").is_err());
    }

    #[test]
    fn class_preservation_ties() {
        let t = TransitionMatrix::identity(3).unwrap();
        let r = is_class_preserving_at(&t, &[0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(r, ClassPreservation::Tie { .. }));
        assert!(is_class_preserving_at(&t, &[0.5, 0.6, 0.0]).is_err());
        assert!(is_class_preserving_at(&t, &[0.5, 0.5]).is_err());
    }
}
