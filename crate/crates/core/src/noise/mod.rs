//! Label-noise models.
//!
//! A [`TransitionMatrix`] is column-stochastic: entry `(i, j)` is the probability that clean
//! label `j` is observed as noisy label `i`. A [`NoiseField`] assigns a matrix to every
//! instance; uniform noise is the constant field [`UniformNoise`].

mod builders;
mod field;
mod matrix;

pub use builders::*;
pub use field::*;
pub use matrix::*;
