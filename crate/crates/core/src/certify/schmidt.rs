//! Schmidt spectrum of the amplitude matrix `sqrt(counts)`.

use nalgebra::DMatrix;

use crate::matrix::JointCountMatrix;
use crate::{Error, Result};

/// Normalized squared singular values of `sqrt(C)`, descending, summing to 1.
pub fn schmidt_decompose(matrix: &JointCountMatrix) -> Result<Vec<f64>> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::EmptyData);
    }
    let amp = DMatrix::from_fn(matrix.d_a(), matrix.d_b(), |i, j| {
        (matrix.get(i, j) as f64 / total as f64).sqrt()
    });
    schmidt_from_amplitudes(&amp)
}

pub fn schmidt_from_amplitudes(amp: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sv = amp.clone().singular_values();
    let mut w: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let norm: f64 = w.iter().sum();
    if norm <= 0.0 {
        return Err(Error::EmptyData);
    }
    w.iter_mut().for_each(|x| *x /= norm);
    w.sort_by(|a, b| b.total_cmp(a));
    Ok(w)
}

/// Participation ratio `1 / sum w^2`.
pub fn schmidt_number(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}
