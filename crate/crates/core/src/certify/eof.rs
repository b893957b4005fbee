//! Entropic entanglement-of-formation bound.

use serde::Serialize;

use crate::matrix::ProbMatrix;
use crate::{Error, Result};

/// Shannon entropy in bits; zero entries contribute nothing.
pub fn shannon_entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter().filter(|&x| x > 0.0).map(|x| -x * x.log2()).sum()
}

/// `H(A|B) = H(A, B) - H(B)` with `B` the column marginal.
pub fn conditional_entropy(joint: &ProbMatrix) -> f64 {
    shannon_entropy(joint.values().iter().copied()) - shannon_entropy(joint.marginal_b())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EofResult {
    /// `H(A1|B1)`, computational basis.
    pub h_time: f64,
    /// `H(A2|B2)`, partner basis.
    pub h_freq: f64,
    pub max_overlap: f64,
    /// True when `max_overlap` is the ideal `1/d` rather than a measured value.
    pub overlap_idealized: bool,
    /// Bound before clipping; may be negative.
    pub eof_raw: f64,
    /// `max(eof_raw, 0)` in ebits.
    pub eof_lb: f64,
    pub warnings: Vec<String>,
}

/// `-log2(c) - H(A1|B1) - H(A2|B2)`. Without a measured overlap the
/// ideal value `1/d` is used and flagged.
pub fn eof_from_probs(jti: &ProbMatrix, jsi: &ProbMatrix, max_overlap: Option<f64>) -> Result<EofResult> {
    let d = jti.d_a();
    if jti.d_b() != d || jsi.d_a() != d || jsi.d_b() != d {
        return Err(Error::DimensionMismatch(format!(
            "entropy bound needs two {d}x{d} matrices, got {}x{} and {}x{}",
            jti.d_a(),
            jti.d_b(),
            jsi.d_a(),
            jsi.d_b()
        )));
    }
    let mut warnings = Vec::new();
    let (c, idealized) = match max_overlap {
        Some(c) => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::ImpossibleValue(format!("maximal overlap {c} must be positive")));
            }
            if c < 1.0 / d as f64 - 1e-12 || c > 1.0 + 1e-12 {
                warnings.push(format!("maximal overlap {c} outside [1/{d}, 1]"));
            }
            (c, false)
        }
        None => (1.0 / d as f64, true),
    };
    let h_time = conditional_entropy(jti);
    let h_freq = conditional_entropy(jsi);
    let eof_raw = -c.log2() - h_time - h_freq;
    Ok(EofResult {
        h_time,
        h_freq,
        max_overlap: c,
        overlap_idealized: idealized,
        eof_raw,
        eof_lb: eof_raw.max(0.0),
        warnings,
    })
}
