//! Schmidt-number witness from steering correlations.

use serde::Serialize;

use crate::matrix::ProbMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteeringResult {
    /// Sum of the two diagonal probabilities, at most 2.
    pub s: f64,
    /// Lower bound on the steering robustness, clipped at 0.
    pub sr_lb: f64,
    pub delta: f64,
    pub n_cert: usize,
}

/// `((1 + sr) / (1 - sr))^2`.
pub fn delta_from_robustness(sr: f64) -> Result<f64> {
    if !(sr < 1.0) {
        return Err(Error::ImpossibleValue(format!("steering robustness {sr} >= 1")));
    }
    let sr = sr.max(0.0);
    Ok(((1.0 + sr) / (1.0 - sr)).powi(2))
}

/// Smallest integer `>= delta`, treating values within 1e-9 of an integer
/// as that integer.
pub fn schmidt_number_bound(delta: f64) -> usize {
    let r = delta.round();
    let n = if (delta - r).abs() < 1e-9 { r } else { delta.ceil() };
    (n as usize).max(1)
}

pub fn steering_from_probs(jti: &ProbMatrix, jsi: &ProbMatrix) -> Result<SteeringResult> {
    let d = jti.d_a();
    if jti.d_b() != d || jsi.d_a() != d || jsi.d_b() != d {
        return Err(Error::DimensionMismatch(format!(
            "steering witness needs two {d}x{d} matrices, got {}x{} and {}x{}",
            jti.d_a(),
            jti.d_b(),
            jsi.d_a(),
            jsi.d_b()
        )));
    }
    let s = jti.diagonal_sum() + jsi.diagonal_sum();
    let raw = s / (1.0 + 1.0 / (d as f64).sqrt()) - 1.0;
    if raw >= 1.0 {
        return Err(Error::ImpossibleValue(format!(
            "steering robustness bound {raw} >= 1 (diagonal sum {s})"
        )));
    }
    let sr_lb = raw.max(0.0);
    let delta = delta_from_robustness(sr_lb)?;
    Ok(SteeringResult {
        s,
        sr_lb,
        delta,
        n_cert: schmidt_number_bound(delta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_reaches_full_dimension() {
        for d in [2, 3, 7, 23, 31] {
            let r = steering_from_probs(&ProbMatrix::ideal(d), &ProbMatrix::ideal(d)).unwrap();
            let sq = (d as f64).sqrt();
            assert!((r.sr_lb - (sq - 1.0) / (sq + 1.0)).abs() < 1e-12);
            assert!((r.delta - d as f64).abs() < 1e-9);
            assert_eq!(r.n_cert, d);
        }
    }

    #[test]
    fn uncorrelated_certifies_nothing() {
        let r = steering_from_probs(&ProbMatrix::uniform(5), &ProbMatrix::uniform(5)).unwrap();
        assert_eq!(r.sr_lb, 0.0);
        assert_eq!(r.delta, 1.0);
        assert_eq!(r.n_cert, 1);
    }

    #[test]
    fn rounding_of_delta() {
        assert_eq!(schmidt_number_bound(2.7), 3);
        assert_eq!(schmidt_number_bound(8.9), 9);
        assert_eq!(schmidt_number_bound(2.4), 3);
        assert_eq!(schmidt_number_bound(6.3), 7);
        assert_eq!(schmidt_number_bound(5.0 + 1e-12), 5);
        assert_eq!(schmidt_number_bound(5.0 - 1e-12), 5);
        assert_eq!(schmidt_number_bound(0.3), 1);
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let p = ProbMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(matches!(steering_from_probs(&p, &p), Err(Error::ImpossibleValue(_))));
        assert!(delta_from_robustness(1.0).is_err());
    }
}
