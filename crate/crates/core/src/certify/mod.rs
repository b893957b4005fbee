//! Entanglement and steering certificates from two-basis coincidence data.

pub mod eof;
pub mod exact;
pub mod fidelity;
pub mod schmidt;
pub mod steering;

use serde::Serialize;

use crate::matrix::{normalize, JointCountMatrix, ProbMatrix};
use crate::{Error, Result};

pub use eof::{conditional_entropy, eof_from_probs, shannon_entropy, EofResult};
pub use exact::{exact_probabilities, ExactProbabilities};
pub use fidelity::{
    b_k, b_k_table, certified_dimension, f1, f2_tilde, fidelity_from_probs, gamma_tilde, FidelityResult,
    GammaConvention, TargetState,
};
pub use schmidt::schmidt_decompose;
pub use steering::{schmidt_number_bound, steering_from_probs, SteeringResult};

/// Warning prefixes marking a non-rigorous certificate.
pub const FLAG_NONPRIME: &str = "nonprime";
pub const FLAG_IDEALIZED_OVERLAP: &str = "idealized-overlap";

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= n {
        if n.is_multiple_of(k) {
            return false;
        }
        k += 1;
    }
    true
}

#[derive(Debug, Clone, Default)]
pub struct CertifyOptions {
    /// Defaults to the maximally entangled state of the data's dimension.
    pub target: Option<TargetState>,
    pub allow_nonprime: bool,
    pub gamma: GammaConvention,
    /// Measured maximal overlap between the two bases.
    pub max_overlap: Option<f64>,
}

/// Both matrices square, same size, prime unless explicitly allowed.
/// Returns `(d, nonprime)`.
fn gate(jti: &JointCountMatrix, jsi: &JointCountMatrix, allow_nonprime: bool) -> Result<(usize, bool)> {
    let d = jti.d_a();
    if !jti.is_square() || !jsi.is_square() || jsi.d_a() != d {
        return Err(Error::DimensionMismatch(format!(
            "need two square matrices of equal size, got {}x{} and {}x{}",
            jti.d_a(),
            jti.d_b(),
            jsi.d_a(),
            jsi.d_b()
        )));
    }
    let nonprime = !is_prime(d);
    if nonprime && !allow_nonprime {
        return Err(Error::NonPrimeDimension(d));
    }
    Ok((d, nonprime))
}

fn target_for(opts: &CertifyOptions, d: usize) -> Result<TargetState> {
    match &opts.target {
        None => Ok(TargetState::maximally_entangled(d)),
        Some(t) if t.d() == d => Ok(t.clone()),
        Some(t) => Err(Error::DimensionMismatch(format!(
            "target has {} coefficients, data is {d}x{d}",
            t.d()
        ))),
    }
}

pub fn fidelity_certify(
    jti: &JointCountMatrix,
    jsi: &JointCountMatrix,
    opts: &CertifyOptions,
) -> Result<FidelityResult> {
    let (d, _) = gate(jti, jsi, opts.allow_nonprime)?;
    fidelity_from_probs(&normalize(jti)?, &normalize(jsi)?, &target_for(opts, d)?, opts.gamma)
}

pub fn eof_certify(jti: &JointCountMatrix, jsi: &JointCountMatrix, max_overlap: Option<f64>) -> Result<EofResult> {
    eof_from_probs(&normalize(jti)?, &normalize(jsi)?, max_overlap)
}

pub fn steering_certify(
    jti: &JointCountMatrix,
    jsi: &JointCountMatrix,
    allow_nonprime: bool,
) -> Result<SteeringResult> {
    gate(jti, jsi, allow_nonprime)?;
    steering_from_probs(&normalize(jti)?, &normalize(jsi)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub d: usize,
    pub fidelity: FidelityResult,
    pub eof: EofResult,
    pub steering: SteeringResult,
    pub nonprime: bool,
    pub warnings: Vec<String>,
}

/// All three certificates from already-normalized probabilities.
pub fn certify_probs(jti: &ProbMatrix, jsi: &ProbMatrix, opts: &CertifyOptions) -> Result<Certificate> {
    let d = jti.d_a();
    let nonprime = !is_prime(d);
    if nonprime && !opts.allow_nonprime {
        return Err(Error::NonPrimeDimension(d));
    }
    let fidelity = fidelity_from_probs(jti, jsi, &target_for(opts, d)?, opts.gamma)?;
    let eof = eof_from_probs(jti, jsi, opts.max_overlap)?;
    let steering = steering_from_probs(jti, jsi)?;
    let mut warnings = eof.warnings.clone();
    if nonprime {
        warnings.push(format!(
            "{FLAG_NONPRIME}: dimension {d} is not prime; certificate is not rigorous"
        ));
    }
    if eof.overlap_idealized {
        warnings.push(format!(
            "{FLAG_IDEALIZED_OVERLAP}: overlap 1/{d} assumed for the entropy bound"
        ));
    }
    Ok(Certificate {
        d,
        fidelity,
        eof,
        steering,
        nonprime,
        warnings,
    })
}

pub fn certify(jti: &JointCountMatrix, jsi: &JointCountMatrix, opts: &CertifyOptions) -> Result<Certificate> {
    gate(jti, jsi, opts.allow_nonprime)?;
    certify_probs(&normalize(jti)?, &normalize(jsi)?, opts)
}
