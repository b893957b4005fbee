//! Fidelity lower bound from two bases and the Schmidt-rank thresholds.

use serde::{Deserialize, Serialize};

use crate::matrix::ProbMatrix;
use crate::{Error, Result};

/// Target `|Phi> = sum_m lambda_m |mm>` with non-increasing Schmidt
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetState {
    lambdas: Vec<f64>,
}

impl TargetState {
    pub fn maximally_entangled(d: usize) -> Self {
        TargetState {
            lambdas: vec![1.0 / (d as f64).sqrt(); d],
        }
    }

    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidParameter("target needs at least one coefficient".into()));
        }
        if lambdas.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::InvalidParameter(
                "Schmidt coefficients must be non-negative".into(),
            ));
        }
        if lambdas.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter(
                "Schmidt coefficients must be non-increasing".into(),
            ));
        }
        let norm: f64 = lambdas.iter().map(|l| l * l).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "sum of squared coefficients is {norm}, not 1"
            )));
        }
        Ok(TargetState { lambdas })
    }

    pub fn d(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn is_maximally_entangled(&self) -> bool {
        let l0 = 1.0 / (self.d() as f64).sqrt();
        self.lambdas.iter().all(|l| (l - l0).abs() < 1e-12)
    }
}

/// Largest fidelity with the target reachable at Schmidt rank `k`: the sum
/// of the `k` largest squared coefficients.
pub fn b_k(target: &TargetState, k: usize) -> Result<f64> {
    if k == 0 || k > target.d() {
        return Err(Error::InvalidParameter(format!("k={k} outside 1..={}", target.d())));
    }
    if k == target.d() {
        return Ok(1.0);
    }
    Ok(target.lambdas[..k].iter().map(|l| l * l).sum())
}

/// `[B_1, ..., B_d]`.
pub fn b_k_table(target: &TargetState) -> Vec<f64> {
    (1..=target.d()).map(|k| b_k(target, k).expect("k in range")).collect()
}

/// Largest `k` with `f_tilde >= B_{k-1}` (`B_0 = 0`), at least 1.
pub fn certified_dimension(f_tilde: f64, table: &[f64]) -> usize {
    let mut d_ent = 1;
    for k in 2..=table.len() {
        if f_tilde >= table[k - 2] {
            d_ent = k;
        } else {
            break;
        }
    }
    d_ent
}

/// `sum_m lambda_m^2 p(m, m)` from the computational-basis probabilities;
/// `(1/d) * trace` for the maximally entangled target.
pub fn f1(jti: &ProbMatrix, target: &TargetState) -> Result<f64> {
    check_square(jti, target.d())?;
    Ok(target
        .lambdas
        .iter()
        .enumerate()
        .map(|(m, l)| l * l * jti.get(m, m))
        .sum())
}

/// Sign convention of the modular condition selecting coherence terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaConvention {
    /// `(m - m' - n + n') mod d == 0`: the terms that survive the
    /// tilted-basis sum. Default.
    #[default]
    Standard,
    /// `(m - m' - n - n') mod d == 0`, kept for comparison only.
    AsPrinted,
}

/// Weight `1/d` if the modular condition holds, else 0.
pub fn gamma_tilde(m: usize, mp: usize, n: usize, np: usize, d: usize, convention: GammaConvention) -> f64 {
    let d_i = d as i64;
    let r = match convention {
        GammaConvention::Standard => m as i64 - mp as i64 - n as i64 + np as i64,
        GammaConvention::AsPrinted => m as i64 - mp as i64 - n as i64 - np as i64,
    };
    if r.rem_euclid(d_i) == 0 {
        1.0 / d as f64
    } else {
        0.0
    }
}

/// Lower bound on the off-diagonal fidelity contribution:
///
/// `sum_j p~(j, j) - 1/d - sum gamma * sqrt(p(m', n') p(m, n))`
///
/// over `m != m'`, `n != n'`, `m != n`, `m' != n'`. The tuple sum is
/// enumerated in O(d^3) by solving the condition for `n'`.
pub fn f2_tilde(jti: &ProbMatrix, jsi: &ProbMatrix, convention: GammaConvention) -> Result<f64> {
    let d = jti.d_a();
    check_square(jti, d)?;
    check_square(jsi, d)?;
    let sqrt_p: Vec<f64> = jti.values().iter().map(|p| p.max(0.0).sqrt()).collect();
    let sp = |i: usize, j: usize| sqrt_p[i * d + j];
    let mut penalty = 0.0;
    for m in 0..d {
        for n in 0..d {
            if m == n {
                continue;
            }
            let s_mn = sp(m, n);
            if s_mn == 0.0 {
                continue;
            }
            for mp in 0..d {
                if mp == m {
                    continue;
                }
                let np = match convention {
                    GammaConvention::Standard => (mp + n + d - m) % d,
                    GammaConvention::AsPrinted => (m + 2 * d - mp - n) % d,
                };
                if np == n || np == mp {
                    continue;
                }
                penalty += s_mn * sp(mp, np);
            }
        }
    }
    Ok(jsi.diagonal_sum() - 1.0 / d as f64 - penalty / d as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityResult {
    pub f1: f64,
    pub f2_tilde: f64,
    pub f_tilde: f64,
    /// `[B_1, ..., B_d]`.
    pub b_k: Vec<f64>,
    pub d_ent: usize,
}

/// Fidelity bound and certified dimensionality from normalized
/// probabilities in both bases.
pub fn fidelity_from_probs(
    jti: &ProbMatrix,
    jsi: &ProbMatrix,
    target: &TargetState,
    convention: GammaConvention,
) -> Result<FidelityResult> {
    let f1 = f1(jti, target)?;
    let f2 = f2_tilde(jti, jsi, convention)?;
    let f_tilde = f1 + f2;
    let table = b_k_table(target);
    let d_ent = certified_dimension(f_tilde, &table);
    Ok(FidelityResult {
        f1,
        f2_tilde: f2,
        f_tilde,
        b_k: table,
        d_ent,
    })
}

fn check_square(p: &ProbMatrix, d: usize) -> Result<()> {
    if p.d_a() != d || p.d_b() != d {
        return Err(Error::DimensionMismatch(format!(
            "expected {d}x{d} probabilities, got {}x{}",
            p.d_a(),
            p.d_b()
        )));
    }
    Ok(())
}
