//! Poisson bootstrap of certified quantities and measurement budgets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{certify, Certificate, CertifyOptions};
use crate::matrix::JointCountMatrix;
use crate::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    FTilde,
    EofLb,
    SrLb,
    Delta,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::FTilde, Quantity::EofLb, Quantity::SrLb, Quantity::Delta];

    pub fn of(self, c: &Certificate) -> f64 {
        match self {
            Quantity::FTilde => c.fidelity.f_tilde,
            Quantity::EofLb => c.eof.eof_lb,
            Quantity::SrLb => c.steering.sr_lb,
            Quantity::Delta => c.steering.delta,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::FTilde => "f_tilde",
            Quantity::EofLb => "eof_lb",
            Quantity::SrLb => "sr_lb",
            Quantity::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    /// Value on the unresampled data.
    pub estimate: f64,
    pub mean: f64,
    /// Sample standard deviation over the successful resamples.
    pub std: f64,
    pub resamples: usize,
    /// Resamples on which the estimator failed.
    pub excluded: usize,
    pub seed: u64,
}

/// Replaces every count `c` with an independent `Poisson(c)` draw.
pub fn poisson_resample<R: rand::Rng>(m: &JointCountMatrix, rng: &mut R) -> JointCountMatrix {
    m.map_counts(|c| {
        if c == 0 {
            0
        } else {
            Poisson::new(c as f64).expect("positive mean").sample(rng) as u64
        }
    })
}

/// Bootstraps an arbitrary estimator returning a fixed-length vector.
/// Resample `i` uses seed `seed + i`; results are collected in index order
/// so the summary does not depend on scheduling.
pub fn bootstrap_with<F>(
    jti: &JointCountMatrix,
    jsi: &JointCountMatrix,
    resamples: usize,
    seed: u64,
    estimator: F,
) -> Result<Vec<BootstrapSummary>>
where
    F: Fn(&JointCountMatrix, &JointCountMatrix) -> Result<Vec<f64>> + Sync,
{
    if resamples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 resamples, got {resamples}"
        )));
    }
    let point = estimator(jti, jsi)?;
    let draws: Vec<Option<Vec<f64>>> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let a = poisson_resample(jti, &mut rng);
            let b = poisson_resample(jsi, &mut rng);
            estimator(&a, &b).ok().filter(|v| v.len() == point.len())
        })
        .collect();
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let excluded = resamples - ok.len();
    if ok.len() < 2 {
        return Err(Error::BootstrapFailed(excluded));
    }
    let n = ok.len() as f64;
    Ok((0..point.len())
        .map(|k| {
            let mean = ok.iter().map(|v| v[k]).sum::<f64>() / n;
            let var = ok.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            BootstrapSummary {
                estimate: point[k],
                mean,
                std: var.sqrt(),
                resamples,
                excluded,
                seed,
            }
        })
        .collect())
}

/// Bootstraps the requested certified quantities.
pub fn poisson_bootstrap(
    jti: &JointCountMatrix,
    jsi: &JointCountMatrix,
    quantities: &[Quantity],
    opts: &CertifyOptions,
    resamples: usize,
    seed: u64,
) -> Result<Vec<(Quantity, BootstrapSummary)>> {
    let summaries = bootstrap_with(jti, jsi, resamples, seed, |a, b| {
        let c = certify(a, b, opts)?;
        Ok(quantities.iter().map(|q| q.of(&c)).collect())
    })?;
    Ok(quantities.iter().copied().zip(summaries).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MeasurementBudget {
    /// Full state tomography.
    pub fst: u64,
    pub fidelity_direct: u64,
    pub two_bases: u64,
    /// One time-bin setting plus `d^2` frequency settings.
    pub this_work: u64,
}

pub fn measurement_budget(d: u64) -> Result<MeasurementBudget> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("budget needs d >= 2, got {d}")));
    }
    let overflow = || Error::InvalidParameter(format!("budget for d={d} overflows"));
    let d2 = d.checked_mul(d).ok_or_else(overflow)?;
    let fidelity_direct = d2.checked_mul(d + 1).ok_or_else(overflow)?;
    Ok(MeasurementBudget {
        fst: fidelity_direct.checked_mul(d + 1).ok_or_else(overflow)?,
        fidelity_direct,
        two_bases: d2.checked_mul(2).ok_or_else(overflow)?,
        this_work: d2 + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Basis;

    fn noisy(d: usize, on: u64, off: u64, basis: Basis) -> JointCountMatrix {
        let rows: Vec<Vec<u64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { on } else { off }).collect())
            .collect();
        JointCountMatrix::from_rows(&rows, basis, basis).unwrap()
    }

    #[test]
    fn budgets() {
        let b = measurement_budget(31).unwrap();
        assert_eq!(
            (b.fst, b.fidelity_direct, b.two_bases, b.this_work),
            (984064, 30752, 1922, 962)
        );
        let b = measurement_budget(2).unwrap();
        assert_eq!((b.fst, b.fidelity_direct, b.two_bases, b.this_work), (36, 12, 8, 5));
        let b = measurement_budget(10_000).unwrap();
        assert!((b.this_work as f64 / b.two_bases as f64 - 0.5).abs() < 1e-8);
        assert!(measurement_budget(1).is_err());
        assert!(measurement_budget(1 << 20).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let jti = noisy(3, 500, 5, Basis::Time);
        let jsi = noisy(3, 480, 8, Basis::Frequency);
        let opts = CertifyOptions::default();
        let a = poisson_bootstrap(&jti, &jsi, &Quantity::ALL, &opts, 50, 7).unwrap();
        let b = poisson_bootstrap(&jti, &jsi, &Quantity::ALL, &opts, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = poisson_bootstrap(&jti, &jsi, &Quantity::ALL, &opts, 50, 8).unwrap();
        assert_ne!(a, c);
        assert!(a.iter().all(|(_, s)| s.std >= 0.0 && s.excluded == 0));
    }

    #[test]
    fn zero_counts_fail() {
        let z = JointCountMatrix::zeros(3, 3, Basis::Time, Basis::Time);
        let r = poisson_bootstrap(&z, &z, &[Quantity::FTilde], &CertifyOptions::default(), 10, 1);
        assert!(matches!(r, Err(Error::EmptyData)));
    }

    #[test]
    fn failing_resamples_are_excluded() {
        // A single count vanishes under resampling with probability 1/e.
        let jti = JointCountMatrix::from_rows(&[vec![1, 0], vec![0, 0]], Basis::Time, Basis::Time).unwrap();
        let jsi = noisy(2, 100, 1, Basis::Frequency);
        let s = poisson_bootstrap(&jti, &jsi, &[Quantity::FTilde], &CertifyOptions::default(), 200, 3).unwrap();
        let excluded = s[0].1.excluded;
        assert!(excluded > 40 && excluded < 110, "{excluded}");
        assert!(matches!(
            bootstrap_with(&jti, &jsi, 1, 0, |_, _| Ok(vec![0.0])),
            Err(Error::InvalidParameter(_))
        ));
    }
}
