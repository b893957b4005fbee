//! Exact outcome probabilities of an explicit two-qudit state.
//!
//! Partner basis: `|j~> = d^{-1/2} sum_m w^{jm} |m>` on A and its complex
//! conjugate on B, `w = exp(2 pi i / d)`. With this pairing the state
//! `sum_m |mm> / sqrt(d)` is perfectly correlated in both bases.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::matrix::ProbMatrix;
use crate::{Error, Result};

pub type C64 = Complex<f64>;

const TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ExactProbabilities {
    pub jti: ProbMatrix,
    pub jsi: ProbMatrix,
    /// `<Phi+| rho |Phi+>`.
    pub true_fidelity: f64,
}

/// Checks hermiticity, unit trace and positivity within 1e-10.
pub fn validate_density_matrix(rho: &DMatrix<C64>) -> Result<()> {
    let n = rho.nrows();
    if n == 0 || rho.ncols() != n {
        return Err(Error::InvalidDensityMatrix(format!(
            "shape {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    for i in 0..n {
        for j in 0..=i {
            if (rho[(i, j)] - rho[(j, i)].conj()).norm() > TOL {
                return Err(Error::InvalidDensityMatrix(format!("not hermitian at ({i}, {j})")));
            }
        }
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > TOL || tr.im.abs() > TOL {
        return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
    }
    let min_ev = rho
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_ev < -TOL {
        return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min_ev}")));
    }
    Ok(())
}

/// Vector `|j~>` (`conjugate = false`) or `|j~*>` (`conjugate = true`).
pub fn partner_vector(d: usize, j: usize, conjugate: bool) -> DVector<C64> {
    let s = if conjugate { -1.0 } else { 1.0 };
    let norm = 1.0 / (d as f64).sqrt();
    DVector::from_fn(d, |m, _| {
        let phase = s * 2.0 * std::f64::consts::PI * ((j * m) % d) as f64 / d as f64;
        C64::from_polar(norm, phase)
    })
}

pub fn max_entangled_vector(d: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d * d);
    for m in 0..d {
        v[m * d + m] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    }
    v
}

fn expectation(rho: &DMatrix<C64>, v: &DVector<C64>) -> f64 {
    (v.adjoint() * rho * v)[(0, 0)].re
}

fn product(a: &DVector<C64>, b: &DVector<C64>) -> DVector<C64> {
    let d = a.len();
    DVector::from_fn(d * b.len(), |k, _| a[k / d] * b[k % d])
}

pub fn exact_probabilities(rho: &DMatrix<C64>, d: usize) -> Result<ExactProbabilities> {
    if d < 2 || rho.nrows() != d * d {
        return Err(Error::InvalidDensityMatrix(format!(
            "expected a {0}x{0} matrix for d={d}, got {1}x{2}",
            d * d,
            rho.nrows(),
            rho.ncols()
        )));
    }
    validate_density_matrix(rho)?;
    let jti = ProbMatrix::from_fn(d, d, |m, n| rho[(m * d + n, m * d + n)].re);
    let a: Vec<_> = (0..d).map(|j| partner_vector(d, j, false)).collect();
    let b: Vec<_> = (0..d).map(|j| partner_vector(d, j, true)).collect();
    let jsi = ProbMatrix::from_fn(d, d, |i, j| expectation(rho, &product(&a[i], &b[j])));
    let true_fidelity = expectation(rho, &max_entangled_vector(d));
    Ok(ExactProbabilities {
        jti,
        jsi,
        true_fidelity,
    })
}

pub fn pure_state(v: &DVector<C64>) -> DMatrix<C64> {
    let v = v / C64::new(v.norm(), 0.0);
    &v * v.adjoint()
}

/// `G G^dagger / tr` for a complex Gaussian `n x rank` matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, rank.max(1), |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    rho / tr
}

/// Random state on `d x d`: Ginibre mixed state of random rank, mixed with
/// `|Phi+>` (possibly with random local phases) at a random weight, so the
/// sample set covers both noisy and nearly perfect states.
pub fn random_test_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let n = d * d;
    let rank = rng.random_range(1..=n);
    let noise = random_density_matrix(n, rank, rng);
    let mut target = max_entangled_vector(d);
    if rng.random_bool(0.5) {
        for m in 0..d {
            let phase: f64 = rng.random_range(0.0..0.3);
            target[m * d + m] *= C64::from_polar(1.0, phase);
        }
    }
    let w: f64 = rng.random::<f64>().powi(2);
    pure_state(&target) * C64::new(1.0 - w, 0.0) + noise * C64::new(w, 0.0)
}
