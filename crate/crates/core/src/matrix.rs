//! Joint coincidence-count matrices and their text exchange format.
//!
//! A matrix file is plain CSV preceded by two `#` comment lines:
//!
//! ```text
//! # basis_a=time basis_b=time d_a=7 d_b=7
//! # acquisition_seconds=3 tau_ps=250 n_bins=256
//! 812,14,0,...
//! ```
//!
//! The second line carries `tau_ps`/`n_bins` for time-binned axes and
//! `step_ghz` for filter sweeps; both are optional.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Time,
    Frequency,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Time => "time",
            Basis::Frequency => "frequency",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Basis::Time),
            "frequency" => Ok(Basis::Frequency),
            other => Err(Error::MalformedMatrix(format!("unknown basis label `{other}`"))),
        }
    }
}

/// Binning metadata carried alongside a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Binning {
    pub tau_ps: Option<u64>,
    pub n_bins: Option<usize>,
    pub step_ghz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCountMatrix {
    d_a: usize,
    d_b: usize,
    counts: Vec<u64>,
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub acquisition_seconds: f64,
    pub binning: Binning,
}

impl JointCountMatrix {
    /// Row-major counts; rows are Alice's outcomes.
    pub fn new(d_a: usize, d_b: usize, counts: Vec<u64>, basis_a: Basis, basis_b: Basis) -> Result<Self> {
        if counts.len() != d_a * d_b {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for a {d_a}x{d_b} matrix",
                counts.len()
            )));
        }
        Ok(JointCountMatrix {
            d_a,
            d_b,
            counts,
            basis_a,
            basis_b,
            acquisition_seconds: 0.0,
            binning: Binning::default(),
        })
    }

    pub fn zeros(d_a: usize, d_b: usize, basis_a: Basis, basis_b: Basis) -> Self {
        JointCountMatrix::new(d_a, d_b, vec![0; d_a * d_b], basis_a, basis_b).expect("sized")
    }

    pub fn from_rows(rows: &[Vec<u64>], basis_a: Basis, basis_b: Basis) -> Result<Self> {
        let d_a = rows.len();
        let d_b = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d_b) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        JointCountMatrix::new(d_a, d_b, rows.concat(), basis_a, basis_b)
    }

    pub fn with_seconds(mut self, seconds: f64) -> Self {
        self.acquisition_seconds = seconds;
        self
    }

    pub fn with_binning(mut self, binning: Binning) -> Self {
        self.binning = binning;
        self
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    pub fn is_square(&self) -> bool {
        self.d_a == self.d_b
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.d_b + j]
    }

    #[inline]
    pub(crate) fn increment(&mut self, i: usize, j: usize) {
        self.counts[i * self.d_b + j] += 1;
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: u64) {
        self.counts[i * self.d_b + j] = value;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn diagonal_total(&self) -> u64 {
        (0..self.d_a.min(self.d_b)).map(|i| self.get(i, i)).sum()
    }

    /// Same metadata, counts replaced element-wise.
    pub fn map_counts(&self, mut f: impl FnMut(u64) -> u64) -> JointCountMatrix {
        JointCountMatrix {
            counts: self.counts.iter().map(|&c| f(c)).collect(),
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: u64) -> JointCountMatrix {
        self.map_counts(|c| c * factor)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.d_b.max(1)).take(self.d_a)
    }

    /// Renders the matrix exchange format.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# basis_a={} basis_b={} d_a={} d_b={}",
            self.basis_a, self.basis_b, self.d_a, self.d_b
        );
        let _ = write!(out, "# acquisition_seconds={}", self.acquisition_seconds);
        if let Some(tau) = self.binning.tau_ps {
            let _ = write!(out, " tau_ps={tau}");
        }
        if let Some(n) = self.binning.n_bins {
            let _ = write!(out, " n_bins={n}");
        }
        if let Some(step) = self.binning.step_ghz {
            let _ = write!(out, " step_ghz={step}");
        }
        out.push('\n');
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = parse_comment(lines.next())?;
        let meta = parse_comment(lines.next())?;
        let lookup = |pairs: &[(String, String)], key: &str| -> Option<String> {
            pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
        };
        let required = |key: &str| -> Result<String> {
            lookup(&header, key).ok_or_else(|| Error::MalformedMatrix(format!("missing `{key}` in header")))
        };
        let basis_a: Basis = required("basis_a")?.parse()?;
        let basis_b: Basis = required("basis_b")?.parse()?;
        let d_a: usize = parse_num(&required("d_a")?)?;
        let d_b: usize = parse_num(&required("d_b")?)?;

        let mut counts = Vec::with_capacity(d_a * d_b);
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let values: Vec<u64> = line.split(',').map(|v| parse_num(v.trim())).collect::<Result<_>>()?;
            if values.len() != d_b {
                return Err(Error::MalformedMatrix(format!(
                    "row {row} has {} entries, expected {d_b}",
                    values.len()
                )));
            }
            counts.extend(values);
        }
        if counts.len() != d_a * d_b {
            return Err(Error::MalformedMatrix(format!(
                "found {} rows, expected {d_a}",
                counts.len() / d_b.max(1)
            )));
        }

        let seconds = lookup(&meta, "acquisition_seconds")
            .map(|v| parse_num::<f64>(&v))
            .transpose()?
            .unwrap_or(0.0);
        let binning = Binning {
            tau_ps: lookup(&meta, "tau_ps").map(|v| parse_num(&v)).transpose()?,
            n_bins: lookup(&meta, "n_bins").map(|v| parse_num(&v)).transpose()?,
            step_ghz: lookup(&meta, "step_ghz").map(|v| parse_num(&v)).transpose()?,
        };
        Ok(JointCountMatrix::new(d_a, d_b, counts, basis_a, basis_b)?
            .with_seconds(seconds)
            .with_binning(binning))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        JointCountMatrix::from_csv(&fs::read_to_string(path)?)
    }
}

fn parse_comment(line: Option<&str>) -> Result<Vec<(String, String)>> {
    let line = line.ok_or_else(|| Error::MalformedMatrix("missing comment header".into()))?;
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::MalformedMatrix(format!("expected `#` comment line, got `{line}`")))?;
    body.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::MalformedMatrix(format!("bad header field `{kv}`")))
        })
        .collect()
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::MalformedMatrix(format!("cannot parse `{s}` as a number")))
}

/// Normalized joint outcome probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    d_a: usize,
    d_b: usize,
    p: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(d_a: usize, d_b: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != d_a * d_b {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for a {d_a}x{d_b} matrix",
                p.len()
            )));
        }
        Ok(ProbMatrix { d_a, d_b, p })
    }

    pub fn from_fn(d_a: usize, d_b: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let p = (0..d_a)
            .flat_map(|i| (0..d_b).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        ProbMatrix { d_a, d_b, p }
    }

    /// Perfectly correlated outcomes: uniform diagonal.
    pub fn ideal(d: usize) -> Self {
        ProbMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / d as f64 } else { 0.0 })
    }

    pub fn uniform(d: usize) -> Self {
        ProbMatrix::from_fn(d, d, |_, _| 1.0 / (d * d) as f64)
    }

    /// Convex mixture `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &ProbMatrix, w: f64) -> Result<Self> {
        if self.d_a != other.d_a || self.d_b != other.d_b {
            return Err(Error::DimensionMismatch("mixing matrices of different shapes".into()));
        }
        let p = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(ProbMatrix { p, ..*self })
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.d_b + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn diagonal_sum(&self) -> f64 {
        (0..self.d_a.min(self.d_b)).map(|i| self.get(i, i)).sum()
    }

    /// Column sums (Bob's marginal).
    pub fn marginal_b(&self) -> Vec<f64> {
        (0..self.d_b)
            .map(|j| (0..self.d_a).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Row sums (Alice's marginal).
    pub fn marginal_a(&self) -> Vec<f64> {
        (0..self.d_a)
            .map(|i| (0..self.d_b).map(|j| self.get(i, j)).sum())
            .collect()
    }
}

/// `counts(i, j) / total`.
pub fn normalize(matrix: &JointCountMatrix) -> Result<ProbMatrix> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::EmptyData);
    }
    let total = total as f64;
    ProbMatrix::new(
        matrix.d_a,
        matrix.d_b,
        matrix.counts.iter().map(|&c| c as f64 / total).collect(),
    )
}

/// The `d`x`d` block with rows and columns `[offset, offset + d)`.
pub fn subspace(matrix: &JointCountMatrix, d: usize, offset: usize) -> Result<JointCountMatrix> {
    if d == 0 || offset + d > matrix.d_a || offset + d > matrix.d_b {
        return Err(Error::OutOfRange {
            d,
            offset,
            d_a: matrix.d_a,
            d_b: matrix.d_b,
        });
    }
    let counts = (offset..offset + d)
        .flat_map(|i| (offset..offset + d).map(move |j| (i, j)))
        .map(|(i, j)| matrix.get(i, j))
        .collect();
    Ok(JointCountMatrix {
        d_a: d,
        d_b: d,
        counts,
        ..matrix.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(rows: &[&[u64]]) -> JointCountMatrix {
        let rows: Vec<Vec<u64>> = rows.iter().map(|r| r.to_vec()).collect();
        JointCountMatrix::from_rows(&rows, Basis::Time, Basis::Time).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let p = normalize(&square(&[&[1, 1], &[1, 1]])).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.25));

        let p = normalize(&square(&[&[4, 0], &[0, 0]])).unwrap();
        assert_eq!(p.values(), &[1.0, 0.0, 0.0, 0.0]);

        let p = normalize(&square(&[&[5, 0, 0], &[0, 3, 0], &[0, 0, 2]])).unwrap();
        assert_eq!((p.get(0, 0), p.get(1, 1), p.get(2, 2)), (0.5, 0.3, 0.2));
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_all_zero_is_error() {
        let m = JointCountMatrix::zeros(3, 3, Basis::Time, Basis::Time);
        assert!(matches!(normalize(&m), Err(Error::EmptyData)));
    }

    #[test]
    fn subspace_examples() {
        let counts: Vec<u64> = (0..31 * 31).collect();
        let m = JointCountMatrix::new(31, 31, counts, Basis::Time, Basis::Time).unwrap();
        assert_eq!(subspace(&m, 31, 0).unwrap(), m);
        let s = subspace(&m, 7, 0).unwrap();
        assert_eq!(s.d_a(), 7);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(s.get(i, j), m.get(i, j));
            }
        }
        assert!(matches!(subspace(&m, 7, 25), Err(Error::OutOfRange { .. })));
        assert!(subspace(&m, 7, 24).is_ok());
    }

    #[test]
    fn csv_roundtrip_keeps_metadata() {
        let m = square(&[&[5, 1], &[0, 7]]).with_seconds(3.0).with_binning(Binning {
            tau_ps: Some(250),
            n_bins: Some(256),
            step_ghz: None,
        });
        let text = m.to_csv();
        assert!(text
            .starts_with("# basis_a=time basis_b=time d_a=2 d_b=2\n# acquisition_seconds=3 tau_ps=250 n_bins=256\n"));
        assert_eq!(JointCountMatrix::from_csv(&text).unwrap(), m);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let text = "# basis_a=time basis_b=frequency d_a=2 d_b=2\n# acquisition_seconds=1\n1,2\n3\n";
        assert!(matches!(
            JointCountMatrix::from_csv(text),
            Err(Error::MalformedMatrix(_))
        ));
        let text = "# basis_a=time basis_b=spin d_a=1 d_b=1\n# acquisition_seconds=1\n1\n";
        assert!(JointCountMatrix::from_csv(text).is_err());
    }

    fn count_matrix(max_d: usize) -> impl Strategy<Value = JointCountMatrix> {
        (1..=max_d).prop_flat_map(|d| {
            proptest::collection::vec(0u64..1000, d * d)
                .prop_map(move |c| JointCountMatrix::new(d, d, c, Basis::Time, Basis::Frequency).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_is_scale_invariant(m in count_matrix(6), k in 1u64..50) {
            prop_assume!(m.total() > 0);
            let a = normalize(&m).unwrap();
            let b = normalize(&m.scaled(k)).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300));
            }
        }

        #[test]
        fn nested_subspaces_compose(m in count_matrix(8), a in 0usize..8, b in 0usize..8, c in 0usize..8) {
            let d_full = m.d_a();
            let d1 = 1 + a % d_full;
            let off1 = b % (d_full - d1 + 1);
            let d2 = 1 + c % d1;
            let off2 = (a + c) % (d1 - d2 + 1);
            let nested = subspace(&subspace(&m, d1, off1).unwrap(), d2, off2).unwrap();
            prop_assert_eq!(nested, subspace(&m, d2, off1 + off2).unwrap());
        }
    }
}
