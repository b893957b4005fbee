//! Certification report and its canonical JSON form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};
use sha2::{Digest, Sha256};

use crate::certify::{Certificate, GammaConvention};
use crate::stats::{BootstrapSummary, Quantity};
use crate::{Error, Result};

pub const TOOL_VERSION: &str = concat!("tfcert ", env!("CARGO_PKG_VERSION"));

/// Significant digits kept for every float in emitted JSON.
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInfo {
    pub resamples: usize,
    /// Largest exclusion count over the bootstrapped quantities.
    pub excluded: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub tool_version: String,
    /// SHA-256 of the inputs that determine the report.
    pub config_digest: String,
    pub seed: u64,
    pub d: usize,
    pub gamma_convention: GammaConvention,
    /// Fraction of counts outside the selected `d x d` block.
    pub discarded_fraction_jti: f64,
    pub discarded_fraction_jsi: f64,

    pub f1: f64,
    pub f2_tilde: f64,
    pub f_tilde: f64,
    pub f_tilde_std: Option<f64>,
    pub b_k: Vec<f64>,
    pub d_ent: usize,

    pub eof_lb: f64,
    pub eof_lb_std: Option<f64>,
    pub eof_raw: f64,
    pub h_time: f64,
    pub h_freq: f64,
    pub max_overlap: f64,
    pub max_overlap_std: Option<f64>,
    pub overlap_idealized: bool,

    pub s: f64,
    pub sr_lb: f64,
    pub sr_lb_std: Option<f64>,
    pub delta: f64,
    pub delta_std: Option<f64>,
    pub n_cert: usize,

    pub nonprime: bool,
    pub bootstrap: Option<BootstrapInfo>,
    pub warnings: Vec<String>,
}

/// Provenance that is not part of the certificate itself.
#[derive(Debug, Clone, Default)]
pub struct ReportContext {
    pub config_digest: String,
    pub seed: u64,
    pub gamma: GammaConvention,
    pub discarded_fraction_jti: f64,
    pub discarded_fraction_jsi: f64,
    pub max_overlap_std: Option<f64>,
    pub extra_warnings: Vec<String>,
}

impl CertificationReport {
    pub fn new(cert: &Certificate, bootstrap: Option<&[(Quantity, BootstrapSummary)]>, ctx: &ReportContext) -> Self {
        let std_of = |q: Quantity| bootstrap.and_then(|b| b.iter().find(|(k, _)| *k == q).map(|(_, s)| s.std));
        let info = bootstrap.and_then(|b| {
            b.first().map(|(_, s)| BootstrapInfo {
                resamples: s.resamples,
                excluded: b.iter().map(|(_, s)| s.excluded).max().unwrap_or(0),
                seed: s.seed,
            })
        });
        let mut warnings = cert.warnings.clone();
        warnings.extend(ctx.extra_warnings.iter().cloned());
        CertificationReport {
            tool_version: TOOL_VERSION.to_string(),
            config_digest: ctx.config_digest.clone(),
            seed: ctx.seed,
            d: cert.d,
            gamma_convention: ctx.gamma,
            discarded_fraction_jti: ctx.discarded_fraction_jti,
            discarded_fraction_jsi: ctx.discarded_fraction_jsi,
            f1: cert.fidelity.f1,
            f2_tilde: cert.fidelity.f2_tilde,
            f_tilde: cert.fidelity.f_tilde,
            f_tilde_std: std_of(Quantity::FTilde),
            b_k: cert.fidelity.b_k.clone(),
            d_ent: cert.fidelity.d_ent,
            eof_lb: cert.eof.eof_lb,
            eof_lb_std: std_of(Quantity::EofLb),
            eof_raw: cert.eof.eof_raw,
            h_time: cert.eof.h_time,
            h_freq: cert.eof.h_freq,
            max_overlap: cert.eof.max_overlap,
            max_overlap_std: if cert.eof.overlap_idealized {
                None
            } else {
                ctx.max_overlap_std
            },
            overlap_idealized: cert.eof.overlap_idealized,
            s: cert.steering.s,
            sr_lb: cert.steering.sr_lb,
            sr_lb_std: std_of(Quantity::SrLb),
            delta: cert.steering.delta,
            delta_std: std_of(Quantity::Delta),
            n_cert: cert.steering.n_cert,
            nonprime: cert.nonprime,
            bootstrap: info,
            warnings,
        }
    }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            Number::from_f64(quantize(x)).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key.
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// Sorted keys, floats at 12 significant digits, two-space indentation and
/// a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(format!("serialization failed: {e}")))?;
    let mut out = serde_json::to_string_pretty(&canonicalize(v)).expect("value serializes");
    out.push('\n');
    Ok(out)
}

pub fn emit_report(report: &CertificationReport, destination: impl AsRef<Path>) -> Result<PathBuf> {
    let path = destination.as_ref().to_path_buf();
    std::fs::write(&path, to_canonical_json(report)?)?;
    Ok(path)
}

pub fn parse_report(text: &str) -> Result<CertificationReport> {
    serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("malformed report: {e}")))
}
