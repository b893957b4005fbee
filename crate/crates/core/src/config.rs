//! Pipeline configuration: TOML with one section per stage and units in
//! every key name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certify::{is_prime, GammaConvention};
use crate::source::{ChannelConfig, FilterShape, SourceConfig};
use crate::stats::DEFAULT_RESAMPLES;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub source: SourceConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub correlate: CorrelateConfig,
    pub jti: JtiConfig,
    pub jsi: JsiConfig,
    #[serde(default)]
    pub mub: Option<MubConfig>,
    pub certify: CertifyConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateConfig {
    pub bin_width_ps: u64,
    /// Histogram covers `[-range_ps, +range_ps]`.
    pub range_ps: u64,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        CorrelateConfig {
            bin_width_ps: 2,
            range_ps: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JtiConfig {
    pub acquisition_seconds: f64,
    pub tau_ps: u64,
    pub n_bins: usize,
    #[serde(default)]
    pub offset: usize,
    /// Defaults to five times the expected correlation FWHM.
    #[serde(default)]
    pub window_ps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsiConfig {
    pub filter_fwhm_ghz: f64,
    /// Defaults to twice the filter FWHM.
    #[serde(default)]
    pub step_ghz: Option<f64>,
    #[serde(default)]
    pub shape: FilterShape,
    pub seconds_per_setting: f64,
    #[serde(default)]
    pub window_ps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MubConfig {
    pub d: usize,
    pub seconds_per_setting: f64,
    #[serde(default)]
    pub bin_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    /// Dimension of the headline report.
    pub d: usize,
    /// Dimensions for the curves; defaults to every prime up to `d`.
    #[serde(default)]
    pub curve_d: Option<Vec<usize>>,
    #[serde(default)]
    pub allow_nonprime: bool,
    #[serde(default)]
    pub gamma: GammaConvention,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

impl CertifyConfig {
    /// Sorted, deduplicated dimensions to certify, always including `d`.
    pub fn dimensions(&self) -> Vec<usize> {
        let mut ds = match &self.curve_d {
            Some(v) => v.clone(),
            None => (2..=self.d).filter(|&k| is_prime(k)).collect(),
        };
        ds.push(self.d);
        ds.sort_unstable();
        ds.dedup();
        ds
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Read `AT.qtag` and `BT.qtag` from here instead of simulating the
    /// time-basis run. Relative paths resolve against the config file.
    #[serde(default)]
    pub tags_dir: Option<PathBuf>,
    /// Write one record per simulated pair to `truth.csv`.
    #[serde(default)]
    pub write_truth: bool,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file; relative `tags_dir` is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = &cfg.run.tags_dir {
            if dir.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.run.tags_dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.source.validate()?;
        self.channel.validate()?;
        if self.correlate.bin_width_ps == 0 || self.correlate.range_ps == 0 {
            return bad("correlate: bin_width_ps and range_ps must be positive".into());
        }
        if !(self.jti.acquisition_seconds > 0.0) {
            return bad("jti: acquisition_seconds must be positive".into());
        }
        if self.jti.tau_ps == 0 || self.jti.n_bins == 0 {
            return bad("jti: tau_ps and n_bins must be positive".into());
        }
        if !(self.jsi.filter_fwhm_ghz > 0.0) || !(self.jsi.seconds_per_setting >= 0.0) {
            return bad("jsi: filter_fwhm_ghz must be positive and seconds_per_setting non-negative".into());
        }
        let dims = self.certify.dimensions();
        let d_max = *dims.last().expect("non-empty");
        if dims[0] < 2 {
            return bad("certify: dimensions must be at least 2".into());
        }
        if self.jti.offset + d_max > self.jti.n_bins {
            return bad(format!(
                "jti: offset {} + d {} exceeds n_bins {}",
                self.jti.offset, d_max, self.jti.n_bins
            ));
        }
        if !self.certify.allow_nonprime {
            if let Some(&d) = dims.iter().find(|&&d| !is_prime(d)) {
                return Err(Error::NonPrimeDimension(d));
            }
        }
        if self.certify.bootstrap_resamples == 1 {
            return bad("certify: bootstrap_resamples must be 0 (off) or at least 2".into());
        }
        if let Some(m) = &self.mub {
            if m.d < 2 || m.bin_offset + m.d > self.jti.n_bins || !(m.seconds_per_setting > 0.0) {
                return bad("mub: need d >= 2, bins inside the frame and positive seconds_per_setting".into());
            }
        }
        Ok(())
    }

    /// Largest certified dimension, which sets the size of the sweep.
    pub fn sweep_d(&self) -> usize {
        *self.certify.dimensions().last().expect("non-empty")
    }
}
