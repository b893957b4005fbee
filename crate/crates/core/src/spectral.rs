//! Frequency-basis acquisition by filter sweep, its closed-form
//! expectation, and the time x frequency cross-basis check.
//!
//! Index convention: Bob's filter centers are mirrored (`centers_b[j] =
//! -centers_a[j]`) so that energy anti-correlation shows up on the matrix
//! diagonal.

use rayon::prelude::*;
use serde::Serialize;

use crate::coincidence::match_pairs;
use crate::matrix::{Basis, Binning, JointCountMatrix};
use crate::source::{
    detect, expected_correlation_fwhm_ps, generate_pairs, generate_pairs_in_band, sigma_from_fwhm, BandPass,
    ChannelConfig, FilterSetting, FilterShape, SourceConfig,
};
use crate::tags::{Channel, FrameLayout};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub d: usize,
    pub step_ghz: f64,
    pub filter_fwhm_ghz: f64,
    pub shape: FilterShape,
    /// Alice's filter centers, ascending.
    pub centers_a: Vec<f64>,
    /// Bob's filter centers in canonical (mirrored) order.
    pub centers_b: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SweepPlan {
    pub fn span_ghz(&self) -> f64 {
        (self.d - 1) as f64 * self.step_ghz
    }

    pub fn filters(&self, i: usize, j: usize) -> FilterSetting {
        FilterSetting::both(self.centers_a[i], self.centers_b[j], self.filter_fwhm_ghz, self.shape)
    }

    pub fn band_a(&self, i: usize) -> BandPass {
        BandPass {
            center_ghz: self.centers_a[i],
            fwhm_ghz: self.filter_fwhm_ghz,
            shape: self.shape,
        }
    }

    pub fn band_b(&self, j: usize) -> BandPass {
        BandPass {
            center_ghz: self.centers_b[j],
            fwhm_ghz: self.filter_fwhm_ghz,
            shape: self.shape,
        }
    }

    /// Adds a warning when the sweep reaches past the source envelope.
    pub fn check_coverage(mut self, pm_bandwidth_ghz: f64) -> Self {
        let span = self.span_ghz();
        if span > pm_bandwidth_ghz {
            self.warnings.push(format!(
                "sweep span {span:.1} GHz exceeds the {pm_bandwidth_ghz:.1} GHz phase-matching bandwidth"
            ));
        }
        self
    }
}

/// `d` equally spaced settings centered on the band, at `step_ghz`
/// (default twice the filter FWHM).
pub fn sweep_plan(d: usize, filter_fwhm_ghz: f64, step_ghz: Option<f64>, shape: FilterShape) -> Result<SweepPlan> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("sweep needs d >= 2, got {d}")));
    }
    if !(filter_fwhm_ghz > 0.0) {
        return Err(Error::InvalidParameter("filter FWHM must be positive".into()));
    }
    let step = step_ghz.unwrap_or(2.0 * filter_fwhm_ghz);
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("sweep step must be positive".into()));
    }
    let mid = (d - 1) as f64 / 2.0;
    let centers_a: Vec<f64> = (0..d).map(|i| (i as f64 - mid) * step).collect();
    let centers_b = centers_a.iter().map(|c| -c).collect();
    Ok(SweepPlan {
        d,
        step_ghz: step,
        filter_fwhm_ghz,
        shape,
        centers_a,
        centers_b,
        warnings: Vec::new(),
    })
}

/// Probability that a single emitted pair passes both filters of setting
/// `(i, j)`, i.e. `E[t_a(delta) t_b(-delta + eps)]` over the source model.
pub fn spectral_overlap(src: &SourceConfig, plan: &SweepPlan, i: usize, j: usize) -> Result<f64> {
    if i >= plan.d || j >= plan.d {
        return Err(Error::InvalidParameter(format!(
            "setting ({i}, {j}) outside a d={} plan",
            plan.d
        )));
    }
    match plan.shape {
        FilterShape::Gaussian => Ok(gaussian_overlap(src, plan, i, j)),
        FilterShape::Lorentzian => Ok(numeric_overlap(src, &plan.band_a(i), &plan.band_b(j))),
    }
}

/// Closed form for Gaussian filters.
///
/// With filter width `st`, pump spread `se` and envelope `sd`: integrating
/// out `eps` turns Bob's filter into a Gaussian of width
/// `s = sqrt(st^2 + se^2)` centered at `-b`; the product with Alice's
/// filter is a Gaussian in `delta` of variance `v` and mean `mu`, which
/// then averages against the envelope.
fn gaussian_overlap(src: &SourceConfig, plan: &SweepPlan, i: usize, j: usize) -> f64 {
    let a = plan.centers_a[i];
    let b = plan.centers_b[j];
    let st2 = sigma_from_fwhm(plan.filter_fwhm_ghz).powi(2);
    let se2 = src.pump_sigma_ghz().powi(2);
    let sd2 = src.detuning_sigma_ghz().powi(2);
    let s2 = st2 + se2;
    let pump_factor = (st2 / s2).sqrt();
    let mismatch = (-(a + b).powi(2) / (2.0 * (st2 + s2))).exp();
    let v = st2 * s2 / (st2 + s2);
    let mu = (a * s2 - b * st2) / (st2 + s2);
    let envelope = (v / (v + sd2)).sqrt() * (-mu * mu / (2.0 * (v + sd2))).exp();
    pump_factor * mismatch * envelope
}

/// Composite Simpson over (delta, eps) for line shapes without a closed
/// form.
fn numeric_overlap(src: &SourceConfig, band_a: &BandPass, band_b: &BandPass) -> f64 {
    let sd = src.detuning_sigma_ghz();
    let se = src.pump_sigma_ghz();
    let d_step = (band_a.fwhm_ghz.min(band_b.fwhm_ghz) / 20.0).min(sd / 20.0);
    let d_half = 8.0 * sd;
    let n_d = ((2.0 * d_half / d_step).ceil() as usize) | 1;
    let n_d = n_d + 1 - (n_d % 2); // odd point count
    let h_d = 2.0 * d_half / (n_d - 1) as f64;

    let eps_nodes: Vec<(f64, f64)> = if se > 0.0 {
        let n_e = 129;
        let e_half = 8.0 * se;
        let h_e = 2.0 * e_half / (n_e - 1) as f64;
        (0..n_e)
            .map(|k| {
                let e = -e_half + k as f64 * h_e;
                let w = simpson_weight(k, n_e) * h_e / 3.0;
                (e, w * gaussian_pdf(e, se))
            })
            .collect()
    } else {
        vec![(0.0, 1.0)]
    };

    let mut total = 0.0;
    for k in 0..n_d {
        let delta = -d_half + k as f64 * h_d;
        let ta = band_a.transmission(delta);
        if ta == 0.0 {
            continue;
        }
        let tb: f64 = eps_nodes
            .iter()
            .map(|&(e, w)| w * band_b.transmission(-delta + e))
            .sum();
        total += simpson_weight(k, n_d) * h_d / 3.0 * gaussian_pdf(delta, sd) * ta * tb;
    }
    total
}

fn simpson_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n - 1 {
        1.0
    } else if k % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

fn gaussian_pdf(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Expected rate (Hz) of true A_F x B_F coincidences for setting `(i, j)`.
pub fn jsi_expectation(
    src: &SourceConfig,
    channel: &ChannelConfig,
    plan: &SweepPlan,
    i: usize,
    j: usize,
) -> Result<f64> {
    let arm = |p: &crate::source::PartyChannel| p.freq_detector.efficiency * (1.0 - p.splitter_ratio);
    Ok(src.pair_rate_hz * arm(&channel.a) * arm(&channel.b) * spectral_overlap(src, plan, i, j)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AcquisitionOptions {
    /// Coincidence window; `None` uses five times the expected
    /// correlation FWHM for filtered photons.
    pub window_ps: Option<u64>,
}

fn default_window(src: &SourceConfig, channel: &ChannelConfig, plan: &SweepPlan, time_arms: (bool, bool)) -> u64 {
    // Filtered photons only span the filter passband.
    let narrowed = SourceConfig {
        pm_bandwidth_ghz: plan.filter_fwhm_ghz.min(src.pm_bandwidth_ghz),
        ..*src
    };
    (5.0 * expected_correlation_fwhm_ps(&narrowed, channel, time_arms))
        .ceil()
        .max(50.0) as u64
}

/// Runs the detection chain once per `(i, j)` setting and counts
/// A_F x B_F coincidences. Setting `(i, j)` uses seed `seed + i * d + j`.
pub fn acquire_jsi(
    src: &SourceConfig,
    channel: &ChannelConfig,
    plan: &SweepPlan,
    seconds_per_setting: f64,
    seed: u64,
    opts: &AcquisitionOptions,
) -> Result<JointCountMatrix> {
    let d = plan.d;
    let window = opts
        .window_ps
        .unwrap_or_else(|| default_window(src, channel, plan, (false, false)));
    let counts: Vec<u64> = (0..d * d)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / d, idx % d);
            jsi_setting(
                src,
                channel,
                plan,
                i,
                j,
                seconds_per_setting,
                seed.wrapping_add(idx as u64),
                window,
            )
        })
        .collect::<Result<_>>()?;
    Ok(JointCountMatrix::new(d, d, counts, Basis::Frequency, Basis::Frequency)?
        .with_seconds(seconds_per_setting)
        .with_binning(Binning {
            step_ghz: Some(plan.step_ghz),
            ..Binning::default()
        }))
}

#[allow(clippy::too_many_arguments)]
fn jsi_setting(
    src: &SourceConfig,
    channel: &ChannelConfig,
    plan: &SweepPlan,
    i: usize,
    j: usize,
    seconds: f64,
    seed: u64,
    window: u64,
) -> Result<u64> {
    if seconds == 0.0 {
        return Ok(0);
    }
    let filters = plan.filters(i, j);
    let (band_a, band_b) = (plan.band_a(i), plan.band_b(j));
    // Only pairs with a photon inside one of the passbands can click on a
    // filtered detector.
    let pairs = match (band_a.negligible_beyond_ghz(), band_b.negligible_beyond_ghz()) {
        (Some(la), Some(lb)) => {
            let pump_reach = 8.5 * src.pump_sigma_ghz();
            let bands = [
                (band_a.center_ghz - la, band_a.center_ghz + la),
                (
                    -band_b.center_ghz - lb - pump_reach,
                    -band_b.center_ghz + lb + pump_reach,
                ),
            ];
            generate_pairs_in_band(src, seconds, seed, &bands)?
        }
        _ => generate_pairs(src, seconds, seed)?,
    };
    let det = detect(&pairs, src, channel, &filters, seconds, seed)?;
    Ok(match_pairs(det.stream(Channel::AF).tags(), det.stream(Channel::BF).tags(), window).len() as u64)
}

/// Estimated `|<i|j~>|^2` between Alice's time bins and Bob's frequency
/// settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapEstimate {
    pub d: usize,
    /// Row-major, rows = frequency setting `j`, columns = time bin `i`;
    /// each row sums to one.
    pub overlap: Vec<f64>,
    pub max_overlap: f64,
    /// Binomial standard error of the maximal entry.
    pub max_overlap_std: f64,
    /// Mean of `|entry - 1/d|`.
    pub avg_deviation: f64,
    /// Sample standard deviation of `|entry - 1/d|`.
    pub avg_deviation_std: f64,
    /// Coincidences per frequency setting.
    pub column_totals: Vec<u64>,
    pub warnings: Vec<String>,
}

pub const LOW_STATISTICS_THRESHOLD: u64 = 100;

impl OverlapEstimate {
    /// From a count matrix with time bins on rows and frequency settings
    /// on columns.
    pub fn from_counts(counts: &JointCountMatrix) -> Result<Self> {
        if !counts.is_square() {
            return Err(Error::DimensionMismatch("cross-basis counts must be square".into()));
        }
        let d = counts.d_a();
        let column_totals: Vec<u64> = (0..d).map(|j| (0..d).map(|i| counts.get(i, j)).sum()).collect();
        if column_totals.iter().all(|&n| n == 0) {
            return Err(Error::EmptyData);
        }
        let mut warnings = Vec::new();
        let starved: Vec<usize> = (0..d)
            .filter(|&j| column_totals[j] < LOW_STATISTICS_THRESHOLD)
            .collect();
        if !starved.is_empty() {
            warnings.push(format!(
                "low statistics: {} setting(s) with fewer than {LOW_STATISTICS_THRESHOLD} coincidences",
                starved.len()
            ));
        }

        let mut overlap = vec![0.0; d * d];
        for j in 0..d {
            let n = column_totals[j];
            for i in 0..d {
                overlap[j * d + i] = if n > 0 { counts.get(i, j) as f64 / n as f64 } else { 0.0 };
            }
        }
        let (arg, max_overlap) = overlap.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (k, v)| if v > bv { (k, v) } else { (bi, bv) },
        );
        let n_max = column_totals[arg / d].max(1) as f64;
        let max_overlap_std = (max_overlap * (1.0 - max_overlap) / n_max).sqrt();

        let target = 1.0 / d as f64;
        let devs: Vec<f64> = overlap.iter().map(|p| (p - target).abs()).collect();
        let mean = devs.iter().sum::<f64>() / devs.len() as f64;
        let var = devs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (devs.len() - 1) as f64;

        Ok(OverlapEstimate {
            d,
            overlap,
            max_overlap,
            max_overlap_std,
            avg_deviation: mean,
            avg_deviation_std: var.sqrt(),
            column_totals,
            warnings,
        })
    }

    pub fn get(&self, setting: usize, bin: usize) -> f64 {
        self.overlap[setting * self.d + bin]
    }
}

/// Alice measures arrival time, Bob a filtered frequency; one run per
/// filter setting `j` with seed `seed + j`. Time bins
/// `[bin_offset, bin_offset + d)` of `frame` are used.
#[allow(clippy::too_many_arguments)]
pub fn acquire_cross_basis(
    src: &SourceConfig,
    channel: &ChannelConfig,
    plan: &SweepPlan,
    frame: FrameLayout,
    bin_offset: usize,
    seconds_per_setting: f64,
    seed: u64,
    opts: &AcquisitionOptions,
) -> Result<(JointCountMatrix, OverlapEstimate)> {
    let d = plan.d;
    if bin_offset + d > frame.n_bins {
        return Err(Error::OutOfRange {
            d,
            offset: bin_offset,
            d_a: frame.n_bins,
            d_b: frame.n_bins,
        });
    }
    let window = opts
        .window_ps
        .unwrap_or_else(|| default_window(src, channel, plan, (true, false)));
    let columns: Vec<Vec<u64>> = (0..d)
        .into_par_iter()
        .map(|j| -> Result<Vec<u64>> {
            let mut col = vec![0u64; d];
            if seconds_per_setting == 0.0 {
                return Ok(col);
            }
            let seed_j = seed.wrapping_add(j as u64);
            let pairs = generate_pairs(src, seconds_per_setting, seed_j)?;
            let filters = FilterSetting {
                a: None,
                b: Some(plan.band_b(j)),
            };
            let det = detect(&pairs, src, channel, &filters, seconds_per_setting, seed_j)?;
            for pair in match_pairs(det.stream(Channel::AT).tags(), det.stream(Channel::BF).tags(), window) {
                let (_, bin) = frame.locate(pair.t_a);
                if bin >= bin_offset && bin < bin_offset + d {
                    col[bin - bin_offset] += 1;
                }
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;

    let mut counts = JointCountMatrix::zeros(d, d, Basis::Time, Basis::Frequency)
        .with_seconds(seconds_per_setting)
        .with_binning(Binning {
            tau_ps: Some(frame.tau_ps),
            n_bins: Some(frame.n_bins),
            step_ghz: Some(plan.step_ghz),
        });
    for (j, col) in columns.iter().enumerate() {
        for (i, &c) in col.iter().enumerate() {
            counts.set(i, j, c);
        }
    }
    let estimate = OverlapEstimate::from_counts(&counts)?;
    Ok((counts, estimate))
}
