//! Photon-pair source, dispersive channel and detector model.
//!
//! Intensity-level model: each pair has a birth time drawn from a Poisson
//! process, a signal detuning `delta` from the phase-matching envelope and
//! a sum-frequency offset `eps` from the pump spread, so the signal sits at
//! `+delta` and the idler at `-delta + eps` (GHz from band center). Both
//! envelopes are Gaussian with the configured FWHM.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::tags::{Channel, TagStream, TimeTag};
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ratio FWHM / sigma of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

pub fn seconds_to_ps(seconds: f64) -> u64 {
    (seconds * 1e12).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub pair_rate_hz: f64,
    /// Phase-matching FWHM of the signal detuning envelope.
    pub pm_bandwidth_ghz: f64,
    /// FWHM of the signal+idler sum-frequency spread.
    pub pump_linewidth_ghz: f64,
    #[serde(default = "default_center_wavelength")]
    pub center_wavelength_nm: f64,
    /// FWHM of the intrinsic signal/idler arrival-time difference.
    #[serde(default = "default_correlation_time")]
    pub correlation_time_ps: f64,
}

fn default_center_wavelength() -> f64 {
    1560.0
}

fn default_correlation_time() -> f64 {
    0.1
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            pair_rate_hz: 1e6,
            pm_bandwidth_ghz: 250.0,
            pump_linewidth_ghz: 0.0,
            center_wavelength_nm: default_center_wavelength(),
            correlation_time_ps: default_correlation_time(),
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("source: {msg}")));
        if !(self.pair_rate_hz > 0.0) {
            return bad("pair_rate_hz must be positive");
        }
        if !(self.pm_bandwidth_ghz > 0.0) {
            return bad("pm_bandwidth_ghz must be positive");
        }
        if !(self.pump_linewidth_ghz >= 0.0) {
            return bad("pump_linewidth_ghz must be non-negative");
        }
        if !(self.correlation_time_ps >= 0.0) {
            return bad("correlation_time_ps must be non-negative");
        }
        if !(self.center_wavelength_nm > 0.0) {
            return bad("center_wavelength_nm must be positive");
        }
        Ok(())
    }

    pub fn detuning_sigma_ghz(&self) -> f64 {
        sigma_from_fwhm(self.pm_bandwidth_ghz)
    }

    pub fn pump_sigma_ghz(&self) -> f64 {
        sigma_from_fwhm(self.pump_linewidth_ghz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    #[serde(default)]
    pub jitter_fwhm_ps: f64,
    #[serde(default)]
    pub dark_rate_hz: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            efficiency: 1.0,
            jitter_fwhm_ps: 0.0,
            dark_rate_hz: 0.0,
        }
    }
}

/// One party's channel: dispersion, the time/frequency splitter and the
/// two detectors behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyChannel {
    #[serde(default)]
    pub dispersion_ps_per_nm: f64,
    /// Probability a photon is routed to the arrival-time arm.
    #[serde(default = "default_splitter")]
    pub splitter_ratio: f64,
    #[serde(default)]
    pub time_detector: DetectorConfig,
    #[serde(default)]
    pub freq_detector: DetectorConfig,
}

fn default_splitter() -> f64 {
    0.5
}

impl Default for PartyChannel {
    fn default() -> Self {
        PartyChannel {
            dispersion_ps_per_nm: 0.0,
            splitter_ratio: default_splitter(),
            time_detector: DetectorConfig::default(),
            freq_detector: DetectorConfig::default(),
        }
    }
}

impl PartyChannel {
    /// Same efficiency, jitter and dark rate on both detectors.
    pub fn uniform(efficiency: f64, jitter_fwhm_ps: f64, dark_rate_hz: f64) -> Self {
        let det = DetectorConfig {
            efficiency,
            jitter_fwhm_ps,
            dark_rate_hz,
        };
        PartyChannel {
            time_detector: det,
            freq_detector: det,
            ..PartyChannel::default()
        }
    }

    pub fn detector(&self, time_arm: bool) -> &DetectorConfig {
        if time_arm {
            &self.time_detector
        } else {
            &self.freq_detector
        }
    }

    fn validate(&self, party: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("channel {party}: {msg}")));
        if !(0.0..=1.0).contains(&self.splitter_ratio) {
            return bad(format!("splitter_ratio {} outside [0, 1]", self.splitter_ratio));
        }
        for (arm, det) in [("time", &self.time_detector), ("freq", &self.freq_detector)] {
            if !(0.0..=1.0).contains(&det.efficiency) {
                return bad(format!("{arm} efficiency {} outside [0, 1]", det.efficiency));
            }
            if !(det.jitter_fwhm_ps >= 0.0) {
                return bad(format!("{arm} jitter must be non-negative"));
            }
            if !(det.dark_rate_hz >= 0.0) {
                return bad(format!("{arm} dark rate must be non-negative"));
            }
        }
        if !self.dispersion_ps_per_nm.is_finite() {
            return bad("dispersion must be finite".into());
        }
        Ok(())
    }
}

/// Residual skew-normal timing term on Bob's clicks, modelling imperfect
/// higher-order dispersion cancellation. Zero scale disables it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualAsymmetry {
    #[serde(default)]
    pub scale_ps: f64,
    #[serde(default)]
    pub shape: f64,
}

impl ResidualAsymmetry {
    fn delta(&self) -> f64 {
        self.shape / (1.0 + self.shape * self.shape).sqrt()
    }

    pub fn mean_ps(&self) -> f64 {
        self.scale_ps * self.delta() * (2.0 / PI).sqrt()
    }

    pub fn variance_ps2(&self) -> f64 {
        let d = self.delta();
        self.scale_ps * self.scale_ps * (1.0 - 2.0 * d * d / PI)
    }

    /// Zero-mean skew-normal draw.
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.scale_ps == 0.0 {
            return 0.0;
        }
        let d = self.delta();
        let u0: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let u1 = d * u0 + (1.0 - d * d).sqrt() * v;
        let z = if u0 >= 0.0 { u1 } else { -u1 };
        self.scale_ps * z - self.mean_ps()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub a: PartyChannel,
    pub b: PartyChannel,
    #[serde(default)]
    pub residual: ResidualAsymmetry,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        self.a.validate("a")?;
        self.b.validate("b")?;
        if !(self.residual.scale_ps >= 0.0) || !self.residual.shape.is_finite() {
            return Err(Error::InvalidParameter(
                "residual asymmetry must have scale >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn party(&self, alice: bool) -> &PartyChannel {
        if alice {
            &self.a
        } else {
            &self.b
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterShape {
    #[default]
    Gaussian,
    Lorentzian,
}

/// Tunable band-pass filter in front of a frequency-arm detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPass {
    pub center_ghz: f64,
    pub fwhm_ghz: f64,
    #[serde(default)]
    pub shape: FilterShape,
}

impl BandPass {
    pub fn gaussian(center_ghz: f64, fwhm_ghz: f64) -> Self {
        BandPass {
            center_ghz,
            fwhm_ghz,
            shape: FilterShape::Gaussian,
        }
    }

    pub fn transmission(&self, detuning_ghz: f64) -> f64 {
        match self.shape {
            FilterShape::Gaussian => filter_transmission(detuning_ghz, self.center_ghz, self.fwhm_ghz),
            FilterShape::Lorentzian => {
                let x = 2.0 * (detuning_ghz - self.center_ghz) / self.fwhm_ghz;
                1.0 / (1.0 + x * x)
            }
        }
    }

    /// Half-width beyond which transmission is negligible (< 3e-11), or
    /// `None` for line shapes with heavy tails.
    pub fn negligible_beyond_ghz(&self) -> Option<f64> {
        match self.shape {
            FilterShape::Gaussian => Some(7.0 * sigma_from_fwhm(self.fwhm_ghz)),
            FilterShape::Lorentzian => None,
        }
    }
}

/// Filter state for one measurement setting. `None` leaves that party's
/// frequency arm unfiltered.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterSetting {
    pub a: Option<BandPass>,
    pub b: Option<BandPass>,
}

impl FilterSetting {
    pub fn both(center_offset_a_ghz: f64, center_offset_b_ghz: f64, fwhm_ghz: f64, shape: FilterShape) -> Self {
        FilterSetting {
            a: Some(BandPass {
                center_ghz: center_offset_a_ghz,
                fwhm_ghz,
                shape,
            }),
            b: Some(BandPass {
                center_ghz: center_offset_b_ghz,
                fwhm_ghz,
                shape,
            }),
        }
    }
}

/// Gaussian filter profile `2^(-(2 (detuning - center) / fwhm)^2)`.
pub fn filter_transmission(detuning_ghz: f64, center_ghz: f64, fwhm_ghz: f64) -> f64 {
    let x = 2.0 * (detuning_ghz - center_ghz) / fwhm_ghz;
    (-LN_2 * x * x).exp()
}

/// Wavelength offset in nm of a detuning in GHz (positive detuning means
/// shorter wavelength).
pub fn wavelength_offset_nm(detuning_ghz: f64, center_wavelength_nm: f64) -> f64 {
    let lambda_m = center_wavelength_nm * 1e-9;
    -(lambda_m * lambda_m / SPEED_OF_LIGHT) * (detuning_ghz * 1e9) * 1e9
}

/// First-order group delay in ps accumulated by a photon at `detuning_ghz`.
pub fn dispersion_delay(detuning_ghz: f64, dispersion_ps_per_nm: f64, center_wavelength_nm: f64) -> f64 {
    dispersion_ps_per_nm * wavelength_offset_nm(detuning_ghz, center_wavelength_nm)
}

/// Ground truth for one emitted pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub birth_ps: f64,
    /// Signal (Alice) detuning from band center.
    pub signal_detuning_ghz: f64,
    /// Sum-frequency offset from the pump spread.
    pub pump_offset_ghz: f64,
}

impl PairEvent {
    pub fn idler_detuning_ghz(&self) -> f64 {
        -self.signal_detuning_ghz + self.pump_offset_ghz
    }
}

fn check_duration(duration_s: f64) -> Result<()> {
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidParameter(format!("duration {duration_s} s")));
    }
    Ok(())
}

/// Pairs emitted over `duration_s`, sorted by birth time.
pub fn generate_pairs(src: &SourceConfig, duration_s: f64, seed: u64) -> Result<Vec<PairEvent>> {
    src.validate()?;
    check_duration(duration_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration_ps = duration_s * 1e12;
    let gaps = Exp::new(src.pair_rate_hz * 1e-12).expect("positive rate");
    let sigma_delta = src.detuning_sigma_ghz();
    let sigma_eps = src.pump_sigma_ghz();

    let expected = src.pair_rate_hz * duration_s;
    let mut pairs = Vec::with_capacity((expected + 6.0 * expected.sqrt() + 16.0) as usize);
    let mut t = 0.0;
    loop {
        t += gaps.sample(&mut rng);
        if t > duration_ps {
            break;
        }
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        pairs.push(PairEvent {
            birth_ps: t,
            signal_detuning_ghz: sigma_delta * z1,
            pump_offset_ghz: sigma_eps * z2,
        });
    }
    Ok(pairs)
}

/// Like [`generate_pairs`], restricted to pairs whose signal detuning lies
/// in one of `bands` (GHz intervals). This is an exact thinning of the full
/// process: the retained pairs have the same distribution as the matching
/// subset of a full run.
pub fn generate_pairs_in_band(
    src: &SourceConfig,
    duration_s: f64,
    seed: u64,
    bands: &[(f64, f64)],
) -> Result<Vec<PairEvent>> {
    src.validate()?;
    check_duration(duration_s)?;
    let sigma_delta = src.detuning_sigma_ghz();
    let sigma_eps = src.pump_sigma_ghz();
    let duration_ps = duration_s * 1e12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pairs = Vec::new();
    for (lo, hi) in merge_intervals(bands) {
        let mass = normal_mass(lo / sigma_delta, hi / sigma_delta);
        if mass <= 0.0 {
            continue;
        }
        let gaps = Exp::new(src.pair_rate_hz * mass * 1e-12).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gaps.sample(&mut rng);
            if t > duration_ps {
                break;
            }
            let delta = sample_truncated_normal(&mut rng, sigma_delta, lo, hi, mass);
            let z: f64 = rng.sample(StandardNormal);
            pairs.push(PairEvent {
                birth_ps: t,
                signal_detuning_ghz: delta,
                pump_offset_ghz: sigma_eps * z,
            });
        }
    }
    pairs.sort_by(|x, y| x.birth_ps.total_cmp(&y.birth_ps));
    Ok(pairs)
}

fn merge_intervals(bands: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = bands
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .filter(|(a, b)| b > a)
        .collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (lo, hi) in sorted {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// Standard normal probability mass of `[a, b]`.
fn normal_mass(a: f64, b: f64) -> f64 {
    use libm::erfc;
    // erfc keeps precision in the upper tail.
    let upper_tail = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(b) - upper_tail(-a)
    }
}

fn sample_truncated_normal<R: Rng>(rng: &mut R, sigma: f64, lo: f64, hi: f64, mass: f64) -> f64 {
    if mass > 0.3 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = sigma * z;
            if x >= lo && x <= hi {
                return x;
            }
        }
    }
    // Uniform proposal scaled by the peak density inside the interval.
    let peak = if lo > 0.0 {
        lo
    } else if hi < 0.0 {
        hi
    } else {
        0.0
    };
    let two_var = 2.0 * sigma * sigma;
    loop {
        let x = rng.random_range(lo..=hi);
        let accept = (-(x * x - peak * peak) / two_var).exp();
        if rng.random::<f64>() < accept {
            return x;
        }
    }
}

/// What happened to one photon of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotonFate {
    /// Absorbed, or not registered by the detector.
    Lost,
    /// Routed to the frequency arm and rejected by the filter.
    Blocked,
    Detected(Channel),
    /// Would have been detected but falls outside `[0, duration]`.
    Clipped(Channel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// One stream per detector, indexed by [`Channel::id`].
    pub streams: [TagStream; 4],
    /// `[signal fate, idler fate]` per input pair.
    pub fates: Vec<[PhotonFate; 2]>,
    pub duration_ps: u64,
}

impl Detection {
    pub fn stream(&self, channel: Channel) -> &TagStream {
        &self.streams[channel.id() as usize]
    }
}

/// Runs every photon through splitter, filter, dispersion and detector, and
/// adds dark counts. Output streams are sorted.
pub fn detect(
    pairs: &[PairEvent],
    src: &SourceConfig,
    channel: &ChannelConfig,
    filter: &FilterSetting,
    duration_s: f64,
    seed: u64,
) -> Result<Detection> {
    src.validate()?;
    channel.validate()?;
    check_duration(duration_s)?;
    let duration_ps = seconds_to_ps(duration_s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let corr_sigma = sigma_from_fwhm(src.correlation_time_ps);
    let lambda = src.center_wavelength_nm;

    let mut times: [Vec<u64>; 4] = Default::default();
    let mut fates = Vec::with_capacity(pairs.len());

    for pair in pairs {
        let bob_offset = if corr_sigma > 0.0 {
            corr_sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        } + channel.residual.sample(&mut rng);

        let mut fate = [PhotonFate::Lost; 2];
        for (k, alice) in [true, false].into_iter().enumerate() {
            let party = channel.party(alice);
            let detuning = if alice {
                pair.signal_detuning_ghz
            } else {
                pair.idler_detuning_ghz()
            };
            let time_arm = rng.random::<f64>() < party.splitter_ratio;
            let det = party.detector(time_arm);
            if rng.random::<f64>() >= det.efficiency {
                continue;
            }
            if !time_arm {
                let band = if alice { filter.a } else { filter.b };
                if let Some(band) = band {
                    if rng.random::<f64>() >= band.transmission(detuning) {
                        fate[k] = PhotonFate::Blocked;
                        continue;
                    }
                }
            }
            let ch = match (alice, time_arm) {
                (true, true) => Channel::AT,
                (true, false) => Channel::AF,
                (false, true) => Channel::BT,
                (false, false) => Channel::BF,
            };
            let jitter_sigma = sigma_from_fwhm(det.jitter_fwhm_ps);
            let jitter = if jitter_sigma > 0.0 {
                jitter_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let mut t = pair.birth_ps + dispersion_delay(detuning, party.dispersion_ps_per_nm, lambda) + jitter;
            if !alice {
                t += bob_offset;
            }
            let t = t.round();
            if t < 0.0 || t > duration_ps as f64 {
                fate[k] = PhotonFate::Clipped(ch);
                continue;
            }
            times[ch.id() as usize].push(t as u64);
            fate[k] = PhotonFate::Detected(ch);
        }
        fates.push(fate);
    }

    for ch in Channel::ALL {
        let party = channel.party(matches!(ch, Channel::AT | Channel::AF));
        let det = party.detector(matches!(ch, Channel::AT | Channel::BT));
        add_dark_counts(&mut times[ch.id() as usize], det.dark_rate_hz, duration_ps, &mut rng);
    }

    let streams = Channel::ALL.map(|ch| {
        let mut ts = std::mem::take(&mut times[ch.id() as usize]);
        ts.sort_unstable();
        let tags = ts.into_iter().map(|t| TimeTag::new(ch, t)).collect();
        TagStream::new(tags, duration_ps).expect("sorted and clipped to duration")
    });
    Ok(Detection {
        streams,
        fates,
        duration_ps,
    })
}

fn add_dark_counts<R: Rng>(times: &mut Vec<u64>, rate_hz: f64, duration_ps: u64, rng: &mut R) {
    if rate_hz <= 0.0 {
        return;
    }
    let gaps = Exp::new(rate_hz * 1e-12).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > duration_ps as f64 {
            break;
        }
        times.push(t.round() as u64);
    }
}

/// Gaussian-approximation FWHM (ps) of the arrival-time difference between
/// Bob's and Alice's clicks on the chosen arms.
pub fn expected_correlation_fwhm_ps(src: &SourceConfig, channel: &ChannelConfig, time_arms: (bool, bool)) -> f64 {
    let k = -wavelength_offset_nm(1.0, src.center_wavelength_nm); // nm per GHz
    let (da, db) = (channel.a.dispersion_ps_per_nm, channel.b.dispersion_ps_per_nm);
    let ja = sigma_from_fwhm(channel.a.detector(time_arms.0).jitter_fwhm_ps);
    let jb = sigma_from_fwhm(channel.b.detector(time_arms.1).jitter_fwhm_ps);
    let sd = src.detuning_sigma_ghz();
    let se = src.pump_sigma_ghz();
    let sc = sigma_from_fwhm(src.correlation_time_ps);
    let var = (k * (da + db) * sd).powi(2)
        + (k * db * se).powi(2)
        + ja * ja
        + jb * jb
        + sc * sc
        + channel.residual.variance_ps2();
    FWHM_PER_SIGMA * var.sqrt()
}

/// Expected click rate (Hz) on a detector with both frequency arms
/// unfiltered.
pub fn expected_singles_rate(src: &SourceConfig, channel: &ChannelConfig, ch: Channel) -> f64 {
    let alice = matches!(ch, Channel::AT | Channel::AF);
    let time_arm = matches!(ch, Channel::AT | Channel::BT);
    let party = channel.party(alice);
    let det = party.detector(time_arm);
    let routing = if time_arm {
        party.splitter_ratio
    } else {
        1.0 - party.splitter_ratio
    };
    src.pair_rate_hz * det.efficiency * routing + det.dark_rate_hz
}
