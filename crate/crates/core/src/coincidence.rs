//! Streaming coincidence analysis over sorted tag streams.

use rayon::prelude::*;
use serde::Serialize;

use crate::matrix::{Basis, Binning, JointCountMatrix};
use crate::tags::{FrameLayout, TimeTag};
use crate::{Error, Result};

/// Histogram of `t_b - t_a` over all tag pairs within range. Bin `k` is
/// centered on `k * bin_width_ps`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Correlogram {
    pub bin_width_ps: u64,
    /// Bin centers, ascending, symmetric about zero.
    pub offsets_ps: Vec<i64>,
    pub counts: Vec<u64>,
}

impl Correlogram {
    fn empty(bin_width_ps: u64, half_bins: i64) -> Self {
        let w = bin_width_ps as i64;
        Correlogram {
            bin_width_ps,
            offsets_ps: (-half_bins..=half_bins).map(|k| k * w).collect(),
            counts: vec![0; (2 * half_bins + 1) as usize],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Same histogram with time reversed (`t_a - t_b`).
    pub fn mirrored(&self) -> Correlogram {
        Correlogram {
            bin_width_ps: self.bin_width_ps,
            offsets_ps: self.offsets_ps.iter().rev().map(|o| -o).collect(),
            counts: self.counts.iter().rev().copied().collect(),
        }
    }

    /// Integer offsets that fall in the bin centered on `offset_ps`. With an
    /// even width the zero bin holds one offset fewer than the others.
    pub fn bin_population(&self, offset_ps: i64) -> u64 {
        let w = self.bin_width_ps;
        if offset_ps == 0 && w.is_multiple_of(2) {
            w - 1
        } else {
            w
        }
    }

    /// Mean of the integer offsets in the bin centered on `offset_ps`. Even
    /// widths put half a picosecond more of every non-zero bin on the side
    /// facing zero.
    pub fn bin_centroid_ps(&self, offset_ps: i64) -> f64 {
        let shift = if self.bin_width_ps.is_multiple_of(2) { 0.5 } else { 0.0 };
        offset_ps as f64 - shift * offset_ps.signum() as f64
    }

    /// Counts rescaled to a full bin width, so bins of unequal population
    /// compare fairly.
    pub fn density(&self) -> Vec<f64> {
        let w = self.bin_width_ps as f64;
        self.offsets_ps
            .iter()
            .zip(&self.counts)
            .map(|(&o, &c)| c as f64 * w / self.bin_population(o) as f64)
            .collect()
    }

    /// Bin center with the largest density (first on ties).
    pub fn peak_offset_ps(&self) -> Option<i64> {
        let idx = peak_index(&self.density())?;
        Some(self.offsets_ps[idx])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset_ps,count,density\n");
        for ((o, c), y) in self.offsets_ps.iter().zip(&self.counts).zip(self.density()) {
            out.push_str(&format!("{o},{c},{y}\n"));
        }
        out
    }
}

fn peak_index(y: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in y.iter().enumerate() {
        match best {
            Some(b) if y[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Symmetric rounding: |dt| < w/2 lands in bin 0, and bin(-dt) = -bin(dt).
#[inline]
fn bin_index(dt: i64, w: i64) -> i64 {
    let k = (2 * dt.abs() + w) / (2 * w);
    if dt < 0 {
        -k
    } else {
        k
    }
}

fn sweep(a: &[TimeTag], b: &[TimeTag], w: i64, half_bins: i64, counts: &mut [u64]) {
    // Any |dt| beyond this maps outside bin +-half_bins.
    let reach = (half_bins + 1) * w;
    let mut lo = 0usize;
    for tag_a in a {
        let ta = tag_a.t as i64;
        while lo < b.len() && (b[lo].t as i64) < ta - reach {
            lo += 1;
        }
        for tag_b in &b[lo..] {
            let dt = tag_b.t as i64 - ta;
            if dt > reach {
                break;
            }
            let k = bin_index(dt, w);
            if k.abs() <= half_bins {
                counts[(k + half_bins) as usize] += 1;
            }
        }
    }
}

/// Two-pointer correlogram of `t_b - t_a` within `±range_ps`.
pub fn cross_correlogram(a: &[TimeTag], b: &[TimeTag], bin_width_ps: u64, range_ps: u64) -> Result<Correlogram> {
    let (w, half_bins) = correlogram_shape(bin_width_ps, range_ps)?;
    let mut hist = Correlogram::empty(bin_width_ps, half_bins);
    sweep(a, b, w, half_bins, &mut hist.counts);
    Ok(hist)
}

/// Parallel variant: splits `a` into chunks and sums the partial histograms.
/// Bit-identical to [`cross_correlogram`].
pub fn cross_correlogram_par(a: &[TimeTag], b: &[TimeTag], bin_width_ps: u64, range_ps: u64) -> Result<Correlogram> {
    let (w, half_bins) = correlogram_shape(bin_width_ps, range_ps)?;
    let mut hist = Correlogram::empty(bin_width_ps, half_bins);
    let n_bins = hist.counts.len();
    let chunk = (a.len() / rayon::current_num_threads().max(1) / 4).max(1 << 16);
    let partial = a
        .par_chunks(chunk)
        .map(|part| {
            let mut counts = vec![0u64; n_bins];
            sweep(part, b, w, half_bins, &mut counts);
            counts
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
                x
            },
        );
    hist.counts = partial;
    Ok(hist)
}

fn correlogram_shape(bin_width_ps: u64, range_ps: u64) -> Result<(i64, i64)> {
    if bin_width_ps == 0 {
        return Err(Error::InvalidParameter("correlogram bin width must be positive".into()));
    }
    Ok((bin_width_ps as i64, (range_ps / bin_width_ps) as i64))
}

/// Full width at half maximum of the correlation peak, in ps.
///
/// Works on [`Correlogram::density`]. Baseline is the median of the outer
/// 20% of bins (10% per side, at least one bin each); the half level is
/// `baseline + (peak - baseline) / 2` and the crossings are linearly
/// interpolated between bin centroids.
pub fn fwhm(c: &Correlogram) -> Result<f64> {
    let n = c.counts.len();
    if n < 3 {
        return Err(Error::NoPeak);
    }
    let dens = c.density();
    let edge = (n / 10).max(1);
    let mut outer: Vec<f64> = dens[..edge].iter().chain(&dens[n - edge..]).copied().collect();
    outer.sort_unstable_by(f64::total_cmp);
    let m = outer.len();
    let baseline = if m % 2 == 1 {
        outer[m / 2]
    } else {
        (outer[m / 2 - 1] + outer[m / 2]) / 2.0
    };

    let peak_idx = peak_index(&dens).expect("non-empty");
    let peak = dens[peak_idx];
    if peak <= baseline {
        return Err(Error::NoPeak);
    }
    let half = baseline + (peak - baseline) / 2.0;
    let x = |i: usize| c.bin_centroid_ps(c.offsets_ps[i]);
    let y = |i: usize| dens[i];

    let mut left = None;
    for i in (0..peak_idx).rev() {
        if y(i) < half {
            let (x0, y0, x1, y1) = (x(i), y(i), x(i + 1), y(i + 1));
            left = Some(x0 + (half - y0) * (x1 - x0) / (y1 - y0));
            break;
        }
    }
    let mut right = None;
    for i in peak_idx + 1..n {
        if y(i) < half {
            let (x0, y0, x1, y1) = (x(i - 1), y(i - 1), x(i), y(i));
            right = Some(x0 + (y0 - half) * (x1 - x0) / (y0 - y1));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::PeakUnresolved),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoincidencePair {
    pub t_a: u64,
    pub t_b: u64,
}

impl CoincidencePair {
    pub fn delay_ps(&self) -> i64 {
        self.t_b as i64 - self.t_a as i64
    }
}

/// Greedy nearest-neighbour matching in one forward sweep.
///
/// Each `a` tag takes the closest unused `b` tag within `window_ps`
/// (ties go to the earlier `b`). `b` tags passed over by a match are not
/// revisited, so every tag is used at most once.
pub fn match_pairs(a: &[TimeTag], b: &[TimeTag], window_ps: u64) -> Vec<CoincidencePair> {
    let mut out = Vec::new();
    let window = window_ps as i64;
    let mut next = 0usize;
    for tag_a in a {
        let ta = tag_a.t as i64;
        while next < b.len() && (b[next].t as i64) < ta - window {
            next += 1;
        }
        let mut best: Option<(usize, i64)> = None;
        for (j, tag_b) in b.iter().enumerate().skip(next) {
            let dt = tag_b.t as i64 - ta;
            if dt > window {
                break;
            }
            match best {
                Some((_, bd)) if bd <= dt.abs() => {}
                _ => best = Some((j, dt.abs())),
            }
        }
        if let Some((j, _)) = best {
            out.push(CoincidencePair {
                t_a: tag_a.t,
                t_b: b[j].t,
            });
            next = j + 1;
        }
    }
    out
}

/// A discretized JTI plus the bookkeeping of pairs that did not land in it.
#[derive(Debug, Clone, PartialEq)]
pub struct JtiBuild {
    pub matrix: JointCountMatrix,
    /// Pairs whose two clicks fall in different frames.
    pub frame_spillover: u64,
    /// Same-frame pairs with at least one bin outside the selected block.
    pub outside_block: u64,
}

/// Bins matched pairs into a `d`x`d` block of the frame's time bins,
/// starting at bin `offset`.
pub fn build_jti(pairs: &[CoincidencePair], frame: FrameLayout, d: usize, offset: usize) -> Result<JtiBuild> {
    if d == 0 || offset + d > frame.n_bins {
        return Err(Error::OutOfRange {
            d,
            offset,
            d_a: frame.n_bins,
            d_b: frame.n_bins,
        });
    }
    let mut matrix = JointCountMatrix::zeros(d, d, Basis::Time, Basis::Time).with_binning(Binning {
        tau_ps: Some(frame.tau_ps),
        n_bins: Some(frame.n_bins),
        step_ghz: None,
    });
    let mut frame_spillover = 0;
    let mut outside_block = 0;
    for pair in pairs {
        let (fa, ba) = frame.locate(pair.t_a);
        let (fb, bb) = frame.locate(pair.t_b);
        if fa != fb {
            frame_spillover += 1;
            continue;
        }
        if ba < offset || bb < offset || ba >= offset + d || bb >= offset + d {
            outside_block += 1;
            continue;
        }
        matrix.increment(ba - offset, bb - offset);
    }
    Ok(JtiBuild {
        matrix,
        frame_spillover,
        outside_block,
    })
}

/// Nearest-neighbour leakage: sum over `|i - j| = 1` divided by the trace.
pub fn crosstalk_metric(m: &JointCountMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("crosstalk needs a square matrix".into()));
    }
    let diag = m.diagonal_total();
    if diag == 0 {
        return Err(Error::ZeroDiagonal);
    }
    let d = m.d_a();
    let neighbours: u64 = (0..d.saturating_sub(1))
        .map(|i| m.get(i, i + 1) + m.get(i + 1, i))
        .sum();
    Ok(neighbours as f64 / diag as f64)
}
