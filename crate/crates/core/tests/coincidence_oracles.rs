use proptest::prelude::*;

use tfcert::coincidence::*;
use tfcert::config::PipelineConfig;
use tfcert::matrix::subspace;
use tfcert::pipeline::simulate_run;
use tfcert::source::{expected_correlation_fwhm_ps, sigma_from_fwhm, Detection};
use tfcert::tags::{Channel, FrameLayout, TimeTag};

fn source_config() -> PipelineConfig {
    PipelineConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/paper-source.cfg")).unwrap()
}

fn time_pairs(det: &Detection) -> Vec<CoincidencePair> {
    match_pairs(det.stream(Channel::AT).tags(), det.stream(Channel::BT).tags(), 160)
}

/// Probability that a Gaussian delay of width `sigma` moves a uniformly
/// placed click into another bin of width `tau`: `E[min(|x|, tau)] / tau`.
fn expected_leakage(sigma: f64, tau: f64) -> f64 {
    let n = 200_000;
    let h = 12.0 * sigma / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let x = (k as f64 + 0.5) * h;
        let pdf = 2.0 * (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        acc += pdf * x.min(tau) * h;
    }
    acc / tau
}

#[test]
fn bin_leakage_follows_gaussian_overlap() {
    let cfg = source_config();
    let (_, det) = simulate_run(&cfg, 1.0, 3).unwrap();
    let pairs = time_pairs(&det);
    let sigma = sigma_from_fwhm(expected_correlation_fwhm_ps(&cfg.source, &cfg.channel, (true, true)));
    for tau in [32u64, 250] {
        let n_bins = 64;
        let build = build_jti(&pairs, FrameLayout::new(tau, n_bins).unwrap(), n_bins, 0).unwrap();
        let n = pairs.len() as f64;
        let leak = 1.0 - build.matrix.diagonal_total() as f64 / n;
        let want = expected_leakage(sigma, tau as f64);
        let tol = 5.0 * (want * (1.0 - want) / n).sqrt() + 2e-3;
        assert!(
            (leak - want).abs() < tol,
            "tau={tau}: measured {leak:.4}, expected {want:.4}"
        );
        if tau == 250 {
            assert!(leak < 0.10);
        }
    }
}

#[test]
fn diagonal_is_uniform_over_bins() {
    let cfg = source_config();
    let (_, det) = simulate_run(&cfg, 1.0, 4).unwrap();
    let n_bins = 64;
    let m = build_jti(&time_pairs(&det), FrameLayout::new(250, n_bins).unwrap(), n_bins, 0)
        .unwrap()
        .matrix;
    let diag: Vec<f64> = (0..n_bins).map(|i| m.get(i, i) as f64).collect();
    let mean = diag.iter().sum::<f64>() / n_bins as f64;
    let chi2: f64 = diag.iter().map(|c| (c - mean).powi(2) / mean).sum();
    let dof = (n_bins - 1) as f64;
    assert!(chi2 < dof + 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2:.1} over {dof} dof");
}

#[test]
fn correlogram_fwhm_matches_timing_model() {
    let mut cfg = source_config();
    for p in [&mut cfg.channel.a, &mut cfg.channel.b] {
        p.splitter_ratio = 1.0;
        p.time_detector.efficiency = 1.0;
    }
    cfg.source.pair_rate_hz = 2e4;
    let want = expected_correlation_fwhm_ps(&cfg.source, &cfg.channel, (true, true));
    let (_, det) = simulate_run(&cfg, 1e6 / cfg.source.pair_rate_hz, 5).unwrap();
    for w in [1, 2, 3] {
        let c = cross_correlogram(det.stream(Channel::AT).tags(), det.stream(Channel::BT).tags(), w, 1000).unwrap();
        let got = fwhm(&c).unwrap();
        assert!((got / want - 1.0).abs() < 0.05, "w={w}: {got:.2} vs {want:.2}");
    }
}

#[test]
fn smaller_blocks_are_subspaces_of_larger_ones() {
    let cfg = source_config();
    let (_, det) = simulate_run(&cfg, 0.3, 6).unwrap();
    let pairs = time_pairs(&det);
    let frame = FrameLayout::new(250, 256).unwrap();
    let full = build_jti(&pairs, frame, 31, 0).unwrap().matrix;
    for (d, offset) in [(2, 0), (7, 0), (7, 12), (13, 18), (31, 0)] {
        let direct = build_jti(&pairs, frame, d, offset).unwrap().matrix;
        assert_eq!(
            direct.counts(),
            subspace(&full, d, offset).unwrap().counts(),
            "d={d} offset={offset}"
        );
    }
}

fn stream(ch: Channel, mut ts: Vec<u64>) -> Vec<TimeTag> {
    ts.sort_unstable();
    ts.into_iter().map(|t| TimeTag::new(ch, t)).collect()
}

/// Every pair counted directly with round-half-away-from-zero binning.
fn brute_correlogram(a: &[TimeTag], b: &[TimeTag], w: u64, range: u64) -> Vec<u64> {
    let half = (range / w) as i64;
    let mut counts = vec![0u64; (2 * half + 1) as usize];
    for x in a {
        for y in b {
            let dt = y.t as f64 - x.t as f64;
            let k = (dt.abs() / w as f64 + 0.5).floor() * dt.signum();
            let k = k as i64;
            if k.abs() <= half {
                counts[(k + half) as usize] += 1;
            }
        }
    }
    counts
}

proptest! {
    #[test]
    fn correlogram_matches_brute_force(
        a in prop::collection::vec(0u64..4000, 0..60),
        b in prop::collection::vec(0u64..4000, 0..60),
        w in 1u64..9,
        range in 0u64..400,
    ) {
        let (a, b) = (stream(Channel::AT, a), stream(Channel::BT, b));
        let c = cross_correlogram(&a, &b, w, range).unwrap();
        prop_assert_eq!(&c.counts, &brute_correlogram(&a, &b, w, range));
        prop_assert_eq!(&cross_correlogram_par(&a, &b, w, range).unwrap(), &c);
    }

    #[test]
    fn swapping_streams_mirrors_the_correlogram(
        a in prop::collection::vec(0u64..4000, 0..60),
        b in prop::collection::vec(0u64..4000, 0..60),
        w in 1u64..9,
        range in 0u64..400,
    ) {
        let (a, b) = (stream(Channel::AT, a), stream(Channel::BT, b));
        let ab = cross_correlogram(&a, &b, w, range).unwrap();
        let ba = cross_correlogram(&b, &a, w, range).unwrap();
        prop_assert_eq!(ab.mirrored(), ba);
    }

    #[test]
    fn matches_are_disjoint_and_in_window(
        a in prop::collection::vec(0u64..20_000, 0..80),
        b in prop::collection::vec(0u64..20_000, 0..80),
        window in 0u64..300,
    ) {
        let (a, b) = (stream(Channel::AT, a), stream(Channel::BT, b));
        let pairs = match_pairs(&a, &b, window);
        prop_assert!(pairs.len() <= a.len().min(b.len()));
        for p in &pairs {
            prop_assert!(p.delay_ps().unsigned_abs() <= window);
        }
        // The sweep moves forward in both streams, so a pair never reuses a
        // tag and pairs come out ordered.
        for w in pairs.windows(2) {
            prop_assert!(w[0].t_b <= w[1].t_b);
            prop_assert!(w[0].t_a <= w[1].t_a);
        }
    }

    #[test]
    fn isolated_partners_are_always_found(
        starts in prop::collection::btree_set(0u64..1_000_000, 1..50),
        jitter in prop::collection::vec(-40i64..=40, 50),
    ) {
        // Pairs 1000 ps apart at least, partner within 40 ps: all must match.
        let births: Vec<u64> = starts.iter().map(|s| 1000 + s * 1000).collect();
        let a = stream(Channel::AT, births.clone());
        let b = stream(Channel::BT, births.iter().zip(&jitter).map(|(t, j)| (*t as i64 + j) as u64).collect());
        let pairs = match_pairs(&a, &b, 100);
        prop_assert_eq!(pairs.len(), births.len());
    }
}
