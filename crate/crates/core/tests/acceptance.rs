//! Acceptance criteria 1-12. Runs without the libtest harness so every
//! criterion prints exactly one line; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use tfcert::certify::exact::{exact_probabilities, random_test_state};
use tfcert::certify::*;
use tfcert::coincidence::{build_jti, cross_correlogram, fwhm, match_pairs};
use tfcert::config::PipelineConfig;
use tfcert::matrix::{subspace, Basis, JointCountMatrix, ProbMatrix};
use tfcert::pipeline::{run_pipeline, simulate_run};
use tfcert::source::{FilterShape, SourceConfig};
use tfcert::spectral::{acquire_cross_basis, sweep_plan, AcquisitionOptions};
use tfcert::stats::{measurement_budget, poisson_bootstrap, Quantity};
use tfcert::tags::{Channel, FrameLayout, TimeTag};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_thresholds() -> Outcome {
    let b = b_k(&TargetState::maximally_entangled(23), 18).map_err(|e| e.to_string())?;
    let rounded = format!("{:.3}", b);
    let mut detail = vec![format!("B_18(d=23)={b:.6}")];
    let mut ok = (b - 18.0 / 23.0).abs() < 1e-15 && rounded == "0.783";
    for (f, d, want) in [(0.770, 31, 24), (0.821, 23, 19), (0.659, 31, 21), (0.770, 19, 15)] {
        let got = certified_dimension(f, &b_k_table(&TargetState::maximally_entangled(d)));
        ok &= got == want;
        detail.push(format!("F={f}@{d}->{got}"));
    }
    check(ok, detail.join(" "))
}

fn c2_steering_map() -> Outcome {
    let got: Vec<usize> = [2.7, 8.9, 2.4, 6.3].iter().map(|&x| schmidt_number_bound(x)).collect();
    check(got == vec![3, 9, 3, 7], format!("n_cert={got:?}"))
}

fn c3_fixpoint() -> Outcome {
    let mut worst = 0.0f64;
    let mut ok = true;
    for d in [2usize, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
        let c = certify_probs(&ProbMatrix::ideal(d), &ProbMatrix::ideal(d), &CertifyOptions::default())
            .map_err(|e| e.to_string())?;
        let dev = [
            (c.fidelity.f_tilde - 1.0).abs(),
            (c.eof.eof_lb - (d as f64).log2()).abs(),
            (c.steering.delta - d as f64).abs(),
        ];
        worst = dev.iter().copied().fold(worst, f64::max);
        ok &= dev.iter().all(|&x| x <= 1e-9) && c.fidelity.d_ent == d && c.steering.n_cert == d;
    }
    check(ok, format!("11 primes, max deviation {worst:.2e}"))
}

fn c4_bound_validity() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut n = 0;
    for d in [2usize, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + d as u64);
        let target = TargetState::maximally_entangled(d);
        for _ in 0..250 {
            let e = exact_probabilities(&random_test_state(d, &mut rng), d).map_err(|e| e.to_string())?;
            let bound = f1(&e.jti, &target).map_err(|e| e.to_string())?
                + f2_tilde(&e.jti, &e.jsi, GammaConvention::Standard).map_err(|e| e.to_string())?;
            worst = worst.max(bound - e.true_fidelity);
            n += 1;
        }
    }
    check(worst <= 1e-9, format!("{n} states, max(f1+f2-F)={worst:.3e}"))
}

fn c5_gamma_enumeration() -> Outcome {
    let mut tuples = 0;
    let mut mismatches = 0;
    for d in 2..=7usize {
        for m in 0..d {
            for mp in 0..d {
                for n in 0..d {
                    for np in 0..d {
                        // n' is the partner of n shifted by m' - m.
                        let holds = (mp + n) % d == (m + np) % d;
                        let want = if holds { 1.0 / d as f64 } else { 0.0 };
                        if gamma_tilde(m, mp, n, np, d, GammaConvention::Standard) != want {
                            mismatches += 1;
                        }
                        tuples += 1;
                    }
                }
            }
        }
    }
    // The O(d^3) sum against a direct O(d^4) sum over all tuples.
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for d in 2..=7usize {
        let rand_probs = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..d * d).map(|_| rng.random::<f64>()).collect();
            let s: f64 = v.iter().sum();
            ProbMatrix::new(d, d, v.iter().map(|x| x / s).collect()).unwrap()
        };
        let (jti, jsi) = (rand_probs(&mut rng), rand_probs(&mut rng));
        let mut direct = (0..d).map(|j| jsi.get(j, j)).sum::<f64>() - 1.0 / d as f64;
        for m in 0..d {
            for mp in 0..d {
                for n in 0..d {
                    for np in 0..d {
                        if m != mp && n != np && m != n && mp != np {
                            direct -= gamma_tilde(m, mp, n, np, d, GammaConvention::Standard)
                                * (jti.get(m, n) * jti.get(mp, np)).sqrt();
                        }
                    }
                }
            }
        }
        let fast = f2_tilde(&jti, &jsi, GammaConvention::Standard).map_err(|e| e.to_string())?;
        worst = worst.max((fast - direct).abs());
    }
    check(
        mismatches == 0 && worst < 1e-12,
        format!("{tuples} tuples, {mismatches} mismatches, sum deviation {worst:.1e}"),
    )
}

fn c6_budget() -> Outcome {
    let b = measurement_budget(31).map_err(|e| e.to_string())?;
    let got = (b.fst, b.fidelity_direct, b.two_bases, b.this_work);
    check(got == (984064, 30752, 1922, 962), format!("d=31 -> {got:?}"))
}

fn correlogram_fwhm(cfg: &PipelineConfig, n_pairs: f64, bin_ps: u64, range_ps: u64, seed: u64) -> Result<f64, String> {
    let seconds = n_pairs / cfg.source.pair_rate_hz;
    let (_, det) = simulate_run(cfg, seconds, seed).map_err(|e| e.to_string())?;
    let c = cross_correlogram(
        det.stream(Channel::AT).tags(),
        det.stream(Channel::BT).tags(),
        bin_ps,
        range_ps,
    )
    .map_err(|e| e.to_string())?;
    fwhm(&c).map_err(|e| e.to_string())
}

fn c7_dispersion() -> Outcome {
    let base_cfg = PipelineConfig::load(fixture("paper-source.cfg")).map_err(|e| e.to_string())?;
    // Route everything to the time arms at a low rate so the broadened peak
    // stands out above accidentals.
    let mut cfg = base_cfg.clone();
    cfg.source = SourceConfig {
        pair_rate_hz: 2e4,
        pump_linewidth_ghz: 0.01,
        ..base_cfg.source
    };
    for party in [&mut cfg.channel.a, &mut cfg.channel.b] {
        party.splitter_ratio = 1.0;
        party.time_detector.efficiency = 1.0;
    }
    let n = 1e6;
    let baseline = correlogram_fwhm(&cfg, n, 2, 1000, 71)?;

    let mut one = cfg.clone();
    one.channel.a.dispersion_ps_per_nm = 10_000.0;
    let broadened = correlogram_fwhm(&one, n, 100, 80_000, 72)?;

    let mut both = one.clone();
    both.channel.b.dispersion_ps_per_nm = -10_000.0;
    let cancelled = correlogram_fwhm(&both, n, 2, 1000, 73)?;

    let disp = PipelineConfig::load(fixture("paper-dispersed.cfg")).map_err(|e| e.to_string())?;
    let fitted = correlogram_fwhm(
        &disp,
        n,
        disp.correlate.bin_width_ps,
        disp.correlate.range_ps,
        disp.seed,
    )?;

    let ok = broadened >= 100.0 * baseline && cancelled <= 5.0 * baseline && (fitted - 128.7).abs() <= 0.1 * 128.7;
    check(
        ok,
        format!(
            "baseline {baseline:.1} ps, D_A only {broadened:.0} ps ({:.0}x), cancelled {cancelled:.1} ps ({:.2}x), \
             dispersed fixture {fitted:.1} ps",
            broadened / baseline,
            cancelled / baseline
        ),
    )
}

fn c8_single_setting() -> Outcome {
    let cfg = PipelineConfig::load(fixture("paper-source.cfg")).map_err(|e| e.to_string())?;
    let (_, det) = simulate_run(&cfg, 0.5, 81).map_err(|e| e.to_string())?;
    let pairs = match_pairs(det.stream(Channel::AT).tags(), det.stream(Channel::BT).tags(), 160);
    let frame = FrameLayout::new(cfg.jti.tau_ps, cfg.jti.n_bins).map_err(|e| e.to_string())?;
    let full = build_jti(&pairs, frame, 31, 0).map_err(|e| e.to_string())?.matrix;
    let small = build_jti(&pairs, frame, 7, 0).map_err(|e| e.to_string())?.matrix;
    let sub = subspace(&full, 7, 0).map_err(|e| e.to_string())?;
    check(
        small.counts() == sub.counts() && small.total() > 0,
        format!(
            "{} pairs, d=7 block {} counts, identical={}",
            pairs.len(),
            small.total(),
            small.counts() == sub.counts()
        ),
    )
}

fn c9_mub() -> Outcome {
    let cfg = PipelineConfig::load(fixture("paper-source.cfg")).map_err(|e| e.to_string())?;
    let plan = sweep_plan(7, cfg.jsi.filter_fwhm_ghz, None, FilterShape::Gaussian).map_err(|e| e.to_string())?;
    let frame = FrameLayout::new(cfg.jti.tau_ps, 7).map_err(|e| e.to_string())?;
    let (_, est) = acquire_cross_basis(
        &cfg.source,
        &cfg.channel,
        &plan,
        frame,
        0,
        3.0,
        91,
        &AcquisitionOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let min_col = est.column_totals.iter().min().copied().unwrap_or(0);
    check(
        est.avg_deviation < 0.01 && est.max_overlap_std > 0.0 && est.max_overlap_std.is_finite(),
        format!(
            "avg |p-1/7| {:.4}, max_overlap {:.4} +- {:.4}, min column {min_col}",
            est.avg_deviation, est.max_overlap, est.max_overlap_std
        ),
    )
}

fn noisy_counts(d: usize, per_entry_scale: f64, basis: Basis) -> JointCountMatrix {
    let p = ProbMatrix::ideal(d).mix(&ProbMatrix::uniform(d), 0.3).unwrap();
    let counts = p
        .values()
        .iter()
        .map(|x| (x * per_entry_scale).round() as u64)
        .collect();
    JointCountMatrix::new(d, d, counts, basis, basis).unwrap()
}

fn c10_bootstrap() -> Outcome {
    let d = 7;
    let jti = noisy_counts(d, 2e4, Basis::Time);
    let jsi = noisy_counts(d, 2e4, Basis::Frequency);
    let opts = CertifyOptions::default();
    let run = |a: &JointCountMatrix, b: &JointCountMatrix| {
        poisson_bootstrap(a, b, &[Quantity::FTilde], &opts, 1000, 101).map_err(|e| e.to_string())
    };
    let small = run(&jti, &jsi)?;
    let large = run(&jti.scaled(100), &jsi.scaled(100))?;
    let again = run(&jti, &jsi)?;
    let ratio = small[0].1.std / large[0].1.std;
    let same = serde_json::to_string(&small).unwrap() == serde_json::to_string(&again).unwrap();
    check(
        (8.0..=12.0).contains(&ratio) && same,
        format!(
            "std {:.3e} -> {:.3e} at 100x counts (ratio {ratio:.2}), reproducible={same}",
            small[0].1.std, large[0].1.std
        ),
    )
}

fn synthetic_streams(n: usize, seed: u64) -> (Vec<TimeTag>, Vec<TimeTag>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(4e5 * 1e-12).unwrap();
    let mut t = 1_000_000.0;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        t += gaps.sample(&mut rng);
        a.push(TimeTag::new(Channel::AT, t as u64));
        let jitter: f64 = rng.sample(StandardNormal);
        // Every third partner is an unrelated click.
        let tb = if rng.random::<f64>() < 1.0 / 3.0 {
            t + rng.random::<f64>() * 2.5e6
        } else {
            t + 13.4 * jitter
        };
        b.push(TimeTag::new(Channel::BT, tb as u64));
    }
    b.sort_by_key(|x| x.t);
    (a, b)
}

fn c11_performance() -> Outcome {
    let n = 10_000_000;
    let (a, b) = synthetic_streams(n, 111);
    let start = Instant::now();
    let pairs = match_pairs(&a, &b, 160);
    let t_match = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let c = cross_correlogram(&a, &b, 2, 1000).map_err(|e| e.to_string())?;
    let t_corr = start.elapsed().as_secs_f64();
    // Each tag is used at most once, so output size is bounded by the input.
    let bounded = pairs.len() <= n;
    check(
        t_match + t_corr < 5.0 && bounded && c.total() > 0,
        format!(
            "1e7 tags/channel: match_pairs {t_match:.2} s ({} pairs), cross_correlogram {t_corr:.2} s, total {:.2} s",
            pairs.len(),
            t_match + t_corr
        ),
    )
}

fn c12_end_to_end() -> Outcome {
    let cfg = PipelineConfig::load(fixture("paper-source.cfg")).map_err(|e| e.to_string())?;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let outcome = run_pipeline(&cfg, out.path()).map_err(|e| e.to_string())?;
    let r31 = outcome.report(31).ok_or("no d=31 report")?;
    let r23 = outcome.report(23).ok_or("no d=23 report")?;
    check(
        r31.d_ent >= 20 && r31.eof_lb >= 2.5 && r23.n_cert >= 7,
        format!(
            "d=31: F~ {:.3}, d_ent {}, eof_lb {:.2} ebits; d=23: n_cert {}",
            r31.f_tilde, r31.d_ent, r31.eof_lb, r23.n_cert
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("threshold arithmetic", c1_thresholds),
        ("steering mapping", c2_steering_map),
        ("perfect-state fixpoint", c3_fixpoint),
        ("bound validity", c4_bound_validity),
        ("gamma enumeration", c5_gamma_enumeration),
        ("measurement budgets", c6_budget),
        ("dispersion cancellation", c7_dispersion),
        ("single-setting JTI", c8_single_setting),
        ("MUB check", c9_mub),
        ("bootstrap scaling", c10_bootstrap),
        ("performance", c11_performance),
        ("end-to-end fixture", c12_end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name} [{secs:.1} s]: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
