use std::fs;
use std::path::Path;

use tfcert::config::PipelineConfig;
use tfcert::pipeline::run_pipeline;
use tfcert::report::{parse_report, to_canonical_json};
use tfcert::Error;

const SMALL: &str = r#"
seed = 77

[source]
pair_rate_hz = 4.0e5
pm_bandwidth_ghz = 250.0
pump_linewidth_ghz = 0.01

[channel.a]
time_detector = { efficiency = 0.6, jitter_fwhm_ps = 22.34, dark_rate_hz = 100.0 }
freq_detector = { efficiency = 0.9, jitter_fwhm_ps = 129.5, dark_rate_hz = 100.0 }

[channel.b]
time_detector = { efficiency = 0.6, jitter_fwhm_ps = 22.34, dark_rate_hz = 100.0 }
freq_detector = { efficiency = 0.9, jitter_fwhm_ps = 129.5, dark_rate_hz = 100.0 }

[jti]
acquisition_seconds = 0.3
tau_ps = 250
n_bins = 16

[jsi]
filter_fwhm_ghz = 5.9
shape = "gaussian"
seconds_per_setting = 0.3

[mub]
d = 7
seconds_per_setting = 0.3

[certify]
d = 7
bootstrap_resamples = 50
"#;

fn small() -> PipelineConfig {
    PipelineConfig::from_toml(SMALL).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn same_config_gives_identical_artifacts() {
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&small(), x.path()).unwrap();
    run_pipeline(&small(), y.path()).unwrap();
    for name in [
        "report.json",
        "reports/d7.json",
        "reports/d2.json",
        "jti.csv",
        "jsi.csv",
        "correlogram.csv",
        "fidelity_vs_d.csv",
        "steering_vs_d.csv",
        "mub.json",
        "config.json",
    ] {
        assert_eq!(read(x.path(), name), read(y.path(), name), "{name} differs");
    }
}

#[test]
fn seed_changes_the_result() {
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_pipeline(&small(), x.path()).unwrap();
    let mut cfg = small();
    cfg.seed += 1;
    let b = run_pipeline(&cfg, y.path()).unwrap();
    assert_ne!(a.jti_full, b.jti_full);
    assert_ne!(a.report(7).unwrap().config_digest, b.report(7).unwrap().config_digest);
}

#[test]
fn reports_cover_every_curve_dimension() {
    let out = tempfile::tempdir().unwrap();
    let outcome = run_pipeline(&small(), out.path()).unwrap();
    for d in [2, 3, 5, 7] {
        let text = fs::read_to_string(out.path().join(format!("reports/d{d}.json"))).unwrap();
        let r = parse_report(&text).unwrap();
        assert_eq!(r.d, d);
        assert_eq!(text, to_canonical_json(outcome.report(d).unwrap()).unwrap());
        assert!(r.f_tilde_std.is_some());
    }
    let head = parse_report(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(head.d, 7);
    // The cross-basis check ran at the headline dimension.
    assert!(!head.overlap_idealized);
}

#[test]
fn saved_tags_reproduce_the_time_basis() {
    let first = tempfile::tempdir().unwrap();
    let a = run_pipeline(&small(), first.path()).unwrap();
    let mut cfg = small();
    cfg.run.tags_dir = Some(first.path().join("tags"));
    let second = tempfile::tempdir().unwrap();
    let b = run_pipeline(&cfg, second.path()).unwrap();
    assert_eq!(a.jti_full.counts(), b.jti_full.counts());
    assert_eq!(a.correlogram, b.correlogram);
    let (ra, rb) = (a.report(7).unwrap(), b.report(7).unwrap());
    assert_eq!(ra.f_tilde, rb.f_tilde);
    assert_eq!(ra.n_cert, rb.n_cert);
}

#[test]
fn missing_tag_file_names_the_stage() {
    let tags = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.run.tags_dir = Some(tags.path().to_path_buf());
    let out = tempfile::tempdir().unwrap();
    let err = run_pipeline(&cfg, out.path()).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, "simulate"),
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().contains("A_T.qtag"), "{err}");
}

#[test]
fn invalid_config_fails_before_writing() {
    let mut cfg = small();
    cfg.certify.d = 9;
    let out = tempfile::tempdir().unwrap();
    assert!(run_pipeline(&cfg, out.path()).is_err());
    assert!(!out.path().join("report.json").exists());
}
