//! End-to-end run: simulate, correlate, JTI, JSI, cross-basis check and
//! certification, writing every intermediate artifact to disk.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::certify::{certify, schmidt_decompose, CertifyOptions};
use crate::coincidence::{build_jti, cross_correlogram_par, fwhm, match_pairs, Correlogram};
use crate::config::PipelineConfig;
use crate::matrix::{subspace, JointCountMatrix};
use crate::report::{emit_report, sha256_hex, to_canonical_json, CertificationReport, ReportContext};
use crate::source::{
    detect, expected_correlation_fwhm_ps, generate_pairs, Detection, FilterSetting, PairEvent, PhotonFate,
};
use crate::spectral::{acquire_cross_basis, acquire_jsi, sweep_plan, AcquisitionOptions, OverlapEstimate};
use crate::stats::{poisson_bootstrap, Quantity};
use crate::tagio::{read_tag_file, write_tag_file};
use crate::tags::{Channel, FrameLayout, TagStream};
use crate::{Error, Result};

/// Independent per-stage seed.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STAGE_SIMULATE: u64 = 1;
const STAGE_JSI: u64 = 2;
const STAGE_MUB: u64 = 3;
const STAGE_BOOTSTRAP: u64 = 4;

pub fn config_digest(cfg: &PipelineConfig) -> Result<String> {
    Ok(sha256_hex(to_canonical_json(cfg)?.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// One report per certified dimension, ascending in `d`.
    pub reports: Vec<CertificationReport>,
    pub correlogram: Correlogram,
    pub correlogram_fwhm_ps: f64,
    pub jti_full: JointCountMatrix,
    pub jsi_full: JointCountMatrix,
    pub mub: Option<OverlapEstimate>,
    pub artifacts: Vec<PathBuf>,
}

impl PipelineOutcome {
    pub fn report(&self, d: usize) -> Option<&CertificationReport> {
        self.reports.iter().find(|r| r.d == d)
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, body)?;
        self.written.push(p);
        Ok(())
    }

    fn record(&mut self, p: PathBuf) {
        self.written.push(p);
    }
}

fn fate_label(f: PhotonFate) -> String {
    match f {
        PhotonFate::Lost => "lost".into(),
        PhotonFate::Blocked => "blocked".into(),
        PhotonFate::Detected(ch) => ch.label().into(),
        PhotonFate::Clipped(ch) => format!("clipped-{}", ch.label()),
    }
}

/// One line per emitted pair with its fate at Alice and Bob.
pub fn write_truth_csv(pairs: &[PairEvent], det: &Detection, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "birth_ps,signal_detuning_ghz,pump_offset_ghz,fate_a,fate_b")?;
    for (p, fates) in pairs.iter().zip(&det.fates) {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.birth_ps,
            p.signal_detuning_ghz,
            p.pump_offset_ghz,
            fate_label(fates[0]),
            fate_label(fates[1])
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Simulated time-basis run: unfiltered detection of `seconds` of pairs.
pub fn simulate_run(cfg: &PipelineConfig, seconds: f64, seed: u64) -> Result<(Vec<PairEvent>, Detection)> {
    let pairs = generate_pairs(&cfg.source, seconds, seed)?;
    let det = detect(
        &pairs,
        &cfg.source,
        &cfg.channel,
        &FilterSetting::default(),
        seconds,
        seed,
    )?;
    Ok((pairs, det))
}

pub fn tag_file_name(ch: Channel) -> String {
    format!("{}.qtag", ch.label())
}

fn load_time_tags(dir: &Path) -> Result<(TagStream, TagStream)> {
    let read = |ch: Channel| -> Result<TagStream> {
        let p = dir.join(tag_file_name(ch));
        if !p.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("missing tag file {}", p.display()),
            )));
        }
        Ok(read_tag_file(&p)?.channel(ch))
    };
    Ok((read(Channel::AT)?, read(Channel::BT)?))
}

fn csv_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn discarded(full: &JointCountMatrix, sub: &JointCountMatrix) -> f64 {
    let total = full.total();
    if total == 0 {
        0.0
    } else {
        1.0 - sub.total() as f64 / total as f64
    }
}

pub fn run_pipeline(cfg: &PipelineConfig, out_dir: impl AsRef<Path>) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let dir = out_dir.as_ref().to_path_buf();
    fs::create_dir_all(&dir)?;
    let mut art = Artifacts {
        dir,
        written: Vec::new(),
    };
    let digest = config_digest(cfg)?;
    art.text("config.json", &to_canonical_json(cfg)?)?;

    // simulate (or load)
    let (at, bt) = match &cfg.run.tags_dir {
        Some(tags) => load_time_tags(tags).map_err(|e| e.at_stage("simulate"))?,
        None => {
            let stage = |e: Error| e.at_stage("simulate");
            let seed = derive_seed(cfg.seed, STAGE_SIMULATE);
            let (pairs, det) = simulate_run(cfg, cfg.jti.acquisition_seconds, seed).map_err(stage)?;
            fs::create_dir_all(art.path("tags")).map_err(|e| stage(e.into()))?;
            for ch in Channel::ALL {
                let p = art.path("tags").join(tag_file_name(ch));
                write_tag_file(det.stream(ch), &p).map_err(stage)?;
                art.record(p);
            }
            if cfg.run.write_truth {
                let p = art.path("truth.csv");
                write_truth_csv(&pairs, &det, &p).map_err(stage)?;
                art.record(p);
            }
            (det.stream(Channel::AT).clone(), det.stream(Channel::BT).clone())
        }
    };

    // correlate
    let (correlogram, width) = (|| -> Result<_> {
        let c = cross_correlogram_par(at.tags(), bt.tags(), cfg.correlate.bin_width_ps, cfg.correlate.range_ps)?;
        let w = fwhm(&c)?;
        art.text("correlogram.csv", &c.to_csv())?;
        let summary = serde_json::json!({
            "fwhm_ps": w,
            "peak_offset_ps": c.peak_offset_ps(),
            "coincidences_in_range": c.total(),
        });
        art.text("correlate.json", &to_canonical_json(&summary)?)?;
        Ok((c, w))
    })()
    .map_err(|e| e.at_stage("correlate"))?;

    // jti
    let frame = FrameLayout::new(cfg.jti.tau_ps, cfg.jti.n_bins).map_err(|e| e.at_stage("jti"))?;
    let jti_full = (|| -> Result<_> {
        let window = cfg.jti.window_ps.unwrap_or_else(|| {
            (5.0 * expected_correlation_fwhm_ps(&cfg.source, &cfg.channel, (true, true))).ceil() as u64
        });
        let pairs = match_pairs(at.tags(), bt.tags(), window);
        let built = build_jti(&pairs, frame, cfg.jti.n_bins, 0)?;
        let m = built.matrix.with_seconds(cfg.jti.acquisition_seconds);
        art.text("jti_full.csv", &m.to_csv())?;
        Ok(m)
    })()
    .map_err(|e| e.at_stage("jti"))?;

    // jsi
    let d_sweep = cfg.sweep_d();
    let jsi_full = (|| -> Result<_> {
        let plan = sweep_plan(d_sweep, cfg.jsi.filter_fwhm_ghz, cfg.jsi.step_ghz, cfg.jsi.shape)?
            .check_coverage(cfg.source.pm_bandwidth_ghz);
        let opts = AcquisitionOptions {
            window_ps: cfg.jsi.window_ps,
        };
        let m = acquire_jsi(
            &cfg.source,
            &cfg.channel,
            &plan,
            cfg.jsi.seconds_per_setting,
            derive_seed(cfg.seed, STAGE_JSI),
            &opts,
        )?;
        art.text("jsi_full.csv", &m.to_csv())?;
        art.text("sweep_plan.json", &to_canonical_json(&plan)?)?;
        Ok(m)
    })()
    .map_err(|e| e.at_stage("jsi"))?;

    // mub-check
    let mub = match &cfg.mub {
        None => None,
        Some(mc) => Some(
            (|| -> Result<_> {
                let plan = sweep_plan(mc.d, cfg.jsi.filter_fwhm_ghz, cfg.jsi.step_ghz, cfg.jsi.shape)?;
                let opts = AcquisitionOptions {
                    window_ps: cfg.jsi.window_ps,
                };
                let (counts, est) = acquire_cross_basis(
                    &cfg.source,
                    &cfg.channel,
                    &plan,
                    frame,
                    mc.bin_offset,
                    mc.seconds_per_setting,
                    derive_seed(cfg.seed, STAGE_MUB),
                    &opts,
                )?;
                art.text("cross_basis.csv", &counts.to_csv())?;
                art.text("mub.json", &to_canonical_json(&est)?)?;
                Ok(est)
            })()
            .map_err(|e| e.at_stage("mub-check"))?,
        ),
    };

    // certify
    let reports = (|| -> Result<_> {
        fs::create_dir_all(art.path("reports"))?;
        let mut fid = String::from("d,f1,f2_tilde,f_tilde,f_tilde_std,d_ent,eof_lb,eof_lb_std\n");
        let mut steer = String::from("d,s,sr_lb,sr_lb_std,delta,delta_std,n_cert\n");
        let mut reports = Vec::new();
        for d in cfg.certify.dimensions() {
            let jti = subspace(&jti_full, d, cfg.jti.offset)?;
            let jsi = subspace(&jsi_full, d, (d_sweep - d) / 2)?;
            let measured = mub.as_ref().filter(|m| m.d == d);
            let opts = CertifyOptions {
                target: None,
                allow_nonprime: cfg.certify.allow_nonprime,
                gamma: cfg.certify.gamma,
                max_overlap: measured.map(|m| m.max_overlap),
            };
            let cert = certify(&jti, &jsi, &opts)?;
            let boot = if cfg.certify.bootstrap_resamples >= 2 {
                let seed = derive_seed(cfg.seed, STAGE_BOOTSTRAP).wrapping_add(d as u64);
                Some(poisson_bootstrap(
                    &jti,
                    &jsi,
                    &Quantity::ALL,
                    &opts,
                    cfg.certify.bootstrap_resamples,
                    seed,
                )?)
            } else {
                None
            };
            let ctx = ReportContext {
                config_digest: digest.clone(),
                seed: cfg.seed,
                gamma: cfg.certify.gamma,
                discarded_fraction_jti: discarded(&jti_full, &jti),
                discarded_fraction_jsi: discarded(&jsi_full, &jsi),
                max_overlap_std: measured.map(|m| m.max_overlap_std),
                extra_warnings: measured.map(|m| m.warnings.clone()).unwrap_or_default(),
            };
            let r = CertificationReport::new(&cert, boot.as_deref(), &ctx);
            let _ = writeln!(
                fid,
                "{d},{},{},{},{},{},{},{}",
                r.f1,
                r.f2_tilde,
                r.f_tilde,
                csv_opt(r.f_tilde_std),
                r.d_ent,
                r.eof_lb,
                csv_opt(r.eof_lb_std)
            );
            let _ = writeln!(
                steer,
                "{d},{},{},{},{},{},{}",
                r.s,
                r.sr_lb,
                csv_opt(r.sr_lb_std),
                r.delta,
                csv_opt(r.delta_std),
                r.n_cert
            );
            let p = emit_report(&r, art.path("reports").join(format!("d{d}.json")))?;
            art.record(p);
            if d == cfg.certify.d {
                let p = emit_report(&r, art.path("report.json"))?;
                art.record(p);
                art.text("jti.csv", &jti.to_csv())?;
                art.text("jsi.csv", &jsi.to_csv())?;
                let mut sch = String::from("basis,index,weight\n");
                for (label, m) in [("time", &jti), ("frequency", &jsi)] {
                    for (k, w) in schmidt_decompose(m)?.iter().enumerate() {
                        let _ = writeln!(sch, "{label},{k},{w}");
                    }
                }
                art.text("schmidt.csv", &sch)?;
            }
            reports.push(r);
        }
        art.text("fidelity_vs_d.csv", &fid)?;
        art.text("steering_vs_d.csv", &steer)?;
        Ok(reports)
    })()
    .map_err(|e| e.at_stage("certify"))?;

    Ok(PipelineOutcome {
        reports,
        correlogram,
        correlogram_fwhm_ps: width,
        jti_full,
        jsi_full,
        mub,
        artifacts: art.written,
    })
}
