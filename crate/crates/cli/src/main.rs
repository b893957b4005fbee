use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tfcert::certify::{certify, schmidt_decompose, CertifyOptions, GammaConvention, TargetState};
use tfcert::coincidence::{build_jti, cross_correlogram_par, fwhm, match_pairs};
use tfcert::config::PipelineConfig;
use tfcert::matrix::{subspace, JointCountMatrix};
use tfcert::pipeline::{run_pipeline, simulate_run, tag_file_name, write_truth_csv};
use tfcert::report::{sha256_hex, to_canonical_json, CertificationReport, ReportContext};
use tfcert::source::FilterShape;
use tfcert::spectral::{acquire_cross_basis, acquire_jsi, sweep_plan, AcquisitionOptions};
use tfcert::stats::{measurement_budget, poisson_bootstrap, Quantity, DEFAULT_RESAMPLES};
use tfcert::tagio::{read_tag_file, write_tag_file};
use tfcert::tags::{Channel, FrameLayout};
use tfcert::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tfcert",
    version,
    about = "Time-frequency entanglement simulation and certification"
)]
struct Cli {
    /// Seed for every random draw; overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Gaussian,
    Lorentzian,
}

impl From<Shape> for FilterShape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Gaussian => FilterShape::Gaussian,
            Shape::Lorentzian => FilterShape::Lorentzian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Gamma {
    Standard,
    AsPrinted,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the unfiltered time-basis run and write one tag file per detector.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the config's JTI acquisition time.
        #[arg(long)]
        seconds: Option<f64>,
        #[arg(long)]
        no_truth: bool,
    },
    /// Cross-correlogram of two tag files and its FWHM.
    Correlate {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 2)]
        bin_ps: u64,
        #[arg(long, default_value_t = 1000)]
        range_ps: u64,
        /// Correlogram CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discretized JTI from two tag files.
    Jti {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        tau_ps: u64,
        #[arg(long)]
        n_bins: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long, default_value_t = 160)]
        window_ps: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated filter-sweep JSI.
    Jsi {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 5.9)]
        filter_fwhm_ghz: f64,
        #[arg(long)]
        step_ghz: Option<f64>,
        #[arg(long, value_enum, default_value_t = Shape::Gaussian)]
        shape: Shape,
        /// Seconds per filter setting.
        #[arg(long)]
        seconds: f64,
        #[arg(long)]
        window_ps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time x frequency cross-basis overlap estimate.
    MubCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        bin_offset: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fidelity, entropy and steering certificates from two count matrices.
    Certify {
        #[arg(long)]
        jti: PathBuf,
        #[arg(long)]
        jsi: PathBuf,
        /// Subspace size; defaults to the matrix size.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 0)]
        jti_offset: usize,
        /// Defaults to the centered block.
        #[arg(long)]
        jsi_offset: Option<usize>,
        /// Measured maximal overlap between the bases.
        #[arg(long)]
        overlap: Option<f64>,
        /// Comma-separated Schmidt coefficients; default maximally entangled.
        #[arg(long)]
        target: Option<String>,
        /// Number of Poisson resamples (0 disables).
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        bootstrap: usize,
        #[arg(long)]
        allow_nonprime: bool,
        #[arg(long, value_enum, default_value_t = Gamma::Standard)]
        gamma: Gamma,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Schmidt spectrum of a count matrix.
    Schmidt {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Number of measurement settings for each approach at dimension d.
    Budget {
        #[arg(long)]
        d: u64,
    },
    /// Full pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = to_canonical_json(value)?;
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_target(s: &str) -> Result<TargetState> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad target coefficient `{t}`")))
        })
        .collect::<Result<_>>()?;
    let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= 0.0 {
        return Err(Error::InvalidParameter("target coefficients are all zero".into()));
    }
    TargetState::new(vals.iter().map(|v| v / norm).collect())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate {
            config,
            out,
            seconds,
            no_truth,
        } => {
            let cfg = load_config(&config, seed)?;
            let seconds = seconds.unwrap_or(cfg.jti.acquisition_seconds);
            let (pairs, det) = simulate_run(&cfg, seconds, cfg.seed).map_err(|e| e.at_stage("simulate"))?;
            std::fs::create_dir_all(&out)?;
            let mut counts = serde_json::Map::new();
            for ch in Channel::ALL {
                write_tag_file(det.stream(ch), out.join(tag_file_name(ch)))?;
                counts.insert(ch.label().into(), json!(det.stream(ch).len()));
            }
            if !no_truth {
                write_truth_csv(&pairs, &det, out.join("truth.csv"))?;
            }
            emit(
                &json!({"pairs": pairs.len(), "tags": counts, "duration_ps": det.duration_ps}),
                None,
            )
        }
        Command::Correlate {
            a,
            b,
            bin_ps,
            range_ps,
            out,
        } => {
            let (sa, sb) = (read_tag_file(&a)?, read_tag_file(&b)?);
            let c =
                cross_correlogram_par(sa.tags(), sb.tags(), bin_ps, range_ps).map_err(|e| e.at_stage("correlate"))?;
            if let Some(p) = &out {
                std::fs::write(p, c.to_csv())?;
            }
            let w = fwhm(&c).map_err(|e| e.at_stage("correlate"))?;
            emit(
                &json!({"fwhm_ps": w, "peak_offset_ps": c.peak_offset_ps(), "coincidences_in_range": c.total()}),
                None,
            )
        }
        Command::Jti {
            a,
            b,
            tau_ps,
            n_bins,
            d,
            offset,
            window_ps,
            out,
        } => {
            let (sa, sb) = (read_tag_file(&a)?, read_tag_file(&b)?);
            let frame = FrameLayout::new(tau_ps, n_bins)?;
            let pairs = match_pairs(sa.tags(), sb.tags(), window_ps);
            let built = build_jti(&pairs, frame, d, offset).map_err(|e| e.at_stage("jti"))?;
            built.matrix.write_csv(&out)?;
            emit(
                &json!({
                    "matched_pairs": pairs.len(),
                    "in_block": built.matrix.total(),
                    "frame_spillover": built.frame_spillover,
                    "outside_block": built.outside_block,
                }),
                None,
            )
        }
        Command::Jsi {
            config,
            d,
            filter_fwhm_ghz,
            step_ghz,
            shape,
            seconds,
            window_ps,
            out,
        } => {
            let cfg = load_config(&config, seed)?;
            let plan =
                sweep_plan(d, filter_fwhm_ghz, step_ghz, shape.into())?.check_coverage(cfg.source.pm_bandwidth_ghz);
            let m = acquire_jsi(
                &cfg.source,
                &cfg.channel,
                &plan,
                seconds,
                cfg.seed,
                &AcquisitionOptions { window_ps },
            )
            .map_err(|e| e.at_stage("jsi"))?;
            m.write_csv(&out)?;
            emit(
                &json!({"total": m.total(), "diagonal": m.diagonal_total(), "warnings": plan.warnings}),
                None,
            )
        }
        Command::MubCheck {
            config,
            d,
            seconds,
            bin_offset,
            out,
        } => {
            let cfg = load_config(&config, seed)?;
            let plan = sweep_plan(d, cfg.jsi.filter_fwhm_ghz, cfg.jsi.step_ghz, cfg.jsi.shape)?;
            let frame = FrameLayout::new(cfg.jti.tau_ps, cfg.jti.n_bins)?;
            let opts = AcquisitionOptions {
                window_ps: cfg.jsi.window_ps,
            };
            let (counts, est) = acquire_cross_basis(
                &cfg.source,
                &cfg.channel,
                &plan,
                frame,
                bin_offset,
                seconds,
                cfg.seed,
                &opts,
            )
            .map_err(|e| e.at_stage("mub-check"))?;
            if let Some(p) = &out {
                counts.write_csv(p)?;
            }
            emit(
                &json!({
                    "d": est.d,
                    "max_overlap": est.max_overlap,
                    "max_overlap_std": est.max_overlap_std,
                    "avg_deviation": est.avg_deviation,
                    "std": est.avg_deviation_std,
                    "warnings": est.warnings,
                }),
                None,
            )
        }
        Command::Certify {
            jti,
            jsi,
            d,
            jti_offset,
            jsi_offset,
            overlap,
            target,
            bootstrap,
            allow_nonprime,
            gamma,
            out,
        } => {
            let jti_bytes = std::fs::read(&jti)?;
            let jsi_bytes = std::fs::read(&jsi)?;
            let parse = |b: &[u8]| JointCountMatrix::from_csv(&String::from_utf8_lossy(b));
            let (jti_full, jsi_full) = (parse(&jti_bytes)?, parse(&jsi_bytes)?);
            let d = d.unwrap_or(jti_full.d_a());
            let jsi_offset = jsi_offset.unwrap_or(jsi_full.d_a().saturating_sub(d) / 2);
            let jti_m = subspace(&jti_full, d, jti_offset)?;
            let jsi_m = subspace(&jsi_full, d, jsi_offset)?;
            let gamma = match gamma {
                Gamma::Standard => GammaConvention::Standard,
                Gamma::AsPrinted => GammaConvention::AsPrinted,
            };
            let opts = CertifyOptions {
                target: target.as_deref().map(parse_target).transpose()?,
                allow_nonprime,
                gamma,
                max_overlap: overlap,
            };
            let seed = seed.unwrap_or(0);
            let cert = certify(&jti_m, &jsi_m, &opts).map_err(|e| e.at_stage("certify"))?;
            let boot = if bootstrap >= 2 {
                Some(
                    poisson_bootstrap(&jti_m, &jsi_m, &Quantity::ALL, &opts, bootstrap, seed)
                        .map_err(|e| e.at_stage("bootstrap"))?,
                )
            } else if bootstrap == 1 {
                return Err(Error::InvalidParameter("bootstrap needs at least 2 resamples".into()));
            } else {
                None
            };
            let options = format!(
                "d={d};jti_offset={jti_offset};jsi_offset={jsi_offset};overlap={overlap:?};target={target:?};bootstrap={bootstrap};allow_nonprime={allow_nonprime};gamma={gamma:?};seed={seed}"
            );
            let mut digest_input = jti_bytes.clone();
            digest_input.extend_from_slice(&jsi_bytes);
            digest_input.extend_from_slice(options.as_bytes());
            let discard = |full: &JointCountMatrix, sub: &JointCountMatrix| {
                if full.total() == 0 {
                    0.0
                } else {
                    1.0 - sub.total() as f64 / full.total() as f64
                }
            };
            let ctx = ReportContext {
                config_digest: sha256_hex(&digest_input),
                seed,
                gamma,
                discarded_fraction_jti: discard(&jti_full, &jti_m),
                discarded_fraction_jsi: discard(&jsi_full, &jsi_m),
                max_overlap_std: None,
                extra_warnings: Vec::new(),
            };
            let report = CertificationReport::new(&cert, boot.as_deref(), &ctx);
            let text = to_canonical_json(&report)?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Schmidt { matrix } => {
            let m = JointCountMatrix::read_csv(&matrix)?;
            let w = schmidt_decompose(&m)?;
            let k = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
            emit(&json!({"eigenvalues": w, "schmidt_number": k}), None)
        }
        Command::Budget { d } => {
            let b = measurement_budget(d)?;
            emit(
                &json!({
                    "d": d,
                    "fst": b.fst,
                    "fidelity_direct": b.fidelity_direct,
                    "two_bases": b.two_bases,
                    "this_work": b.this_work,
                }),
                None,
            )
        }
        Command::Run { config, out } => {
            let cfg = load_config(&config, seed)?;
            let outcome = run_pipeline(&cfg, &out)?;
            let summary: Vec<Value> = outcome
                .reports
                .iter()
                .map(|r| json!({"d": r.d, "f_tilde": r.f_tilde, "d_ent": r.d_ent, "eof_lb": r.eof_lb, "delta": r.delta, "n_cert": r.n_cert}))
                .collect();
            emit(
                &json!({
                    "correlogram_fwhm_ps": outcome.correlogram_fwhm_ps,
                    "certificates": summary,
                    "artifacts": outcome.artifacts.len(),
                }),
                None,
            )
        }
    }
}

fn error_json(stage: Option<&str>, message: String) -> String {
    json!({"error": {"stage": stage, "message": message}}).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_json(Some("arguments"), e.to_string().trim().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = e.stage();
            eprintln!("{}", error_json(stage, e.to_string()));
            ExitCode::FAILURE
        }
    }
}
