#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use algdiff::cluster::{cluster, delay_stats, TimeCoordinate};
use algdiff::config::PipelineConfig;
use algdiff::detect::{detect_all, filter_record, DerivativeSignal};
use algdiff::pipeline::{
    beat_table, clean_record, delay_samples_csv, delays_csv, detections_jsonl, estimate_pulses,
    parse_detections_jsonl, read_json, record_extension, record_like, run_with_design, snr_report,
    thresholds, to_json_pretty, write_artifacts, write_filter, BeatRecord, Design,
};
use algdiff::record::{load_record, MultichannelRecord, RecordFormat};
use algdiff::synth::{generate, SynthScenario};
use algdiff::tune::{search_combos, TuneGrid};

#[derive(Parser)]
#[command(
    name = "algdiff",
    version,
    about = "Cardiac artifact removal with algebraic differentiators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the derivative filter and export taps, descriptor and response.
    Design(DesignArgs),
    /// Generate a synthetic multichannel record with ground truth.
    Synth(SynthArgs),
    /// Filter a record with the n-th derivative filter.
    Filter(FilterArgs),
    /// Threshold and consolidate derivative signals into detections.
    Detect(DetectArgs),
    /// Group detections into beats and compute inter-channel delays.
    Delays(DelaysArgs),
    /// Fit, reconstruct and subtract the cardiac pulses.
    Clean(CleanArgs),
    /// Grid search over (n, alpha, k) maximizing the output SNR.
    Tune(TuneArgs),
    /// Run every stage and write all artifacts.
    Run(RunArgs),
}

/// Flags mirroring the pipeline configuration; each overrides the config file.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Derivative order n.
    #[arg(short = 'n', long = "order")]
    n: Option<u32>,
    /// Truncation order N.
    #[arg(long = "poly-degree")]
    poly_degree: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Bessel-zero index of the window design.
    #[arg(short = 'k', long = "bessel-k")]
    k: Option<u32>,
    /// Explicit window length in seconds (overrides k).
    #[arg(long)]
    window: Option<f64>,
    /// Powerline frequency in Hz.
    #[arg(long)]
    f0: Option<f64>,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long = "l-min")]
    l_min: Option<usize>,
    /// Beat grouping tolerance in seconds.
    #[arg(long = "delta-t-beat")]
    delta_t_beat: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Zero-based reference channel for delays.
    #[arg(long = "ref-channel")]
    ref_channel: Option<usize>,
    #[arg(long = "allow-out-of-range")]
    allow_out_of_range: bool,
    /// Time coordinate for grouping: start or peak.
    #[arg(long = "time-coordinate", value_parser = parse_coordinate)]
    time_coordinate: Option<TimeCoordinate>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_coordinate(s: &str) -> std::result::Result<TimeCoordinate, String> {
    match s {
        "start" => Ok(TimeCoordinate::Start),
        "peak" => Ok(TimeCoordinate::Peak),
        _ => Err(format!("expected 'start' or 'peak', got '{s}'")),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let f = &mut cfg.filter;
        if let Some(v) = self.n {
            f.n = v;
        }
        if let Some(v) = self.poly_degree {
            f.poly_degree = v;
        }
        if let Some(v) = self.alpha {
            f.alpha = v;
        }
        if self.beta.is_some() {
            f.beta = self.beta;
        }
        if let Some(v) = self.theta {
            f.theta = v;
        }
        if self.window.is_some() {
            f.window = self.window;
            f.k = None;
        } else if self.k.is_some() {
            f.k = self.k;
            f.window = None;
        }
        if let Some(v) = self.f0 {
            f.f0 = v;
        }
        if let Some(v) = self.percentile {
            cfg.detection.percentile = v;
        }
        if self.l_min.is_some() {
            cfg.detection.l_min = self.l_min;
        }
        let c = &mut cfg.clustering;
        if let Some(v) = self.delta_t_beat {
            c.delta_t_beat = v;
        }
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if self.ref_channel.is_some() {
            c.ref_channel = self.ref_channel;
        }
        if self.allow_out_of_range {
            c.allow_out_of_range = true;
        }
        if let Some(v) = self.time_coordinate {
            c.time_coordinate = v;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 5000.0)]
    fs: f64,
    #[arg(long, short)]
    out_dir: PathBuf,
    /// Upper frequency of the exported magnitude response.
    #[arg(long, default_value_t = 500.0)]
    response_max_hz: f64,
    #[arg(long, default_value_t = 0.25)]
    response_step_hz: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Scenario TOML; the built-in reference scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output record (.csv or binary).
    #[arg(long, short)]
    out: PathBuf,
    /// Cardiac impulse trains per channel, for SNR evaluation.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Arrival list (JSON).
    #[arg(long)]
    arrivals_out: Option<PathBuf>,
    /// Write the effective scenario as TOML.
    #[arg(long)]
    scenario_out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Derivative record (.csv or binary).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Derivative record written by `filter`.
    #[arg(long)]
    derivs: PathBuf,
    /// Detections as JSON lines.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    thresholds_out: Option<PathBuf>,
}

#[derive(Args)]
struct DelaysArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    detections: PathBuf,
    /// Number of channels of the record.
    #[arg(long)]
    channels: usize,
    #[arg(long, short)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CleanArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long)]
    derivs: PathBuf,
    /// Beat table written by `delays`.
    #[arg(long)]
    beats: PathBuf,
    /// Cardiac impulse record for the SNR; a proxy SNR otherwise.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, short)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Comma-separated derivative orders; with alpha/k lists a full grid.
    #[arg(long, value_delimiter = ',')]
    n_values: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    alpha_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    k_values: Vec<u32>,
    #[arg(long, short)]
    out_dir: Option<PathBuf>,
    /// Also write the best filter's taps and descriptor here.
    #[arg(long)]
    export_best: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, short)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<algdiff::Error>()
                .map_or(2, algdiff::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Design(a) => design(a),
        Command::Synth(a) => synth(a),
        Command::Filter(a) => filter(a),
        Command::Detect(a) => detect(a),
        Command::Delays(a) => delays(a),
        Command::Clean(a) => clean(a),
        Command::Tune(a) => tune(a),
        Command::Run(a) => run(a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| algdiff::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| algdiff::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| algdiff::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn save(rec: &MultichannelRecord, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    rec.save(path)?;
    Ok(())
}

fn required(flag: Option<PathBuf>, cfg: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| cfg.cloned()).ok_or_else(|| {
        anyhow!(algdiff::Error::Validation(format!(
            "missing --{name} (or io.{name} in the config)"
        )))
    })
}

fn input_path(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    required(flag, cfg.io.input.as_ref(), "input")
}

fn output_dir(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    let name = "output_dir";
    flag.or_else(|| cfg.io.output_dir.clone()).ok_or_else(|| {
        anyhow!(algdiff::Error::Validation(format!(
            "missing --out-dir (or io.{name} in the config)"
        )))
    })
}

fn load_truth(
    flag: Option<PathBuf>,
    cfg: &PipelineConfig,
    record: &MultichannelRecord,
) -> Result<Option<MultichannelRecord>> {
    match flag.or_else(|| cfg.io.truth.clone()) {
        None => Ok(None),
        Some(p) => {
            let t = load_record(&p)?;
            if t.fs != record.fs {
                return Err(algdiff::Error::Validation(format!(
                    "{}: truth sampled at {} Hz, record at {} Hz",
                    p.display(),
                    t.fs,
                    record.fs
                ))
                .into());
            }
            Ok(Some(t))
        }
    }
}

fn design(a: DesignArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let d = Design::new(&cfg.filter, a.fs)?;
    ensure_dir(&a.out_dir)?;
    write_filter(
        &d.fir_n,
        &a.out_dir.join("filter_taps.csv"),
        &a.out_dir.join("filter.json"),
    )?;
    write_filter(
        &d.fir_0,
        &a.out_dir.join("smoother_taps.csv"),
        &a.out_dir.join("smoother.json"),
    )?;
    if !(a.response_step_hz > 0.0) {
        return Err(algdiff::Error::Validation("--response-step-hz must be > 0".into()).into());
    }
    let top = a.response_max_hz.min(a.fs / 2.0);
    let mut csv =
        String::from("frequency_hz,magnitude,magnitude_db,phase_rad,smoother_magnitude\n");
    let steps = (top / a.response_step_hz).floor() as usize;
    for i in 0..=steps {
        let f = i as f64 * a.response_step_hz;
        let p = d.fir_n.frequency_response(f)?;
        let s = d.fir_0.frequency_response(f)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            f,
            p.magnitude,
            20.0 * p.magnitude.log10(),
            p.phase,
            s.magnitude
        ));
    }
    write(&a.out_dir.join("response.csv"), &csv)?;
    print!("{}", to_json_pretty(&d.fir_n.descriptor()));
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let mut sc = match &a.scenario {
        Some(p) => SynthScenario::load(p)?,
        None => SynthScenario::reference(),
    };
    if let Some(s) = cfg.seed {
        sc.seed = s;
    }
    let (rec, truth) = generate(&sc)?;
    save(&rec, &a.out)?;
    if let Some(p) = &a.truth_out {
        save(&record_like(&rec, truth.heart_impulses()), p)?;
    }
    if let Some(p) = &a.arrivals_out {
        write(p, &to_json_pretty(&truth.arrivals))?;
    }
    if let Some(p) = &a.scenario_out {
        write(p, &sc.to_toml_string())?;
    }
    log::info!(
        "{} channels, {} samples at {} Hz",
        rec.channels(),
        rec.samples(),
        rec.fs
    );
    Ok(())
}

fn filter(a: FilterArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let rec = load_record(&input_path(a.input, &cfg)?)?;
    let d = Design::new(&cfg.filter, rec.fs).map_err(|e| e.in_stage("design"))?;
    let derivs = filter_record(&rec, &d.fir_n).map_err(|e| e.in_stage("filter"))?;
    save(
        &record_like(&rec, derivs.into_iter().map(|s| s.samples).collect()),
        &a.out,
    )?;
    Ok(())
}

/// Derivative signals read back from a `filter` output.
fn load_derivs(
    path: &Path,
    design: &Design,
) -> Result<(MultichannelRecord, Vec<DerivativeSignal>)> {
    let rec = load_record(path)?;
    if rec.fs != design.fir_n.sample_rate {
        return Err(algdiff::Error::Validation(format!(
            "{}: fs {} does not match the design",
            path.display(),
            rec.fs
        ))
        .into());
    }
    let derivs = rec
        .data
        .iter()
        .enumerate()
        .map(|(c, s)| DerivativeSignal {
            channel: c,
            order: design.spec.deriv_order,
            samples: s.clone(),
            fs: rec.fs,
            warmup: design.fir_n.warmup(),
        })
        .collect();
    Ok((rec, derivs))
}

fn sample_rate_of(path: &Path) -> Result<f64> {
    Ok(load_record(path)?.fs)
}

fn detect(a: DetectArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let fs = sample_rate_of(&a.derivs)?;
    let d = Design::new(&cfg.filter, fs).map_err(|e| e.in_stage("design"))?;
    let (_, derivs) = load_derivs(&a.derivs, &d)?;
    let det = detect_all(&derivs, &cfg.detection.params(), d.window())
        .map_err(|e| e.in_stage("detect"))?;
    write(&a.out, &detections_jsonl(&det))?;
    if let Some(p) = &a.thresholds_out {
        write(p, &to_json_pretty(&thresholds(&det)))?;
    }
    Ok(())
}

fn delays(a: DelaysArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let text = fs::read_to_string(&a.detections)
        .with_context(|| format!("reading {}", a.detections.display()))?;
    let det = parse_detections_jsonl(&text, a.channels, &a.detections)?;
    let params = cfg.clustering.params();
    let outcome = cluster(&det, a.channels, &params).map_err(|e| e.in_stage("cluster"))?;
    let beats = beat_table(&outcome, &det);
    let delays = delay_stats(&outcome.groups, params.reference(a.channels), a.channels)
        .unwrap_or_else(|e| {
            log::warn!("delay statistics unavailable: {e}");
            Vec::new()
        });
    ensure_dir(&a.out_dir)?;
    write(&a.out_dir.join("beats.json"), &to_json_pretty(&beats))?;
    write(&a.out_dir.join("delays.csv"), &delays_csv(&delays))?;
    write(
        &a.out_dir.join("delay_samples.csv"),
        &delay_samples_csv(&delays),
    )?;
    Ok(())
}

fn clean(a: CleanArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let in_path = input_path(a.input, &cfg)?;
    let rec = load_record(&in_path)?;
    let out_dir = output_dir(a.out_dir, &cfg)?;
    let d = Design::new(&cfg.filter, rec.fs).map_err(|e| e.in_stage("design"))?;
    let (drec, derivs) = load_derivs(&a.derivs, &d)?;
    if drec.channels() != rec.channels() || drec.samples() != rec.samples() {
        return Err(algdiff::Error::Validation(format!(
            "derivative record is {}x{}, input {}x{}",
            drec.channels(),
            drec.samples(),
            rec.channels(),
            rec.samples()
        ))
        .into());
    }
    let beats: Vec<BeatRecord> = read_json(&a.beats)?;
    let truth = load_truth(a.truth, &cfg, &rec)?;
    let est = estimate_pulses(&derivs, &d.model, &beats).map_err(|e| e.in_stage("reconstruct"))?;
    let cleaned = clean_record(&rec, &d, &est).map_err(|e| e.in_stage("reconstruct"))?;
    let snr = snr_report(&derivs, &d, &est, truth.as_ref()).map_err(|e| e.in_stage("snr"))?;
    ensure_dir(&out_dir)?;
    write(&out_dir.join("estimates.json"), &to_json_pretty(&est))?;
    write(&out_dir.join("snr.json"), &to_json_pretty(&snr))?;
    let ext = record_extension(RecordFormat::from_path(&in_path));
    save(
        &record_like(&rec, cleaned.into_iter().map(|c| c.clean).collect()),
        &out_dir.join(format!("clean.{ext}")),
    )?;
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let rec = load_record(&input_path(a.input, &cfg)?)?;
    let out_dir = output_dir(a.out_dir, &cfg)?;
    let truth = load_truth(a.truth, &cfg, &rec)?;
    let (combos, skipped) =
        if a.n_values.is_empty() && a.alpha_values.is_empty() && a.k_values.is_empty() {
            (TuneGrid::default_combos(), Vec::new())
        } else {
            let grid = TuneGrid {
                n_values: if a.n_values.is_empty() {
                    vec![cfg.filter.n]
                } else {
                    a.n_values
                },
                alpha_values: if a.alpha_values.is_empty() {
                    vec![cfg.filter.alpha]
                } else {
                    a.alpha_values
                },
                k_values: if a.k_values.is_empty() {
                    vec![cfg.filter.k.unwrap_or(algdiff::config::DEFAULT_K)]
                } else {
                    a.k_values
                },
            };
            grid.combos()
        };
    let res = search_combos(&combos, skipped, &cfg, &rec, truth.as_ref())
        .map_err(|e| e.in_stage("tune"))?;
    ensure_dir(&out_dir)?;
    write(&out_dir.join("tune.csv"), &res.to_csv())?;
    write(&out_dir.join("tune.json"), &to_json_pretty(&res))?;
    if let Some(dir) = &a.export_best {
        let spec = res.best_spec().expect("non-empty result has a best row");
        let spec = algdiff::kernel::KernelSpec {
            poly_degree: cfg.filter.poly_degree,
            theta: cfg.filter.theta,
            ..spec
        };
        let d = Design::from_spec(spec, rec.fs)?;
        ensure_dir(dir)?;
        write_filter(
            &d.fir_n,
            &dir.join("filter_taps.csv"),
            &dir.join("filter.json"),
        )?;
    }
    if let Some(best) = res.best() {
        println!(
            "best: n={} alpha={} k={} T={} L={} snr_db={}",
            best.n,
            best.alpha,
            best.k,
            best.window,
            best.len,
            serde_json::to_string(&best.snr_db)?.trim_matches('"')
        );
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let in_path = input_path(a.input, &cfg)?;
    let rec = load_record(&in_path)?;
    let out_dir = output_dir(a.out_dir, &cfg)?;
    let truth = load_truth(a.truth, &cfg, &rec)?;
    let d = Design::new(&cfg.filter, rec.fs).map_err(|e| e.in_stage("design"))?;
    let out = run_with_design(&cfg, &d, &rec, truth.as_ref())?;
    write_artifacts(&out_dir, &rec, RecordFormat::from_path(&in_path), &d, &out)?;
    write(&out_dir.join("config.toml"), &cfg.to_toml_string())?;
    let cardiac = out
        .beats
        .iter()
        .filter(|b| b.classification == algdiff::cluster::Classification::Cardiac)
        .count();
    println!(
        "{} beats ({} cardiac), pooled SNR {} dB{}",
        out.beats.len(),
        cardiac,
        serde_json::to_string(&out.snr.pooled_db)?.trim_matches('"'),
        if out.snr.proxy { " (proxy)" } else { "" }
    );
    Ok(())
}
