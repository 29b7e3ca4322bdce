//! `specdiff` — command-line pipeline: simulate, extract, analyze, train,
//! forecast, evaluate.
//!
//! All outputs are plot-ready CSV/JSON. Every stochastic subcommand takes a
//! `--seed` and is byte-identical across reruns. Relative output paths are
//! resolved against `SPECDIFF_OUT_DIR` when that variable is set. On any
//! error the subcommand removes output files it created (exit 1); usage
//! errors exit 2.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use specdiff::eval::{self, BenchmarkConfig, PartitionScheme};
use specdiff::forecast::{self, Hyperparams, ModelKind, SearchSpace, TrainedForecaster};
use specdiff::model::{
    parse_spectral_series, parse_zpl_trace, write_spectral_series, write_zpl_trace,
};
use specdiff::{noise, peakfit, replica, simulator};

const OUT_DIR_ENV: &str = "SPECDIFF_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "specdiff",
    version,
    about = "Spectral-diffusion analysis and anticipatory forecasting for quantum emitters"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic emitter: spectrometer frames and the injected ZPL trace
    Simulate(SimulateArgs),
    /// Fit per-frame Lorentzians and extract ZPL + Raman reference traces
    Extract(ExtractArgs),
    /// Sliding-window replica-overlap |q| histograms
    Overlap(OverlapArgs),
    /// Autocorrelation with 95% confidence band and optional power-law fit
    Acf(AcfArgs),
    /// Periodogram power spectral density and optional change-point segmentation
    Psd(PsdArgs),
    /// Fit the simplified antibunching model to g²(τ) data
    G2fit(G2fitArgs),
    /// Train the Bi-Attention-LSTM forecaster (optionally with random search)
    Train(TrainArgs),
    /// Multi-step autoregressive forecast from a trained model or a baseline
    Forecast(ForecastArgs),
    /// Benchmark models across partition schemes; GHz mismatch table
    Evaluate(EvaluateArgs),
    /// Bundle all analyses of one trace into a single JSON report
    Report(ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // clap exits 2 on usage errors
    let result = match cli.cmd {
        Cmd::Simulate(a) => run_guarded(a.outputs(), || cmd_simulate(&a)),
        Cmd::Extract(a) => run_guarded(a.outputs(), || cmd_extract(&a)),
        Cmd::Overlap(a) => run_guarded(vec![a.out.clone()], || cmd_overlap(&a)),
        Cmd::Acf(a) => run_guarded(a.outputs(), || cmd_acf(&a)),
        Cmd::Psd(a) => run_guarded(a.outputs(), || cmd_psd(&a)),
        Cmd::G2fit(a) => run_guarded(vec![a.out.clone()], || cmd_g2fit(&a)),
        Cmd::Train(a) => run_guarded(a.outputs(), || cmd_train(&a)),
        Cmd::Forecast(a) => run_guarded(vec![a.out.clone()], || cmd_forecast(&a)),
        Cmd::Evaluate(a) => run_guarded(a.outputs(), || cmd_evaluate(&a)),
        Cmd::Report(a) => run_guarded(vec![a.out.clone()], || cmd_report(&a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Resolve an output path against `SPECDIFF_OUT_DIR` when relative.
fn resolve_out(p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(p),
        _ => p.to_path_buf(),
    }
}

/// Run a subcommand and, on error, delete any declared output file that did
/// not exist beforehand (no partial artifacts).
fn run_guarded(outputs: Vec<PathBuf>, f: impl FnOnce() -> Result<()>) -> Result<()> {
    let resolved: Vec<PathBuf> = outputs.iter().map(|p| resolve_out(p)).collect();
    let preexisting: Vec<bool> = resolved.iter().map(|p| p.exists()).collect();
    let result = f();
    if result.is_err() {
        for (p, &existed) in resolved.iter().zip(&preexisting) {
            if !existed && p.exists() {
                let _ = std::fs::remove_file(p);
            }
        }
    }
    result
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let path = resolve_out(path);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Parse a `lo:hi` interval.
fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("interval '{s}' must look like lo:hi"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SimulateArgs {
    /// Named preset: `stable` or `unstable`
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON config: {"bath": FluctuatorBathConfig, "render": FrameRenderConfig}
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Override the number of frames
    #[arg(long)]
    frames: Option<usize>,
    /// Output spectral-series CSV
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the injected ZPL trace
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SimulateConfig {
    bath: simulator::FluctuatorBathConfig,
    render: simulator::FrameRenderConfig,
}

impl SimulateArgs {
    fn outputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.out.clone()];
        v.extend(self.trace_out.clone());
        v
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let (mut bath, render) = match (&a.preset, &a.config) {
        (Some(name), None) => simulator::preset(name)?,
        (None, Some(path)) => {
            let cfg: SimulateConfig = read_config(path)?;
            (cfg.bath, cfg.render)
        }
        _ => bail!("exactly one of --preset or --config is required"),
    };
    if let Some(n) = a.frames {
        bath.n_frames = n;
    }
    let trace = simulator::simulate_fluctuator_bath(&bath, a.seed)?;
    let series = simulator::synthesize_spectra(&trace, &render, a.seed)?;
    write_spectral_series(&series, resolve_out(&a.out))?;
    if let Some(p) = &a.trace_out {
        write_zpl_trace(&trace, resolve_out(p))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ExtractArgs {
    /// Input spectral-series CSV
    #[arg(short, long)]
    input: PathBuf,
    /// ZPL fitting window, nm (lo:hi)
    #[arg(long, default_value = "538.0:542.0")]
    zpl_window: String,
    /// Reference (Si-Raman) fitting window, nm (lo:hi)
    #[arg(long, default_value = "546.9:548.0")]
    ref_window: String,
    /// Output ZPL trace CSV
    #[arg(short, long)]
    out: PathBuf,
    /// Output reference trace CSV
    #[arg(long)]
    ref_out: Option<PathBuf>,
}

impl ExtractArgs {
    fn outputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.out.clone()];
        v.extend(self.ref_out.clone());
        v
    }
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let series = parse_spectral_series(&a.input)?;
    let zpl_w = parse_interval(&a.zpl_window)?;
    let ref_w = parse_interval(&a.ref_window)?;
    let (zpl, reference) = peakfit::extract_traces(&series, zpl_w, ref_w)?;
    write_zpl_trace(&zpl, resolve_out(&a.out))?;
    if let Some(p) = &a.ref_out {
        write_zpl_trace(&reference, resolve_out(p))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// overlap
// ---------------------------------------------------------------------------

#[derive(Args)]
struct OverlapArgs {
    /// Input spectral-series CSV
    #[arg(short, long)]
    input: PathBuf,
    /// Frames per window
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Window stride in frames
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Histogram bins over |q| in [0, 1]
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Restrict deviations to a wavelength window, nm (lo:hi)
    #[arg(long)]
    wl_window: Option<String>,
    /// Output evolution CSV (window_start,bin_0,...)
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_overlap(a: &OverlapArgs) -> Result<()> {
    let series = parse_spectral_series(&a.input)?;
    let wl = a.wl_window.as_deref().map(parse_interval).transpose()?;
    let evo = replica::sliding_overlap_evolution(&series, a.window, a.stride, a.bins, wl)?;
    let mut text = String::from("window_start");
    for b in 0..a.bins {
        write!(text, ",bin_{b}")?;
    }
    text.push('\n');
    for (start, h) in evo.window_starts.iter().zip(&evo.histograms) {
        write!(text, "{start}")?;
        for c in &h.counts {
            write!(text, ",{c}")?;
        }
        text.push('\n');
    }
    write_text(&a.out, &text)
}

// ---------------------------------------------------------------------------
// acf
// ---------------------------------------------------------------------------

#[derive(Args)]
struct AcfArgs {
    /// Input ZPL trace CSV
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
    /// Output CSV (lag,r,band)
    #[arg(short, long)]
    out: PathBuf,
    /// Also fit log r vs log k over a lag region (lo:hi, default 1 to the
    /// first band crossing) and write the fit as JSON
    #[arg(long)]
    fit_out: Option<PathBuf>,
    /// Lag region for the power-law fit (lo:hi)
    #[arg(long)]
    fit_region: Option<String>,
}

impl AcfArgs {
    fn outputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.out.clone()];
        v.extend(self.fit_out.clone());
        v
    }
}

fn cmd_acf(a: &AcfArgs) -> Result<()> {
    let trace = parse_zpl_trace(&a.input)?;
    let acf = noise::acf(&trace, a.max_lag)?;
    let mut text = String::from("lag,r,band\n");
    for ((l, r), b) in acf.lags.iter().zip(&acf.r).zip(&acf.band) {
        writeln!(text, "{l},{r},{b}")?;
    }
    write_text(&a.out, &text)?;
    if let Some(fit_path) = &a.fit_out {
        let region = match &a.fit_region {
            Some(s) => {
                let (lo, hi) = parse_interval(s)?;
                (lo as usize, hi as usize)
            }
            None => (1, noise::first_band_crossing(&acf).max(3)),
        };
        let fit = noise::fit_acf_power_law(&acf, region)?;
        write_json(fit_path, &fit)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// psd
// ---------------------------------------------------------------------------

#[derive(Args)]
struct PsdArgs {
    /// Input ZPL trace CSV
    #[arg(short, long)]
    input: PathBuf,
    /// Remove a least-squares linear trend before the transform
    #[arg(long)]
    detrend: bool,
    /// Output CSV (freq_hz,power)
    #[arg(short, long)]
    out: PathBuf,
    /// Write the <= 2-change-point segmented log-log fit as JSON
    #[arg(long)]
    segments_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    max_change_points: usize,
    #[arg(long, default_value_t = 5)]
    min_segment: usize,
}

impl PsdArgs {
    fn outputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.out.clone()];
        v.extend(self.segments_out.clone());
        v
    }
}

fn cmd_psd(a: &PsdArgs) -> Result<()> {
    let trace = parse_zpl_trace(&a.input)?;
    let psd = noise::periodogram_psd(&trace, a.detrend)?;
    let mut text = String::from("freq_hz,power\n");
    for (f, p) in psd.freqs_hz.iter().zip(&psd.power) {
        writeln!(text, "{f},{p}")?;
    }
    write_text(&a.out, &text)?;
    if let Some(p) = &a.segments_out {
        let fit = noise::fit_psd_segments(&psd, a.max_change_points, a.min_segment)?;
        write_json(p, &fit)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// g2fit
// ---------------------------------------------------------------------------

#[derive(Args)]
struct G2fitArgs {
    /// Input CSV with header delay_s,g2
    #[arg(short, long)]
    input: PathBuf,
    /// Output JSON with the fitted parameters
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_g2fit(a: &G2fitArgs) -> Result<()> {
    let text =
        std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != "delay_s,g2" {
        bail!("expected header 'delay_s,g2', found '{header}'");
    }
    let mut delays = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (d, g) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("row {}: expected two columns", idx + 2))?;
        delays.push(d.trim().parse::<f64>()?);
        values.push(g.trim().parse::<f64>()?);
    }
    let fit = peakfit::fit_g2(&delays, &values)?;
    write_json(&a.out, &fit)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Input ZPL trace CSV
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value = "8:1:1")]
    split: PartitionScheme,
    #[arg(long)]
    seed: u64,
    /// Fixed hyperparameters as JSON (ignored with --trials)
    #[arg(long)]
    hp_config: Option<PathBuf>,
    /// Run a random hyperparameter search with this many trials
    #[arg(long)]
    trials: Option<usize>,
    /// Search-space JSON (used with --trials)
    #[arg(long)]
    space_config: Option<PathBuf>,
    #[arg(long, default_value_t = forecast::DEFAULT_MAX_EPOCHS)]
    max_epochs: usize,
    #[arg(long, default_value_t = forecast::DEFAULT_PATIENCE)]
    patience: usize,
    /// Output model checkpoint JSON
    #[arg(short, long)]
    out: PathBuf,
    /// Write the search log as JSON (with --trials)
    #[arg(long)]
    log_out: Option<PathBuf>,
}

impl TrainArgs {
    fn outputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.out.clone()];
        v.extend(self.log_out.clone());
        v
    }
}

fn default_fixed_hp() -> Hyperparams {
    Hyperparams {
        hidden_size: 32,
        sequence_length: 16,
        num_layers: 1,
        dropout: 0.0,
        learning_rate: 1e-3,
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let trace = parse_zpl_trace(&a.input)?;
    let split = a.split.as_tuple();
    let model = match a.trials {
        Some(trials) => {
            let space: SearchSpace = match &a.space_config {
                Some(p) => read_config(p)?,
                None => SearchSpace::default(),
            };
            let (model, log) = forecast::hyperparameter_search(
                &trace,
                &space,
                trials,
                split,
                a.seed,
                a.max_epochs,
                a.patience,
            )?;
            if let Some(p) = &a.log_out {
                write_json(p, &log)?;
            }
            model
        }
        None => {
            let hp: Hyperparams = match &a.hp_config {
                Some(p) => read_config(p)?,
                None => default_fixed_hp(),
            };
            forecast::train(&trace, &hp, split, a.seed, a.max_epochs, a.patience)?
        }
    };
    model.save_checkpoint(resolve_out(&a.out))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ForecastArgs {
    /// Input ZPL trace CSV (the history)
    #[arg(short, long)]
    input: PathBuf,
    /// Trained model checkpoint JSON
    #[arg(long, conflicts_with = "baseline")]
    model: Option<PathBuf>,
    /// Classical baseline: linear | poly5 | sine
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, default_value_t = forecast::DEFAULT_HORIZON)]
    horizon: usize,
    /// Enable the self-adaptive window length
    #[arg(long)]
    adapt: bool,
    /// Output CSV (step,t_s,lambda_pred_nm)
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_forecast(a: &ForecastArgs) -> Result<()> {
    let trace = parse_zpl_trace(&a.input)?;
    let fc = match (&a.model, &a.baseline) {
        (Some(path), None) => {
            let model = TrainedForecaster::load_checkpoint(path)?;
            model.autoregressive_forecast(&trace, a.horizon, a.adapt)?
        }
        (None, Some(kind)) => {
            let kind: ModelKind = kind.parse()?;
            forecast::baseline_forecast(kind, &trace, a.horizon)?
        }
        _ => bail!("exactly one of --model or --baseline is required"),
    };
    let mut text = String::from("step,t_s,lambda_pred_nm\n");
    for (k, (t, p)) in fc.t_s.iter().zip(&fc.predictions_nm).enumerate() {
        writeln!(text, "{},{t},{p}", k + 1)?;
    }
    write_text(&a.out, &text)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvaluateArgs {
    /// Input ZPL trace CSV
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Comma-separated partition schemes (default: 5:4:1,6:3:1,7:2:1,8:1:1)
    #[arg(long)]
    schemes: Option<String>,
    /// Comma-separated models (default: bi-attn-lstm,linear,poly5,sine)
    #[arg(long)]
    models: Option<String>,
    /// Hyperparameter-search trials per scheme (0 = fixed hyperparameters)
    #[arg(long, default_value_t = 0)]
    trials: usize,
    /// Benchmark config JSON overriding the defaults (flags win)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = forecast::DEFAULT_HORIZON)]
    horizon: usize,
    /// Output report JSON
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the cell matrix CSV (model,scheme,rmse_norm,rmse_nm)
    #[arg(long)]
    cells_out: Option<PathBuf>,
    /// Also write the per-step GHz mismatch table CSV for the Bi-Attn-LSTM
    #[arg(long)]
    mismatch_out: Option<PathBuf>,
}

impl EvaluateArgs {
    fn outputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.out.clone()];
        v.extend(self.cells_out.clone());
        v.extend(self.mismatch_out.clone());
        v
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let trace = parse_zpl_trace(&a.input)?;
    let mut cfg: BenchmarkConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => BenchmarkConfig::default(),
    };
    cfg.seed = a.seed;
    cfg.horizon = a.horizon;
    cfg.hpo_trials = a.trials;
    if cfg.fixed_hp.is_none() {
        cfg.fixed_hp = Some(default_fixed_hp());
    }
    if let Some(s) = &a.schemes {
        cfg.schemes = s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<specdiff::Result<Vec<_>>>()?;
    }
    if let Some(s) = &a.models {
        cfg.models = s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<specdiff::Result<Vec<_>>>()?;
    }

    let report = eval::partition_benchmark(&trace, &cfg)?;
    write_json(&a.out, &report)?;

    if let Some(p) = &a.cells_out {
        let mut text = String::from("model,scheme,rmse_norm,rmse_nm\n");
        for c in &report.cells {
            writeln!(
                text,
                "{},{},{},{}",
                c.model.as_str(),
                c.scheme.label(),
                c.rmse_norm,
                c.rmse_nm
            )?;
        }
        write_text(p, &text)?;
    }

    if let Some(p) = &a.mismatch_out {
        // Train one LSTM on the last scheme, forecast from the start of its
        // test segment, and tabulate per-step mismatch improvements.
        let scheme = *cfg.schemes.last().unwrap();
        let hp = cfg.fixed_hp.unwrap();
        let model = forecast::train(
            &trace,
            &hp,
            scheme.as_tuple(),
            cfg.seed,
            cfg.max_epochs,
            cfg.patience,
        )?;
        let (_, b1) = forecast::split_bounds(trace.len(), scheme.as_tuple())?;
        if trace.len() < b1 + cfg.horizon + 1 {
            bail!("trace too short for a {}-step mismatch table", cfg.horizon);
        }
        let history = trace.slice(0..b1)?;
        let fc = model.autoregressive_forecast(&history, cfg.horizon, cfg.adapt)?;
        let actual = trace.slice(b1 - 1..b1 + cfg.horizon)?;
        let rows = eval::mismatch_improvement(&actual, &fc)?;
        let mut text = String::from("step,actual_ghz,residual_ghz,factor\n");
        for r in &rows {
            let factor = match r.factor {
                Some(f) => format!("{f}"),
                None => "inf".to_string(),
            };
            writeln!(text, "{},{},{},{}", r.step, r.actual_ghz, r.residual_ghz, factor)?;
        }
        write_text(p, &text)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ReportArgs {
    /// Input ZPL trace CSV
    #[arg(short, long)]
    input: PathBuf,
    /// Optional spectral-series CSV for replica-overlap evolution
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
    /// Output bundled JSON
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(serde::Serialize)]
struct ReportBundle {
    trace_label: String,
    n_samples: usize,
    fs_hz: Option<f64>,
    mean_nm: f64,
    acf: noise::AcfResult,
    acf_power_law: Option<noise::PowerLawFit>,
    first_band_crossing: usize,
    psd_segments: noise::SegmentedPsdFit,
    overlap_evolution: Option<Vec<OverlapRow>>,
}

#[derive(serde::Serialize)]
struct OverlapRow {
    window_start: usize,
    counts: Vec<u64>,
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let trace = parse_zpl_trace(&a.input)?;
    let acf = noise::acf(&trace, a.max_lag)?;
    let crossing = noise::first_band_crossing(&acf);
    let acf_power_law = noise::fit_acf_power_law(&acf, (1, crossing.max(3))).ok();
    let psd = noise::periodogram_psd(&trace, false)?;
    let psd_segments = noise::fit_psd_segments(&psd, 2, 5)?;
    let overlap_evolution = match &a.series {
        Some(p) => {
            let series = parse_spectral_series(p)?;
            let evo = replica::sliding_overlap_evolution(&series, 100, 10, 50, None)?;
            Some(
                evo.window_starts
                    .iter()
                    .zip(&evo.histograms)
                    .map(|(&window_start, h)| OverlapRow {
                        window_start,
                        counts: h.counts.clone(),
                    })
                    .collect(),
            )
        }
        None => None,
    };
    let bundle = ReportBundle {
        trace_label: trace.label().to_string(),
        n_samples: trace.len(),
        fs_hz: trace.fs_hz(),
        mean_nm: trace.mean(),
        acf,
        acf_power_law,
        first_band_crossing: crossing,
        psd_segments,
        overlap_evolution,
    };
    write_json(&a.out, &bundle)
}
