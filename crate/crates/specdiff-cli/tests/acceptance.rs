//! Acceptance suite: one check per criterion, each printing a PASS/FAIL line.
//!
//! Criteria cover the headline GHz arithmetic, replica-overlap properties,
//! ACF band coverage, PSD fidelity, change-point segmentation, forecaster
//! correctness and skill, the simulate→render→extract round trip, g² fits,
//! and byte-level determinism of the stochastic subcommands.

use std::path::Path;
use std::process::Command;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use specdiff::eval::{self, BenchmarkConfig};
use specdiff::forecast::{self, Hyperparams, ModelKind};
use specdiff::{noise, peakfit, replica, simulator};

// Small statistics helpers local to the suite (the library keeps its linear
// algebra private).
mod helpers {
    pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (&xi, &yi) in x.iter().zip(y) {
            sxx += (xi - mx) * (xi - mx);
            sxy += (xi - mx) * (yi - my);
        }
        sxy / sxx
    }

    pub fn std_dev(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
    }

    pub fn trace_from(values: Vec<f64>, fs: f64) -> specdiff::ZplTrace {
        let t: Vec<f64> = (0..values.len()).map(|i| i as f64 / fs).collect();
        specdiff::ZplTrace::new(t, values, "fixture").unwrap()
    }
}

use helpers::*;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

type CriterionResult = Result<(), String>;

// ---------------------------------------------------------------------------
// 1. GHz arithmetic
// ---------------------------------------------------------------------------

fn c1_ghz_arithmetic() -> CriterionResult {
    let g294 = eval::shift_to_frequency_ghz(539.2619, 539.5476).map_err(|e| e.to_string())?;
    ensure!((g294 - 294.0).abs() <= 2.0, "294 GHz case gave {g294}");
    let g94 = eval::shift_to_frequency_ghz(550.0948, 550.0).map_err(|e| e.to_string())?;
    ensure!((g94 - 94.0).abs() <= 2.0, "94 GHz case gave {g94}");
    let g44 = eval::shift_to_frequency_ghz(550.0, 549.9553).map_err(|e| e.to_string())?;
    ensure!((g44 - 44.3).abs() <= 2.0, "44.3 GHz case gave {g44}");
    let f21 = g94 / g44;
    ensure!((f21 - 2.1).abs() / 2.1 <= 0.05, "factor {f21} not ~2.1");
    let f158: f64 = 98.1 / 6.18;
    ensure!((f158 - 15.8).abs() / 15.8 <= 0.05, "factor {f158} not ~15.8");
    Ok(())
}

// ---------------------------------------------------------------------------
// 2. Replica overlap properties + sliding-evolution window count
// ---------------------------------------------------------------------------

fn c2_replica_overlap() -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for w in 0..1000 {
        let n = rng.random_range(2..=6usize);
        let bins = rng.random_range(4..=12usize);
        let frames: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..bins).map(|_| rng.random::<f64>() * 100.0).collect())
            .collect();
        let refs: Vec<&[f64]> = frames.iter().map(|f| f.as_slice()).collect();
        let eps = replica::default_eps(&refs);
        let m = replica::overlap_matrix(&refs, eps).map_err(|e| format!("window {w}: {e}"))?;
        for a in 0..n {
            ensure!(m.q(a, a) == 1.0, "window {w}: diagonal not 1");
            for b in 0..n {
                ensure!(m.q(a, b) == m.q(b, a), "window {w}: asymmetric");
                ensure!(m.q(a, b).abs() <= 1.0 + 1e-12, "window {w}: |q| > 1");
            }
        }
        if n == 2 && !m.is_excluded(0, 1) {
            ensure!(
                (m.q(0, 1) + 1.0).abs() < 1e-12,
                "window {w}: n=2 overlap {} != -1",
                m.q(0, 1)
            );
        }
    }

    let (mut bath, render) = simulator::preset("unstable").map_err(|e| e.to_string())?;
    bath.n_frames = 190;
    let trace = simulator::simulate_fluctuator_bath(&bath, 42).map_err(|e| e.to_string())?;
    let series = simulator::synthesize_spectra(&trace, &render, 42).map_err(|e| e.to_string())?;
    let evo = replica::sliding_overlap_evolution(&series, 100, 10, 50, None)
        .map_err(|e| e.to_string())?;
    ensure!(
        evo.histograms.len() == 10,
        "190-frame fixture gave {} windows, want 10",
        evo.histograms.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 3. ACF band coverage and AR(1) recovery
// ---------------------------------------------------------------------------

fn c3_acf_band() -> CriterionResult {
    let n = 10_000;
    let mut inside = 0usize;
    let mut total = 0usize;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let values: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let a = noise::acf(&trace_from(values, 2000.0), 100).map_err(|e| e.to_string())?;
        for k in 1..=100 {
            total += 1;
            if a.r[k].abs() <= a.band[k] {
                inside += 1;
            }
        }
    }
    let frac = inside as f64 / total as f64;
    ensure!(frac >= 0.90, "band coverage {frac:.3} < 0.90");

    let phi: f64 = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let mut values = vec![0.0f64];
    for _ in 1..n {
        let e: f64 = rng.sample(StandardNormal);
        values.push(phi * values.last().unwrap() + e);
    }
    let a = noise::acf(&trace_from(values, 2000.0), 30).map_err(|e| e.to_string())?;
    for k in 0..=20usize {
        let expect = phi.powi(k as i32);
        ensure!(
            (a.r[k] - expect).abs() < 0.03,
            "AR(1) lag {k}: {} vs {expect}",
            a.r[k]
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 4. PSD fidelity: Parseval, sinusoid peak, bath slope, preset flattening
// ---------------------------------------------------------------------------

fn c4_psd_fidelity() -> CriterionResult {
    // Parseval on random traces.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let values: Vec<f64> = (0..512)
            .map(|_| 539.0 + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
        let trace = trace_from(values, 2000.0);
        let psd = noise::periodogram_psd(&trace, false).map_err(|e| e.to_string())?;
        let df = psd.freqs_hz[1] - psd.freqs_hz[0];
        let total: f64 = psd.power.iter().sum::<f64>() * df;
        ensure!(
            (total - var).abs() / var < 1e-6,
            "Parseval violated: {total} vs {var}"
        );
    }

    // Sinusoid peak bin exact.
    let n = 2000;
    let fs = 2000.0;
    let values: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * 100.0 * i as f64 / fs).sin())
        .collect();
    let psd = noise::periodogram_psd(&trace_from(values, fs), false).map_err(|e| e.to_string())?;
    let kmax = (0..psd.power.len())
        .max_by(|&a, &b| psd.power[a].total_cmp(&psd.power[b]))
        .unwrap();
    ensure!(
        (psd.freqs_hz[kmax] - 100.0).abs() < 1e-9,
        "peak at {} Hz, want 100",
        psd.freqs_hz[kmax]
    );

    // Broad fluctuator bath: designed alpha = 1, seed-averaged periodogram.
    let bath = simulator::FluctuatorBathConfig {
        n_fluctuators: 50,
        rate_range_hz: (0.1, 100.0),
        coupling_scale_nm: 0.05,
        base_wavelength_nm: 539.55,
        drift: simulator::OuParams::none(),
        measurement_noise_nm: 0.0,
        fs_hz: 2000.0,
        n_frames: 10_000,
    };
    let mut mean_power: Vec<f64> = Vec::new();
    let mut freqs: Vec<f64> = Vec::new();
    let seeds = 5;
    for seed in 0..seeds {
        let trace = simulator::simulate_fluctuator_bath(&bath, seed).map_err(|e| e.to_string())?;
        let psd = noise::periodogram_psd(&trace, false).map_err(|e| e.to_string())?;
        if mean_power.is_empty() {
            mean_power = vec![0.0; psd.power.len()];
            freqs = psd.freqs_hz.clone();
        }
        for (m, p) in mean_power.iter_mut().zip(&psd.power) {
            *m += p / seeds as f64;
        }
    }
    let mut logf = Vec::new();
    let mut logp = Vec::new();
    for (&f, &p) in freqs.iter().zip(&mean_power) {
        if (0.2..=20.0).contains(&f) && p > 0.0 {
            logf.push(f.log10());
            logp.push(p.log10());
        }
    }
    let slope = ols_slope(&logf, &logp);
    ensure!(
        (-1.2..=-0.8).contains(&slope),
        "bath PSD slope {slope} outside [-1.2, -0.8]"
    );

    // Stable preset flattens at high frequency (|alpha_high| < |alpha_low|).
    let (stable, _) = simulator::preset("stable").map_err(|e| e.to_string())?;
    let trace = simulator::simulate_fluctuator_bath(&stable, 1).map_err(|e| e.to_string())?;
    let psd = noise::periodogram_psd(&trace, false).map_err(|e| e.to_string())?;
    let fit = noise::fit_psd_segments(&psd, 2, 50).map_err(|e| e.to_string())?;
    let low = fit.segments.first().unwrap().exponent;
    let high = fit.segments.last().unwrap().exponent;
    ensure!(
        high.abs() < low.abs(),
        "no flattening: low {low}, high {high}"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 5. Change-point segmentation
// ---------------------------------------------------------------------------

fn c5_change_points() -> CriterionResult {
    let n_bins = 400;
    let knee = 40usize;
    let fs = 2000.0;
    let freqs: Vec<f64> = (0..=n_bins).map(|k| k as f64 * fs / (2 * n_bins) as f64).collect();
    let f_knee = freqs[knee];
    let power: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            if f <= 0.0 {
                0.0
            } else if f < f_knee {
                1.0 / f
            } else {
                1.0 / f_knee
            }
        })
        .collect();
    let psd = noise::PsdResult {
        freqs_hz: freqs,
        power,
        fs_hz: fs,
        detrended: false,
    };
    let fit = noise::fit_psd_segments(&psd, 2, 5).map_err(|e| e.to_string())?;
    ensure!(
        fit.change_points.len() <= 2,
        "{} change points, max 2 allowed",
        fit.change_points.len()
    );
    ensure!(!fit.change_points.is_empty(), "knee not detected at all");
    // change_points index the positive-frequency bins (DC dropped), so the
    // knee bin 40 maps to filtered index 39.
    let nearest = fit
        .change_points
        .iter()
        .map(|&c| (c as i64 - 39).unsigned_abs())
        .min()
        .unwrap();
    ensure!(nearest <= 2, "knee missed by {nearest} bins: {:?}", fit.change_points);
    let first = fit.segments.first().unwrap().exponent;
    let last = fit.segments.last().unwrap().exponent;
    ensure!((first + 1.0).abs() <= 0.1, "low slope {first}, want -1");
    ensure!(last.abs() <= 0.1, "high slope {last}, want 0");
    Ok(())
}

// ---------------------------------------------------------------------------
// 6. Forecaster correctness
// ---------------------------------------------------------------------------

fn c6_forecaster_correctness() -> CriterionResult {
    // Gradient check over 20 seeds.
    let hp = Hyperparams {
        hidden_size: 5,
        sequence_length: 6,
        num_layers: 2,
        dropout: 0.0,
        learning_rate: 1e-3,
    };
    for seed in 0..20u64 {
        let err = forecast::gradient_check(&hp, seed, 150).map_err(|e| e.to_string())?;
        ensure!(err < 1e-4, "gradient check seed {seed}: {err}");
    }

    // Train a small model once; use it for the remaining checks.
    let n = 200;
    let base: Vec<f64> = (0..n)
        .map(|i| 539.55 + 0.02 * (2.0 * std::f64::consts::PI * i as f64 / 25.0).sin())
        .collect();
    let small = Hyperparams {
        hidden_size: 8,
        sequence_length: 8,
        num_layers: 1,
        dropout: 0.0,
        learning_rate: 1e-3,
    };
    let model = forecast::train(&trace_from(base.clone(), 2000.0), &small, (8, 1, 1), 21, 80, 20)
        .map_err(|e| e.to_string())?;

    // Attention simplex on every forward.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let len = rng.random_range(2..=8usize);
        let window: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let (_, alpha) = model.forward(&window).map_err(|e| e.to_string())?;
        ensure!(alpha.len() == len, "attention length mismatch");
        ensure!(alpha.iter().all(|&a| a >= 0.0), "negative attention weight");
        let s: f64 = alpha.iter().sum();
        ensure!((s - 1.0).abs() < 1e-9, "attention sum {s}");
    }

    // Denormalization round trip.
    for &v in &[539.0, 539.55, 540.123456] {
        let rt = model.denormalize(model.normalize(v));
        ensure!((rt - v).abs() / v < 1e-10, "round trip {v} -> {rt}");
    }

    // Shift equivariance within 1e-8 nm.
    let shifted: Vec<f64> = base.iter().map(|v| v + 3.0).collect();
    let m2 = forecast::train(&trace_from(shifted.clone(), 2000.0), &small, (8, 1, 1), 21, 80, 20)
        .map_err(|e| e.to_string())?;
    let f1 = model
        .autoregressive_forecast(&trace_from(base, 2000.0), 8, false)
        .map_err(|e| e.to_string())?;
    let f2 = m2
        .autoregressive_forecast(&trace_from(shifted, 2000.0), 8, false)
        .map_err(|e| e.to_string())?;
    for (a, b) in f1.predictions_nm.iter().zip(&f2.predictions_nm) {
        ensure!((a + 3.0 - b).abs() < 1e-8, "shift equivariance: {a} + 3 vs {b}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 7. Forecaster skill on the sinusoid + OU fixture
// ---------------------------------------------------------------------------

fn c7_forecaster_skill() -> CriterionResult {
    // Sinusoid plus a weak exactly-discretized OU process.
    let n = 600;
    let fs = 2000.0;
    let theta: f64 = 20.0;
    let sigma2: f64 = 1e-5;
    let dt = 1.0 / fs;
    let decay = (-theta * dt).exp();
    let inc_std = (sigma2 / (2.0 * theta) * (1.0 - decay * decay)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut ou = 0.0;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let v = 539.55 + 0.04 * (2.0 * std::f64::consts::PI * i as f64 / 36.0).sin() + ou;
            let z: f64 = rng.sample(StandardNormal);
            ou = ou * decay + inc_std * z;
            v
        })
        .collect();
    let trace = trace_from(values, fs);

    let cfg = BenchmarkConfig {
        models: vec![ModelKind::BiAttnLstm, ModelKind::Linear],
        schemes: eval::reference_schemes().to_vec(),
        horizon: 8,
        seed: 17,
        hpo_trials: 0,
        fixed_hp: Some(Hyperparams {
            hidden_size: 16,
            sequence_length: 12,
            num_layers: 1,
            dropout: 0.0,
            learning_rate: 3e-3,
        }),
        space: forecast::SearchSpace::default(),
        max_epochs: 150,
        patience: 20,
        adapt: false,
    };
    let report = eval::partition_benchmark(&trace, &cfg).map_err(|e| e.to_string())?;

    let mut lstm = Vec::new();
    let mut wins = 0;
    for scheme in &cfg.schemes {
        let get = |kind: ModelKind| {
            report
                .cells
                .iter()
                .find(|c| c.model == kind && c.scheme == *scheme)
                .map(|c| c.rmse_nm)
                .unwrap()
        };
        let l = get(ModelKind::BiAttnLstm);
        let lin = get(ModelKind::Linear);
        if l <= lin {
            wins += 1;
        }
        lstm.push(l);
    }
    ensure!(wins >= 3, "Bi-Attn-LSTM beat linear in only {wins} of 4 schemes");
    let max = lstm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = lstm.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = lstm.iter().sum::<f64>() / lstm.len() as f64;
    let spread = (max - min) / mean;
    ensure!(spread < 0.25, "RMSE spread across schemes {spread:.3} >= 0.25");
    Ok(())
}

// ---------------------------------------------------------------------------
// 8. Pipeline round trip and the ZPL-vs-Raman stability contrast
// ---------------------------------------------------------------------------

fn c8_pipeline_round_trip() -> CriterionResult {
    let (mut bath, render) = simulator::preset("stable").map_err(|e| e.to_string())?;
    bath.n_frames = 1000;
    let injected = simulator::simulate_fluctuator_bath(&bath, 8).map_err(|e| e.to_string())?;
    let series = simulator::synthesize_spectra(&injected, &render, 8).map_err(|e| e.to_string())?;
    let bin_width = series.bin_width_nm();
    let (zpl, raman) =
        peakfit::extract_traces(&series, (538.0, 542.0), (546.9, 548.0)).map_err(|e| e.to_string())?;

    let rms = {
        let se: f64 = zpl
            .values()
            .iter()
            .zip(injected.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (se / zpl.len() as f64).sqrt()
    };
    ensure!(
        rms < 0.2 * bin_width,
        "recovered trace RMS {rms} >= 0.2 x bin width {}",
        0.2 * bin_width
    );

    let raman_std = std_dev(raman.values());
    let zpl_std = std_dev(zpl.values());
    ensure!(
        raman_std < 0.05 * bin_width,
        "Raman std {raman_std} >= 0.05 x bin width"
    );
    ensure!(
        zpl_std >= 10.0 * raman_std,
        "stability contrast too weak: zpl {zpl_std}, raman {raman_std}"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 9. g² fits
// ---------------------------------------------------------------------------

fn c9_g2_fit() -> CriterionResult {
    let g2 = |t: f64, g0: f64, tau: f64| 1.0 - (1.0 - g0) * (-t.abs() / tau).exp();
    let (g0, tau) = (0.3, 1e-8);
    let delays: Vec<f64> = (-25..25).map(|i| i as f64 * 2e-9).collect();
    let exact: Vec<f64> = delays.iter().map(|&t| g2(t, g0, tau)).collect();
    let fit = peakfit::fit_g2(&delays, &exact).map_err(|e| e.to_string())?;
    ensure!((fit.g2_0 - g0).abs() / g0 < 1e-6, "exact g2_0 {}", fit.g2_0);
    ensure!(
        (fit.tau_antibunch_s - tau).abs() / tau < 1e-6,
        "exact tau {}",
        fit.tau_antibunch_s
    );
    // g²(0) identity of the fitted model.
    let at_zero = g2(0.0, fit.g2_0, fit.tau_antibunch_s);
    ensure!((at_zero - fit.g2_0).abs() < 1e-12, "g2(0) identity violated");

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noisy: Vec<f64> = exact
        .iter()
        .map(|&v| v + 0.02 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let fit = peakfit::fit_g2(&delays, &noisy).map_err(|e| e.to_string())?;
    ensure!((fit.g2_0 - g0).abs() / g0 < 0.05, "noisy g2_0 {}", fit.g2_0);
    ensure!(
        (fit.tau_antibunch_s - tau).abs() / tau < 0.05,
        "noisy tau {}",
        fit.tau_antibunch_s
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 10. Byte-level determinism of stochastic subcommands (golden files)
// ---------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_specdiff"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPECDIFF_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn c10_determinism() -> CriterionResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();

    // Third configuration: a custom bath beside the two named presets.
    std::fs::write(
        d.join("custom.json"),
        r#"{
  "bath": {
    "n_fluctuators": 10, "rate_range_hz": [1.0, 50.0], "coupling_scale_nm": 0.05,
    "base_wavelength_nm": 540.5,
    "drift": {"reversion_rate_hz": 40.0, "diffusion_nm2_per_s": 0.0002},
    "measurement_noise_nm": 0.004, "fs_hz": 2000.0, "n_frames": 150
  },
  "render": {
    "axis_start_nm": 537.0, "axis_end_nm": 549.0, "n_bins": 320,
    "zpl_fwhm_nm": 0.3, "zpl_amplitude": 2000.0,
    "raman_center_nm": 547.44, "raman_fwhm_nm": 0.1, "raman_amplitude": 1500.0,
    "background": 20.0, "shot_noise": true
  }
}"#,
    )
    .map_err(|e| e.to_string())?;

    let cases: Vec<(&str, Vec<String>)> = vec![
        (
            "stable",
            vec![
                "simulate", "--preset", "stable", "--seed", "7", "--frames", "150", "-o", "OUT",
                "--trace-out", "TRACE",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "unstable",
            vec![
                "simulate", "--preset", "unstable", "--seed", "7", "--frames", "150", "-o", "OUT",
                "--trace-out", "TRACE",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "custom",
            vec!["simulate", "--config", "custom.json", "--seed", "7", "-o", "OUT", "--trace-out", "TRACE"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
    ];

    for (name, template) in &cases {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = format!("{name}_{rep}.csv");
            let tr = format!("{name}_{rep}_trace.csv");
            let args: Vec<String> = template
                .iter()
                .map(|a| match a.as_str() {
                    "OUT" => out.clone(),
                    "TRACE" => tr.clone(),
                    other => other.to_string(),
                })
                .collect();
            let argrefs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
            run_cli(d, &argrefs).map_err(|e| format!("{name} rep {rep}: {e}"))?;
            let text = std::fs::read_to_string(d.join(&out)).map_err(|e| e.to_string())?
                + &std::fs::read_to_string(d.join(&tr)).map_err(|e| e.to_string())?;
            outputs.push(text);
        }
        ensure!(outputs[0] == outputs[1], "preset {name}: reruns differ");
    }

    // Training is stochastic too: same seed, same checkpoint bytes.
    std::fs::write(
        d.join("hp.json"),
        r#"{"hidden_size":6,"sequence_length":6,"num_layers":1,"dropout":0.0,"learning_rate":0.003}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut models = Vec::new();
    for rep in 0..2 {
        let out = format!("model_{rep}.json");
        run_cli(
            d,
            &[
                "train", "-i", "stable_0_trace.csv", "--seed", "3", "--hp-config", "hp.json",
                "--max-epochs", "15", "-o", &out,
            ],
        )
        .map_err(|e| format!("train rep {rep}: {e}"))?;
        models.push(std::fs::read_to_string(d.join(&out)).map_err(|e| e.to_string())?);
    }
    ensure!(models[0] == models[1], "train reruns differ");
    Ok(())
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(&str, fn() -> CriterionResult)> = vec![
        ("1. GHz arithmetic (294/94/44.3 GHz, factors 2.1x/15.8x)", c1_ghz_arithmetic),
        ("2. replica overlap properties + 10-window evolution", c2_replica_overlap),
        ("3. ACF band coverage + AR(1) recovery", c3_acf_band),
        ("4. PSD fidelity (Parseval, peak bin, bath slope, flattening)", c4_psd_fidelity),
        ("5. change-point segmentation (knee +-2 bins, slopes +-0.1)", c5_change_points),
        ("6. forecaster correctness (gradients, attention, shifts)", c6_forecaster_correctness),
        ("7. forecaster skill vs linear baseline across schemes", c7_forecaster_skill),
        ("8. pipeline round trip + Raman stability contrast", c8_pipeline_round_trip),
        ("9. g2 fits (exact, noisy, g2(0) identity)", c9_g2_fit),
        ("10. seeded determinism of stochastic subcommands", c10_determinism),
    ];

    let mut failed = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
