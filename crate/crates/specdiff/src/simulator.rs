//! Physics-motivated synthetic emitter.
//!
//! An ensemble of two-state fluctuators with log-uniform switching rates,
//! plus Ornstein-Uhlenbeck drift and measurement noise, generates the ZPL
//! wavelength trace; frames are rendered as Lorentzian ZPL + static Raman
//! reference + background with optional shot noise. This is the pipeline's
//! ground-truth oracle.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SpectralSeries, ZplTrace};
use crate::peakfit::lorentzian;

/// Ornstein-Uhlenbeck drift parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OuParams {
    /// Mean-reversion rate θ in 1/s. Zero degenerates to Brownian motion.
    pub reversion_rate_hz: f64,
    /// Diffusion σ² in nm²/s.
    pub diffusion_nm2_per_s: f64,
}

impl OuParams {
    pub fn none() -> Self {
        Self {
            reversion_rate_hz: 0.0,
            diffusion_nm2_per_s: 0.0,
        }
    }
}

/// Configuration of the fluctuator bath.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluctuatorBathConfig {
    pub n_fluctuators: usize,
    /// Switching rates are sampled log-uniformly from this interval (Hz).
    pub rate_range_hz: (f64, f64),
    /// Total coupling scale; each fluctuator contributes
    /// `coupling_scale_nm / sqrt(n)` peak-to-peak.
    pub coupling_scale_nm: f64,
    pub base_wavelength_nm: f64,
    pub drift: OuParams,
    pub measurement_noise_nm: f64,
    pub fs_hz: f64,
    pub n_frames: usize,
}

impl FluctuatorBathConfig {
    fn validate(&self) -> Result<()> {
        if self.n_fluctuators < 1 {
            return Err(Error::InvalidInput("need at least 1 fluctuator".into()));
        }
        let (lo, hi) = self.rate_range_hz;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidInput(
                "rate_range must be positive and ordered".into(),
            ));
        }
        if !(self.fs_hz > 0.0) {
            return Err(Error::InvalidInput("fs must be positive".into()));
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidInput("n_frames must be positive".into()));
        }
        if self.coupling_scale_nm < 0.0
            || self.measurement_noise_nm < 0.0
            || self.drift.reversion_rate_hz < 0.0
            || self.drift.diffusion_nm2_per_s < 0.0
        {
            return Err(Error::InvalidInput("negative noise parameter".into()));
        }
        Ok(())
    }
}

/// Frame rendering configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRenderConfig {
    pub axis_start_nm: f64,
    pub axis_end_nm: f64,
    pub n_bins: usize,
    pub zpl_fwhm_nm: f64,
    pub zpl_amplitude: f64,
    /// Static substrate reference line; 547.44 nm by default.
    pub raman_center_nm: f64,
    pub raman_fwhm_nm: f64,
    pub raman_amplitude: f64,
    pub background: f64,
    pub shot_noise: bool,
}

impl FrameRenderConfig {
    fn validate(&self) -> Result<()> {
        if self.n_bins < 32 {
            return Err(Error::InvalidInput("need at least 32 bins".into()));
        }
        if !(self.axis_end_nm > self.axis_start_nm) {
            return Err(Error::InvalidInput("axis range empty".into()));
        }
        if self.raman_center_nm < self.axis_start_nm || self.raman_center_nm > self.axis_end_nm {
            return Err(Error::InvalidInput(
                "axis does not cover the Raman line".into(),
            ));
        }
        if self.zpl_fwhm_nm <= 0.0 || self.raman_fwhm_nm <= 0.0 {
            return Err(Error::InvalidInput("fwhm must be positive".into()));
        }
        Ok(())
    }

    pub fn axis(&self) -> Vec<f64> {
        let step = (self.axis_end_nm - self.axis_start_nm) / (self.n_bins - 1) as f64;
        (0..self.n_bins)
            .map(|i| self.axis_start_nm + i as f64 * step)
            .collect()
    }
}

/// Sampled bath realization: the switching rates and amplitudes actually
/// drawn for a given seed. Used by the analytic PSD oracle.
#[derive(Debug, Clone)]
pub struct BathRealization {
    pub rates_hz: Vec<f64>,
    pub amplitudes_nm: Vec<f64>,
}

/// Analytic one-sided PSD of a telegraph process with flip rate `gamma`
/// (waiting times Exp(gamma)) and values ±a/2:
/// `S(f) = a² γ / (2 (γ² + π² f²))`.
pub fn telegraph_psd(a: f64, gamma: f64, f: f64) -> f64 {
    a * a * gamma / (2.0 * (gamma * gamma + std::f64::consts::PI.powi(2) * f * f))
}

/// Analytic one-sided PSD of the whole bath (sum of telegraph Lorentzians).
pub fn analytic_bath_psd(bath: &BathRealization, f: f64) -> f64 {
    bath.rates_hz
        .iter()
        .zip(&bath.amplitudes_nm)
        .map(|(&g, &a)| telegraph_psd(a, g, f))
        .sum()
}

/// Generate a ZPL trace from the fluctuator bath. Deterministic per seed.
pub fn simulate_fluctuator_bath(cfg: &FluctuatorBathConfig, seed: u64) -> Result<ZplTrace> {
    simulate_fluctuator_bath_detailed(cfg, seed).map(|(t, _)| t)
}

/// As [`simulate_fluctuator_bath`] but also returns the sampled realization
/// for oracle checks.
pub fn simulate_fluctuator_bath_detailed(
    cfg: &FluctuatorBathConfig,
    seed: u64,
) -> Result<(ZplTrace, BathRealization)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_frames;
    let dt = 1.0 / cfg.fs_hz;
    let amp = cfg.coupling_scale_nm / (cfg.n_fluctuators as f64).sqrt();

    let (lo, hi) = cfg.rate_range_hz;
    let mut rates_hz = Vec::with_capacity(cfg.n_fluctuators);
    let mut amplitudes_nm = Vec::with_capacity(cfg.n_fluctuators);
    let mut values = vec![cfg.base_wavelength_nm; n];

    for _ in 0..cfg.n_fluctuators {
        let gamma = if hi > lo {
            (rng.random::<f64>() * (hi.ln() - lo.ln()) + lo.ln()).exp()
        } else {
            lo
        };
        rates_hz.push(gamma);
        amplitudes_nm.push(amp);

        // Exact telegraph sampling: exponential waiting times, so the
        // process is correct at any sampling rate.
        let mut state: f64 = if rng.random::<bool>() { 0.5 } else { -0.5 };
        let mut t_switch = -rng.random::<f64>().ln() / gamma;
        for (i, v) in values.iter_mut().enumerate() {
            let t = i as f64 * dt;
            while t_switch <= t {
                state = -state;
                t_switch += -rng.random::<f64>().ln() / gamma;
            }
            *v += amp * state;
        }
    }

    // OU drift, exact discretization.
    if cfg.drift.diffusion_nm2_per_s > 0.0 {
        let theta = cfg.drift.reversion_rate_hz;
        let sigma2 = cfg.drift.diffusion_nm2_per_s;
        let (decay, inc_std) = if theta > 0.0 {
            let d = (-theta * dt).exp();
            (d, (sigma2 / (2.0 * theta) * (1.0 - d * d)).sqrt())
        } else {
            (1.0, (sigma2 * dt).sqrt())
        };
        let mut ou = 0.0;
        for v in values.iter_mut() {
            *v += ou;
            let z: f64 = rng.sample(StandardNormal);
            ou = ou * decay + inc_std * z;
        }
    }

    if cfg.measurement_noise_nm > 0.0 {
        for v in values.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += cfg.measurement_noise_nm * z;
        }
    }

    let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let trace = ZplTrace::new(t, values, "simulated")?;
    Ok((
        trace,
        BathRealization {
            rates_hz,
            amplitudes_nm,
        },
    ))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Render full spectrometer frames for a ZPL trace: Lorentzian ZPL at the
/// trace value, static Raman line, constant background, optional Poisson
/// shot noise (Gaussian approximation above 1000 expected counts).
/// Deterministic per seed, with per-frame derived sub-seeds.
pub fn synthesize_spectra(
    trace: &ZplTrace,
    cfg: &FrameRenderConfig,
    seed: u64,
) -> Result<SpectralSeries> {
    cfg.validate()?;
    let margin = cfg.zpl_fwhm_nm;
    let lo = cfg.axis_start_nm + margin;
    let hi = cfg.axis_end_nm - margin;
    for &v in trace.values() {
        if v < lo || v > hi {
            return Err(Error::InvalidInput(format!(
                "trace value {v} nm exits the renderable range [{lo}, {hi}]"
            )));
        }
    }
    let axis = cfg.axis();
    let frame_interval = trace.step_s().unwrap_or(5e-4);

    let mut frames = Vec::with_capacity(trace.len());
    for (i, &center) in trace.values().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed).wrapping_add(i as u64));
        let frame: Vec<f64> = axis
            .iter()
            .map(|&w| {
                let expected = lorentzian(w, center, cfg.zpl_fwhm_nm, cfg.zpl_amplitude, 0.0)
                    + lorentzian(
                        w,
                        cfg.raman_center_nm,
                        cfg.raman_fwhm_nm,
                        cfg.raman_amplitude,
                        0.0,
                    )
                    + cfg.background;
                if !cfg.shot_noise || expected <= 0.0 {
                    expected
                } else if expected > 1000.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    (expected + expected.sqrt() * z).round().max(0.0)
                } else {
                    let p = Poisson::new(expected).expect("positive mean");
                    rng.sample::<f64, _>(p)
                }
            })
            .collect();
        frames.push(frame);
    }
    SpectralSeries::new(axis, frames, frame_interval, trace.timestamps()[0])
}

/// Named presets mirroring the two emitters: `stable` has a narrower rate
/// range and weaker coupling (with a visible measurement-noise floor),
/// `unstable` a broad rate distribution and stronger coupling.
pub fn preset(name: &str) -> Result<(FluctuatorBathConfig, FrameRenderConfig)> {
    let render = |base: f64| FrameRenderConfig {
        axis_start_nm: base - 3.0,
        axis_end_nm: 549.0,
        n_bins: 640,
        zpl_fwhm_nm: 0.3,
        zpl_amplitude: 2000.0,
        raman_center_nm: 547.44,
        raman_fwhm_nm: 0.1,
        raman_amplitude: 1500.0,
        background: 20.0,
        shot_noise: true,
    };
    match name {
        "stable" => Ok((
            FluctuatorBathConfig {
                n_fluctuators: 30,
                rate_range_hz: (0.5, 20.0),
                coupling_scale_nm: 0.03,
                base_wavelength_nm: 539.55,
                drift: OuParams {
                    reversion_rate_hz: 40.0,
                    diffusion_nm2_per_s: 2e-4,
                },
                measurement_noise_nm: 0.006,
                fs_hz: 2000.0,
                n_frames: 10_000,
            },
            render(539.55),
        )),
        "unstable" => Ok((
            FluctuatorBathConfig {
                n_fluctuators: 50,
                rate_range_hz: (0.1, 100.0),
                coupling_scale_nm: 0.12,
                base_wavelength_nm: 544.0,
                drift: OuParams {
                    reversion_rate_hz: 40.0,
                    diffusion_nm2_per_s: 1e-3,
                },
                measurement_noise_nm: 0.002,
                fs_hz: 2000.0,
                n_frames: 10_000,
            },
            render(544.0),
        )),
        other => Err(Error::InvalidInput(format!(
            "unknown preset '{other}' (expected 'stable' or 'unstable')"
        ))),
    }
}
