//! Quantitative comparison harness: RMSE across train:val:test partition
//! schemes, wavelength-to-frequency mismatch conversion, and improvement
//! factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{
    self, ForecastResult, Hyperparams, ModelKind, SearchSpace, TrainedForecaster,
};
use crate::linalg;
use crate::model::ZplTrace;

pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

// ---------------------------------------------------------------------------
// GHz arithmetic
// ---------------------------------------------------------------------------

/// Frequency mismatch between two wavelengths:
/// `Δν = c |λ_a − λ_b| / (λ_a λ_b)`, wavelengths in nm, result in GHz.
/// The exact two-wavelength form; reduces to `c Δλ / λ²` to first order.
pub fn shift_to_frequency_ghz(lambda_a_nm: f64, lambda_b_nm: f64) -> Result<f64> {
    if !(lambda_a_nm > 0.0) || !(lambda_b_nm > 0.0) {
        return Err(Error::InvalidInput("wavelengths must be positive".into()));
    }
    if (lambda_a_nm - lambda_b_nm).abs() > 100.0 {
        return Err(Error::InvalidInput(
            "wavelengths differ by more than 100 nm".into(),
        ));
    }
    // With both wavelengths in nm, c[m/s]·Δλ/(λ_a λ_b) carries units of
    // 1e9 / s, i.e. GHz.
    Ok(SPEED_OF_LIGHT_M_PER_S * (lambda_a_nm - lambda_b_nm).abs() / (lambda_a_nm * lambda_b_nm))
}

/// One row of the per-step mismatch table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MismatchRow {
    /// 1-based forecast step.
    pub step: usize,
    /// Raw step-to-step shift Δν(actual[k−1], actual[k]).
    pub actual_ghz: f64,
    /// Remaining mismatch Δν(actual[k], predicted[k]).
    pub residual_ghz: f64,
    /// actual/residual; `None` when the residual is zero (∞-capped).
    pub factor: Option<f64>,
}

/// Per-step improvement table: how much of each raw spectral jump the
/// forecast removes. `actual` must carry the last observed point followed by
/// the `horizon` true future values (length horizon + 1).
pub fn mismatch_improvement(actual: &ZplTrace, forecast: &ForecastResult) -> Result<Vec<MismatchRow>> {
    let vals = actual.values();
    if vals.len() != forecast.horizon + 1 {
        return Err(Error::InvalidInput(format!(
            "actual segment has {} points; need horizon + 1 = {}",
            vals.len(),
            forecast.horizon + 1
        )));
    }
    let mut rows = Vec::with_capacity(forecast.horizon);
    for k in 1..=forecast.horizon {
        let actual_ghz = shift_to_frequency_ghz(vals[k - 1], vals[k])?;
        let residual_ghz = shift_to_frequency_ghz(vals[k], forecast.predictions_nm[k - 1])?;
        let factor = if residual_ghz > 0.0 {
            Some(actual_ghz / residual_ghz)
        } else {
            None
        };
        if let Some(f) = factor {
            // Definition-level assertion: improvement > 1 iff the predicted
            // residual is smaller than the raw step shift.
            debug_assert_eq!(f > 1.0, residual_ghz < actual_ghz);
        }
        rows.push(MismatchRow {
            step: k,
            actual_ghz,
            residual_ghz,
            factor,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Partition schemes
// ---------------------------------------------------------------------------

/// train:val:test integer triple summing to 10, every part >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub train: u8,
    pub val: u8,
    pub test: u8,
}

impl PartitionScheme {
    pub fn new(train: u8, val: u8, test: u8) -> Result<Self> {
        let s = Self { train, val, test };
        forecast::split_bounds(10, s.as_tuple())?;
        Ok(s)
    }

    pub fn as_tuple(&self) -> (u8, u8, u8) {
        (self.train, self.val, self.test)
    }

    pub fn label(&self) -> String {
        format!("{}:{}:{}", self.train, self.val, self.test)
    }
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "partition scheme '{s}' must look like 8:1:1"
            )));
        }
        let mut nums = [0u8; 3];
        for (n, p) in nums.iter_mut().zip(&parts) {
            *n = p
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad partition scheme '{s}'")))?;
        }
        PartitionScheme::new(nums[0], nums[1], nums[2])
    }
}

/// The four schemes benchmarked in the study.
pub fn reference_schemes() -> [PartitionScheme; 4] {
    [
        PartitionScheme { train: 5, val: 4, test: 1 },
        PartitionScheme { train: 6, val: 3, test: 1 },
        PartitionScheme { train: 7, val: 2, test: 1 },
        PartitionScheme { train: 8, val: 1, test: 1 },
    ]
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

/// Benchmark configuration. With `hpo_trials = 0` the Bi-Attn-LSTM uses
/// `fixed_hp`; otherwise a random search over `space` picks the model per
/// scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub models: Vec<ModelKind>,
    pub schemes: Vec<PartitionScheme>,
    pub horizon: usize,
    pub seed: u64,
    pub hpo_trials: usize,
    pub fixed_hp: Option<Hyperparams>,
    pub space: SearchSpace,
    pub max_epochs: usize,
    pub patience: usize,
    /// Self-adaptive window mechanism during autoregressive evaluation.
    pub adapt: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            models: vec![
                ModelKind::BiAttnLstm,
                ModelKind::Linear,
                ModelKind::Poly5,
                ModelKind::Sine,
            ],
            schemes: reference_schemes().to_vec(),
            horizon: forecast::DEFAULT_HORIZON,
            seed: 0,
            hpo_trials: 0,
            fixed_hp: Some(Hyperparams {
                hidden_size: 16,
                sequence_length: 12,
                num_layers: 1,
                dropout: 0.0,
                learning_rate: 3e-3,
            }),
            space: SearchSpace::default(),
            max_epochs: forecast::DEFAULT_MAX_EPOCHS,
            patience: forecast::DEFAULT_PATIENCE,
            adapt: false,
        }
    }
}

/// One cell of the grouped model-by-scheme results table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: ModelKind,
    pub scheme: PartitionScheme,
    /// Test RMSE in units of the training-split std.
    pub rmse_norm: f64,
    /// Test RMSE in nm.
    pub rmse_nm: f64,
}

/// Full benchmark output plus the per-step mismatch table of the
/// best-scoring Bi-Attn-LSTM cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub horizon: usize,
    pub cells: Vec<EvalCell>,
}

fn derive_seed(base: u64, scheme_idx: usize, model_idx: usize) -> u64 {
    // splitmix64 finalizer over a cell-unique input.
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(1 + scheme_idx as u64 * 17 + model_idx as u64));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Forecast origins covering the test segment in non-overlapping
/// horizon-length blocks.
fn test_origins(n: usize, b1: usize, horizon: usize) -> Vec<usize> {
    (b1..=n.saturating_sub(horizon)).step_by(horizon).collect()
}

/// Train (or fit) each model per scheme and score `horizon`-step
/// autoregressive forecasts over the test segment. The LSTM conditions on
/// all actual values before each forecast origin; baselines are fit on the
/// training split only and extrapolated (no leakage). Deterministic per seed.
pub fn partition_benchmark(trace: &ZplTrace, cfg: &BenchmarkConfig) -> Result<EvalReport> {
    if cfg.horizon < 1 {
        return Err(Error::InvalidInput("horizon must be >= 1".into()));
    }
    let vals = trace.values();
    let n = vals.len();
    let mut cells = Vec::with_capacity(cfg.schemes.len() * cfg.models.len());

    for (si, scheme) in cfg.schemes.iter().enumerate() {
        let (b0, b1) = forecast::split_bounds(n, scheme.as_tuple())?;
        if n - b1 < cfg.horizon {
            return Err(Error::InvalidInput(format!(
                "scheme {} leaves {} test samples, fewer than the horizon {}",
                scheme.label(),
                n - b1,
                cfg.horizon
            )));
        }
        let origins = test_origins(n, b1, cfg.horizon);
        let sigma_train = population_std(&vals[..b0]);
        if !(sigma_train > 0.0) {
            return Err(Error::InvalidInput("degenerate training split".into()));
        }

        for (mi, model) in cfg.models.iter().enumerate() {
            let cell_seed = derive_seed(cfg.seed, si, mi);
            let mut se = 0.0;
            let mut count = 0usize;
            match model {
                ModelKind::BiAttnLstm => {
                    let trained = train_lstm_for_scheme(trace, scheme, cfg, cell_seed)?;
                    for &origin in &origins {
                        let history = trace.slice(0..origin)?;
                        let fc = trained.autoregressive_forecast(&history, cfg.horizon, cfg.adapt)?;
                        for (k, &p) in fc.predictions_nm.iter().enumerate() {
                            let e = p - vals[origin + k];
                            se += e * e;
                            count += 1;
                        }
                    }
                }
                baseline => {
                    // Fit on the training split only, forecast by
                    // extrapolating the fitted curve to absolute indices.
                    let preds = baseline_test_predictions(vals, b0, &origins, cfg.horizon, *baseline)?;
                    for (&origin, block) in origins.iter().zip(&preds) {
                        for (k, &p) in block.iter().enumerate() {
                            let e = p - vals[origin + k];
                            se += e * e;
                            count += 1;
                        }
                    }
                }
            }
            let rmse_nm = (se / count as f64).sqrt();
            cells.push(EvalCell {
                model: *model,
                scheme: *scheme,
                rmse_norm: rmse_nm / sigma_train,
                rmse_nm,
            });
        }
    }

    Ok(EvalReport {
        seed: cfg.seed,
        horizon: cfg.horizon,
        cells,
    })
}

fn train_lstm_for_scheme(
    trace: &ZplTrace,
    scheme: &PartitionScheme,
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<TrainedForecaster> {
    if cfg.hpo_trials > 0 {
        let (model, _) = forecast::hyperparameter_search(
            trace,
            &cfg.space,
            cfg.hpo_trials,
            scheme.as_tuple(),
            seed,
            cfg.max_epochs,
            cfg.patience,
        )?;
        Ok(model)
    } else {
        let hp = cfg.fixed_hp.ok_or_else(|| {
            Error::InvalidInput("hpo_trials = 0 requires fixed_hp".into())
        })?;
        forecast::train(trace, &hp, scheme.as_tuple(), seed, cfg.max_epochs, cfg.patience)
    }
}

fn baseline_test_predictions(
    vals: &[f64],
    b0: usize,
    origins: &[usize],
    horizon: usize,
    kind: ModelKind,
) -> Result<Vec<Vec<f64>>> {
    let x: Vec<f64> = (0..b0).map(|i| i as f64).collect();
    let y = &vals[..b0];
    let predict: Box<dyn Fn(f64) -> f64> = match kind {
        ModelKind::Linear => {
            let (s, i, _, _) = linalg::ols_line(&x, y);
            Box::new(move |xf| s * xf + i)
        }
        ModelKind::Poly5 => {
            let c = linalg::polyfit(&x, y, 5)?;
            Box::new(move |xf| linalg::polyval(&c, xf))
        }
        ModelKind::Sine => {
            let [a, w, phi, c] = forecast::fit_sine(&x, y)?;
            Box::new(move |xf| a * (w * xf + phi).sin() + c)
        }
        ModelKind::BiAttnLstm => {
            return Err(Error::InvalidInput("not a baseline".into()));
        }
    };
    Ok(origins
        .iter()
        .map(|&o| (0..horizon).map(|k| predict((o + k) as f64)).collect())
        .collect())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
