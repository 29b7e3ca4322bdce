//! Spectral-diffusion analysis and anticipatory forecasting for solid-state
//! quantum emitters.
//!
//! The crate covers the full pipeline from raw spectrometer frames to
//! forward predictions of the zero-phonon-line (ZPL) wavelength:
//!
//! * [`model`] — canonical data types ([`SpectralSeries`], [`ZplTrace`]) and
//!   CSV ingestion/serialization.
//! * [`peakfit`] — bounded trust-region nonlinear least squares, per-frame
//!   Lorentzian peak extraction, and g²(τ) antibunching fits.
//! * [`replica`] — replica-overlap order parameter statistics (overlap
//!   matrix, |q| histograms, sliding-window evolution).
//! * [`noise`] — memory diagnostics: autocorrelation with confidence bands,
//!   periodogram PSD, power-law fits, RMS change-point segmentation.
//! * [`simulator`] — two-state-fluctuator bath with OU drift generating
//!   synthetic ZPL traces and full spectrometer frames.
//! * [`forecast`] — attention-based bidirectional LSTM with autoregressive
//!   multi-step prediction, hyperparameter search, and classical baselines.
//! * [`eval`] — RMSE benchmark across partition schemes and GHz mismatch
//!   improvement factors.

pub mod error;
mod linalg;
pub mod model;
pub mod peakfit;
pub mod replica;
pub mod noise;
pub mod simulator;
pub mod forecast;
pub mod eval;

pub use error::{Error, Result};
pub use model::{Histogram, SpectralSeries, ZplTrace};
