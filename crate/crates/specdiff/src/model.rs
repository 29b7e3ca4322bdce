//! Canonical data types and CSV ingestion shared by every stage of the
//! pipeline.
//!
//! All types validate their invariants at construction and are immutable
//! afterwards, so downstream modules can assume well-formed input.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the sampling step when checking uniformity.
const STEP_TOLERANCE_S: f64 = 1e-9;

/// Time-ordered spectrometer frames on a shared wavelength axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSeries {
    wavelength_nm: Vec<f64>,
    /// Row-major intensities, one row per frame.
    frames: Vec<Vec<f64>>,
    frame_interval_s: f64,
    t0_s: f64,
}

impl SpectralSeries {
    pub fn new(
        wavelength_nm: Vec<f64>,
        frames: Vec<Vec<f64>>,
        frame_interval_s: f64,
        t0_s: f64,
    ) -> Result<Self> {
        if wavelength_nm.len() < 2 {
            return Err(Error::InvalidInput(
                "wavelength axis needs at least 2 bins".into(),
            ));
        }
        if !wavelength_nm.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFiniteValue { row: 0, col: 0 });
        }
        if wavelength_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicAxis);
        }
        if !(frame_interval_s > 0.0) {
            return Err(Error::InvalidInput("frame_interval must be > 0".into()));
        }
        for (i, frame) in frames.iter().enumerate() {
            if frame.len() != wavelength_nm.len() {
                return Err(Error::RaggedRow {
                    row: i,
                    got: frame.len(),
                    expected: wavelength_nm.len(),
                });
            }
            for (j, v) in frame.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue { row: i, col: j });
                }
                if *v < 0.0 {
                    return Err(Error::NegativeIntensity { row: i, col: j });
                }
            }
        }
        Ok(Self {
            wavelength_nm,
            frames,
            frame_interval_s,
            t0_s,
        })
    }

    pub fn wavelength_nm(&self) -> &[f64] {
        &self.wavelength_nm
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_bins(&self) -> usize {
        self.wavelength_nm.len()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frame_interval_s(&self) -> f64 {
        self.frame_interval_s
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    /// Acquisition time of frame `i`.
    pub fn frame_time_s(&self, i: usize) -> f64 {
        self.t0_s + i as f64 * self.frame_interval_s
    }

    /// Bin width of the wavelength axis (mean spacing).
    pub fn bin_width_nm(&self) -> f64 {
        let n = self.wavelength_nm.len();
        (self.wavelength_nm[n - 1] - self.wavelength_nm[0]) / (n - 1) as f64
    }

    /// Indices of axis bins inside `[lo, hi]` nm.
    pub fn window_bins(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.wavelength_nm.partition_point(|w| *w < lo);
        let end = self.wavelength_nm.partition_point(|w| *w <= hi);
        start..end
    }
}

/// Scalar wavelength-vs-time series: the central signal of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ZplTrace {
    t_s: Vec<f64>,
    lambda_nm: Vec<f64>,
    label: String,
}

impl ZplTrace {
    pub fn new(t_s: Vec<f64>, lambda_nm: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if t_s.len() != lambda_nm.len() {
            return Err(Error::InvalidInput(format!(
                "timestamp/value length mismatch: {} vs {}",
                t_s.len(),
                lambda_nm.len()
            )));
        }
        if t_s.is_empty() {
            return Err(Error::InvalidInput("empty trace".into()));
        }
        for (i, v) in t_s.iter().chain(lambda_nm.iter()).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: i % t_s.len(),
                    col: 0,
                });
            }
        }
        for i in 1..t_s.len() {
            if t_s[i] == t_s[i - 1] {
                return Err(Error::DuplicateTimestamp(i));
            }
            if t_s[i] < t_s[i - 1] {
                return Err(Error::NonIncreasingTime(i));
            }
        }
        if t_s.len() > 2 {
            let step = (t_s[t_s.len() - 1] - t_s[0]) / (t_s.len() - 1) as f64;
            for i in 1..t_s.len() {
                let dev = ((t_s[i] - t_s[i - 1]) - step).abs();
                if dev > STEP_TOLERANCE_S {
                    return Err(Error::NonUniformSampling {
                        index: i,
                        deviation: dev,
                    });
                }
            }
        }
        Ok(Self {
            t_s,
            lambda_nm,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.t_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_s.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.t_s
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda_nm
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Sampling step in seconds. Single-point traces have no defined step.
    pub fn step_s(&self) -> Option<f64> {
        if self.t_s.len() < 2 {
            None
        } else {
            Some((self.t_s[self.t_s.len() - 1] - self.t_s[0]) / (self.t_s.len() - 1) as f64)
        }
    }

    /// Sampling frequency in Hz.
    pub fn fs_hz(&self) -> Option<f64> {
        self.step_s().map(|s| 1.0 / s)
    }

    /// Sub-trace over index range `r`, keeping the label.
    pub fn slice(&self, r: std::ops::Range<usize>) -> Result<ZplTrace> {
        ZplTrace::new(
            self.t_s[r.clone()].to_vec(),
            self.lambda_nm[r].to_vec(),
            self.label.clone(),
        )
    }

    pub fn mean(&self) -> f64 {
        self.lambda_nm.iter().sum::<f64>() / self.lambda_nm.len() as f64
    }
}

/// Binned counts with explicit edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    /// Bin `values` into `bins` equal-width bins over `[lo, hi]`.
    /// Values outside the range are clamped into the edge bins.
    pub fn from_values(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidInput("need at least 2 bins".into()));
        }
        if !(hi > lo) {
            return Err(Error::InvalidInput("histogram range must be nonempty".into()));
        }
        let width = (hi - lo) / bins as f64;
        let bin_edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = (((v - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
            counts[idx] += 1;
        }
        Ok(Self {
            bin_edges,
            counts,
            total: values.len() as u64,
        })
    }
}

// --- CSV formats ------------------------------------------------------------
//
// Spectral series:
//   # frame_interval_s=<float> t0_s=<float>
//   wavelength_nm,<w1>,<w2>,...
//   <frame_index>,<i1>,<i2>,...
//
// ZPL trace:
//   t_s,lambda_nm
//   <t>,<lambda>

pub fn parse_spectral_series(path: impl AsRef<Path>) -> Result<SpectralSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spectral_series_str(&text)
}

pub fn parse_spectral_series_str(text: &str) -> Result<SpectralSeries> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::MalformedHeader("first line must start with '#'".into()))?;
    let mut frame_interval_s = None;
    let mut t0_s = None;
    for token in header.split_whitespace() {
        if let Some(v) = token.strip_prefix("frame_interval_s=") {
            frame_interval_s = Some(parse_float(v, 0, 0)?);
        } else if let Some(v) = token.strip_prefix("t0_s=") {
            t0_s = Some(parse_float(v, 0, 0)?);
        } else {
            return Err(Error::MalformedHeader(format!("unknown token '{token}'")));
        }
    }
    let frame_interval_s = frame_interval_s
        .ok_or_else(|| Error::MalformedHeader("missing frame_interval_s".into()))?;
    let t0_s = t0_s.ok_or_else(|| Error::MalformedHeader("missing t0_s".into()))?;

    let axis_line = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("missing wavelength axis line".into()))?;
    let mut fields = axis_line.split(',');
    if fields.next() != Some("wavelength_nm") {
        return Err(Error::MalformedHeader(
            "axis line must start with 'wavelength_nm'".into(),
        ));
    }
    let wavelength_nm: Vec<f64> = fields
        .enumerate()
        .map(|(j, f)| parse_float(f, 1, j + 1))
        .collect::<Result<_>>()?;

    let mut frames = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        // Leading field is the frame index; informational only.
        let _ = fields
            .next()
            .ok_or_else(|| Error::MalformedHeader(format!("empty row {row}")))?;
        let frame: Vec<f64> = fields
            .enumerate()
            .map(|(j, f)| parse_float(f, row + 2, j + 1))
            .collect::<Result<_>>()?;
        if frame.len() != wavelength_nm.len() {
            return Err(Error::RaggedRow {
                row,
                got: frame.len(),
                expected: wavelength_nm.len(),
            });
        }
        frames.push(frame);
    }
    SpectralSeries::new(wavelength_nm, frames, frame_interval_s, t0_s)
}

pub fn write_spectral_series(series: &SpectralSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, spectral_series_to_csv(series)).map_err(|e| Error::io(path, e))
}

pub fn spectral_series_to_csv(series: &SpectralSeries) -> String {
    let mut out = String::new();
    // `{}` on f64 prints the shortest representation that round-trips exactly.
    let _ = writeln!(
        out,
        "# frame_interval_s={} t0_s={}",
        series.frame_interval_s, series.t0_s
    );
    out.push_str("wavelength_nm");
    for w in &series.wavelength_nm {
        let _ = write!(out, ",{w}");
    }
    out.push('\n');
    for (i, frame) in series.frames.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in frame {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_zpl_trace(path: impl AsRef<Path>) -> Result<ZplTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_zpl_trace_str(&text, label)
}

pub fn parse_zpl_trace_str(text: &str, label: impl Into<String>) -> Result<ZplTrace> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    if header.trim() != "t_s,lambda_nm" {
        return Err(Error::MalformedHeader(
            "expected header 't_s,lambda_nm'".into(),
        ));
    }
    let mut t_s = Vec::new();
    let mut lambda_nm = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t = fields
            .next()
            .ok_or_else(|| Error::MalformedHeader(format!("empty row {row}")))
            .and_then(|f| parse_float(f, row + 1, 0))?;
        let v = fields
            .next()
            .ok_or_else(|| Error::MalformedHeader(format!("row {row}: missing lambda_nm")))
            .and_then(|f| parse_float(f, row + 1, 1))?;
        if fields.next().is_some() {
            return Err(Error::RaggedRow {
                row,
                got: 3,
                expected: 2,
            });
        }
        t_s.push(t);
        lambda_nm.push(v);
    }
    ZplTrace::new(t_s, lambda_nm, label)
}

pub fn write_zpl_trace(trace: &ZplTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, zpl_trace_to_csv(trace)).map_err(|e| Error::io(path, e))
}

pub fn zpl_trace_to_csv(trace: &ZplTrace) -> String {
    let mut out = String::from("t_s,lambda_nm\n");
    for (t, v) in trace.t_s.iter().zip(&trace.lambda_nm) {
        let _ = writeln!(out, "{t},{v}");
    }
    out
}

fn parse_float(s: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("row {row}, col {col}: bad float '{s}'")))?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue { row, col });
    }
    Ok(v)
}
