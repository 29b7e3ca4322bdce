//! Memory-effect diagnostics on wavelength traces: autocorrelation with
//! 95 % confidence bands, periodogram power spectral density, log-log
//! power-law fits, and RMS change-point segmentation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ols_line;
use crate::model::ZplTrace;

/// Sample autocorrelation with per-lag confidence band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    pub r: Vec<f64>,
    /// Half-width of the 95 % band:
    /// `1.96 sqrt((1/N)(1 + 2 sum_{i<k} r(i)^2))`.
    pub band: Vec<f64>,
    pub n: usize,
}

/// One-sided periodogram PSD.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdResult {
    pub freqs_hz: Vec<f64>,
    /// Power in nm²/Hz; satisfies Parseval against the (de)trended signal.
    pub power: Vec<f64>,
    pub fs_hz: f64,
    pub detrended: bool,
}

/// Log-log linear fit `log y = exponent * log x + intercept`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Inclusive index interval of the fitted points.
    pub fit_range: (usize, usize),
    pub r_squared: f64,
}

/// Piecewise log-log fit of a PSD with at most 2 change points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentedPsdFit {
    /// Breakpoint indices into the positive-power bins (segment starts,
    /// excluding 0).
    pub change_points: Vec<usize>,
    /// Breakpoint frequencies in Hz.
    pub change_freqs_hz: Vec<f64>,
    pub segments: Vec<PowerLawFit>,
    /// RMS of the log10 residuals over all bins.
    pub total_rms: f64,
}

/// Biased sample autocorrelation of a trace (demeaned internally) with the
/// 95 % confidence band per lag. `max_lag` must be below N/2.
pub fn acf(trace: &ZplTrace, max_lag: usize) -> Result<AcfResult> {
    let x = trace.values();
    let n = x.len();
    if max_lag >= n / 2 {
        return Err(Error::InvalidInput(format!(
            "max_lag {max_lag} must be below N/2 = {}",
            n / 2
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return Err(Error::InvalidInput("constant trace has no autocorrelation".into()));
    }
    let mut r = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut num = 0.0;
        for t in 0..(n - k) {
            num += (x[t] - mean) * (x[t + k] - mean);
        }
        r.push(num / denom);
    }
    // band(k) = 1.96 sqrt((1/N)(1 + 2 sum_{i=1}^{k-1} r(i)^2)); the sums at
    // k = 0 and k = 1 are empty.
    let mut band = Vec::with_capacity(max_lag + 1);
    let mut cumsum_r2 = 0.0;
    for k in 0..=max_lag {
        band.push(1.96 * ((1.0 + 2.0 * cumsum_r2) / n as f64).sqrt());
        if k >= 1 {
            cumsum_r2 += r[k] * r[k];
        }
    }
    Ok(AcfResult {
        lags: (0..=max_lag).collect(),
        r,
        band,
        n,
    })
}

/// First lag at which `|r|` drops inside the band (default fit-region
/// boundary), or `max_lag` if it never does.
pub fn first_band_crossing(acf: &AcfResult) -> usize {
    for k in 1..acf.r.len() {
        if acf.r[k].abs() <= acf.band[k] {
            return k;
        }
    }
    acf.r.len() - 1
}

/// OLS power-law fit of `r(k)` over the inclusive lag interval
/// `[region.0, region.1]` in log-log coordinates.
pub fn fit_acf_power_law(acf: &AcfResult, region: (usize, usize)) -> Result<PowerLawFit> {
    let (lo, hi) = region;
    if lo < 1 || hi >= acf.r.len() || hi < lo || hi - lo + 1 < 3 {
        return Err(Error::InvalidInput(format!(
            "invalid fit region [{lo}, {hi}] for {} lags (need length >= 3, lo >= 1)",
            acf.r.len()
        )));
    }
    let mut logk = Vec::with_capacity(hi - lo + 1);
    let mut logr = Vec::with_capacity(hi - lo + 1);
    for k in lo..=hi {
        if acf.r[k] <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "r({k}) = {} is not positive; log fit undefined",
                acf.r[k]
            )));
        }
        logk.push((k as f64).ln());
        logr.push(acf.r[k].ln());
    }
    let (slope, intercept, r_squared, _) = ols_line(&logk, &logr);
    Ok(PowerLawFit {
        exponent: slope,
        intercept,
        fit_range: (lo, hi),
        r_squared,
    })
}

/// One-sided raw periodogram. With `detrend` a least-squares line is
/// removed first; otherwise only the mean. Satisfies Parseval:
/// `sum(power) * df = variance of the (de)trended signal`.
pub fn periodogram_psd(trace: &ZplTrace, detrend: bool) -> Result<PsdResult> {
    let x = trace.values();
    let n = x.len();
    if n < 16 {
        return Err(Error::InvalidInput(format!(
            "periodogram needs at least 16 samples, got {n}"
        )));
    }
    let fs = trace
        .fs_hz()
        .ok_or_else(|| Error::InvalidInput("trace too short for a sampling rate".into()))?;

    let mut y: Vec<f64> = if detrend {
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let (slope, intercept, _, _) = ols_line(&t, x);
        x.iter()
            .enumerate()
            .map(|(i, v)| v - (slope * i as f64 + intercept))
            .collect()
    } else {
        x.to_vec()
    };
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter_mut().for_each(|v| *v -= mean);

    let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let n_freq = n / 2 + 1;
    let scale = 1.0 / (fs * n as f64);
    let mut freqs_hz = Vec::with_capacity(n_freq);
    let mut power = Vec::with_capacity(n_freq);
    for k in 0..n_freq {
        let p = buf[k].norm_sqr() * scale;
        let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) {
            p
        } else {
            2.0 * p
        };
        freqs_hz.push(k as f64 * fs / n as f64);
        power.push(one_sided);
    }
    Ok(PsdResult {
        freqs_hz,
        power,
        fs_hz: fs,
        detrended: detrend,
    })
}

/// Exhaustive change-point segmentation of a PSD in log10-log10 space.
///
/// Searches 0..=`max_change_points` breakpoints (at bin boundaries,
/// segments at least `min_segment` bins) minimizing the total RMS of
/// per-segment linear fits. The DC bin and non-positive powers are
/// excluded before fitting.
pub fn fit_psd_segments(
    psd: &PsdResult,
    max_change_points: usize,
    min_segment: usize,
) -> Result<SegmentedPsdFit> {
    let max_change_points = max_change_points.min(2);
    let min_segment = min_segment.max(2);

    // Keep bins with positive frequency and power; remember source indices.
    let mut logf = Vec::new();
    let mut logp = Vec::new();
    let mut src = Vec::new();
    for (i, (&f, &p)) in psd.freqs_hz.iter().zip(&psd.power).enumerate() {
        if f > 0.0 && p > 0.0 {
            logf.push(f.log10());
            logp.push(p.log10());
            src.push(i);
        }
    }
    let n = logf.len();
    if n < 3 * min_segment {
        return Err(Error::InvalidInput(format!(
            "psd has {n} usable bins; need at least {}",
            3 * min_segment
        )));
    }

    // Prefix sums for O(1) per-segment OLS SSE.
    let mut sx = vec![0.0; n + 1];
    let mut sy = vec![0.0; n + 1];
    let mut sxx = vec![0.0; n + 1];
    let mut sxy = vec![0.0; n + 1];
    let mut syy = vec![0.0; n + 1];
    for i in 0..n {
        sx[i + 1] = sx[i] + logf[i];
        sy[i + 1] = sy[i] + logp[i];
        sxx[i + 1] = sxx[i] + logf[i] * logf[i];
        sxy[i + 1] = sxy[i] + logf[i] * logp[i];
        syy[i + 1] = syy[i] + logp[i] * logp[i];
    }
    let sse = |a: usize, b: usize| -> f64 {
        // OLS SSE over [a, b)
        let m = (b - a) as f64;
        let dx = sxx[b] - sxx[a] - (sx[b] - sx[a]) * (sx[b] - sx[a]) / m;
        let dy = syy[b] - syy[a] - (sy[b] - sy[a]) * (sy[b] - sy[a]) / m;
        let dxy = sxy[b] - sxy[a] - (sx[b] - sx[a]) * (sy[b] - sy[a]) / m;
        if dx <= 0.0 {
            return dy.max(0.0);
        }
        (dy - dxy * dxy / dx).max(0.0)
    };

    let best0: (f64, Vec<usize>) = (sse(0, n), vec![]);
    let mut best1 = (f64::INFINITY, vec![]);
    if max_change_points >= 1 {
        for c in min_segment..=(n - min_segment) {
            let total = sse(0, c) + sse(c, n);
            if total < best1.0 {
                best1 = (total, vec![c]);
            }
        }
    }
    let mut best2 = (f64::INFINITY, vec![]);
    if max_change_points >= 2 {
        for c1 in min_segment..=(n - 2 * min_segment) {
            let left = sse(0, c1);
            if left >= best2.0 {
                continue;
            }
            for c2 in (c1 + min_segment)..=(n - min_segment) {
                let total = left + sse(c1, c2) + sse(c2, n);
                if total < best2.0 {
                    best2 = (total, vec![c1, c2]);
                }
            }
        }
    }

    // Parsimony: an extra breakpoint must cut the total RMS by a meaningful
    // margin, otherwise the search just chases estimator noise (and can pick
    // degenerate near-zero log-frequency spans). 2 % relative improvement.
    const MIN_RMS_GAIN: f64 = 0.02;
    let keep = |cur: f64, cand: f64| cand.sqrt() < (1.0 - MIN_RMS_GAIN) * cur.sqrt();
    let mut best = best0;
    if best1.0.is_finite() && keep(best.0, best1.0) {
        best = best1;
    }
    if best2.0.is_finite() && keep(best.0, best2.0) {
        best = best2;
    }

    let (total_sse, change_points) = best;
    let mut boundaries = vec![0usize];
    boundaries.extend(&change_points);
    boundaries.push(n);
    let mut segments = Vec::with_capacity(boundaries.len() - 1);
    for w in boundaries.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (slope, intercept, r_squared, _) = ols_line(&logf[a..b], &logp[a..b]);
        segments.push(PowerLawFit {
            exponent: slope,
            intercept,
            fit_range: (a, b - 1),
            r_squared,
        });
    }
    Ok(SegmentedPsdFit {
        change_freqs_hz: change_points.iter().map(|&c| psd.freqs_hz[src[c]]).collect(),
        change_points,
        segments,
        total_rms: (total_sse / n as f64).sqrt(),
    })
}
