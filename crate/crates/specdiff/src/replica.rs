//! Replica-overlap order parameter statistics.
//!
//! Each spectral frame inside an analysis window is treated as one replica
//! of the disordered system. The overlap `q_ab` is the cosine of the
//! deviations of frames `a` and `b` from the mean trajectory; histograms of
//! `|q|` over the strict upper triangle summarize the degree of temporal
//! correlation, and a sliding window tracks its evolution.

use crate::error::{Error, Result};
use crate::model::{Histogram, SpectralSeries};

/// Default norm floor, relative to the largest deviation norm in the window.
pub const DEFAULT_EPS_REL: f64 = 1e-9;

/// Symmetric replica-overlap matrix for one window of frames.
#[derive(Debug, Clone)]
pub struct OverlapMatrix {
    /// Row-major `n x n`, unit diagonal.
    q: Vec<f64>,
    n: usize,
    pub window_start: usize,
    pub window_len: usize,
    /// Upper-triangle pairs skipped because a deviation norm fell below eps.
    pub excluded_pairs: usize,
    excluded: Vec<bool>,
}

impl OverlapMatrix {
    pub fn n_replicas(&self) -> usize {
        self.n
    }

    pub fn q(&self, a: usize, b: usize) -> f64 {
        self.q[a * self.n + b]
    }

    /// Whether the pair `(a, b)` was excluded for degenerate norms.
    pub fn is_excluded(&self, a: usize, b: usize) -> bool {
        self.excluded[a] || self.excluded[b]
    }

    /// `|q_ab|` over the strict upper triangle, excluded pairs skipped.
    pub fn upper_triangle_abs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for a in 0..self.n {
            for b in (a + 1)..self.n {
                if !self.is_excluded(a, b) {
                    out.push(self.q(a, b).abs());
                }
            }
        }
        out
    }
}

/// Sequence of per-window `|q|` histograms on shared bin edges.
#[derive(Debug, Clone)]
pub struct OverlapEvolution {
    pub histograms: Vec<Histogram>,
    pub window_starts: Vec<usize>,
    pub window_len: usize,
    pub stride: usize,
    pub bin_edges: Vec<f64>,
}

/// Element-wise arithmetic mean across replicas.
pub fn mean_trajectory(frames: &[&[f64]]) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no replicas".into()));
    }
    let bins = frames[0].len();
    let mut mean = vec![0.0; bins];
    for frame in frames {
        if frame.len() != bins {
            return Err(Error::InvalidInput("replicas differ in bin count".into()));
        }
        for (m, v) in mean.iter_mut().zip(*frame) {
            *m += v;
        }
    }
    let inv = 1.0 / frames.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(mean)
}

/// Overlap matrix `q_ab = <Δ_a, Δ_b> / (||Δ_a|| ||Δ_b||)` with deviations
/// from the mean trajectory. Pairs touching a deviation with norm below
/// `eps` are excluded (q set to 0 and counted); the diagonal is forced to 1.
pub fn overlap_matrix(frames: &[&[f64]], eps: f64) -> Result<OverlapMatrix> {
    overlap_matrix_at(frames, eps, 0)
}

pub fn overlap_matrix_at(frames: &[&[f64]], eps: f64, window_start: usize) -> Result<OverlapMatrix> {
    let n = frames.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "overlap needs at least 2 replicas, got {n}"
        )));
    }
    if frames
        .iter()
        .any(|f| f.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidInput("non-finite frame value".into()));
    }
    let mean = mean_trajectory(frames)?;
    let bins = mean.len();

    let deviations: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    // Deviations from the mean must sum to the zero vector.
    let scale = frames
        .iter()
        .flat_map(|f| f.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for j in 0..bins {
        let s: f64 = deviations.iter().map(|d| d[j]).sum();
        assert!(
            s.abs() <= 1e-10 * scale * n as f64,
            "deviation sum {s} exceeds tolerance"
        );
    }

    let norms: Vec<f64> = deviations
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let excluded: Vec<bool> = norms.iter().map(|&nm| nm < eps).collect();

    let mut q = vec![0.0; n * n];
    let mut excluded_pairs = 0usize;
    for a in 0..n {
        q[a * n + a] = 1.0;
        for b in (a + 1)..n {
            if excluded[a] || excluded[b] {
                excluded_pairs += 1;
                continue;
            }
            let dot: f64 = deviations[a]
                .iter()
                .zip(&deviations[b])
                .map(|(x, y)| x * y)
                .sum();
            let val = (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0);
            q[a * n + b] = val;
            q[b * n + a] = val;
        }
    }
    Ok(OverlapMatrix {
        q,
        n,
        window_start,
        window_len: n,
        excluded_pairs,
        excluded,
    })
}

/// Scale-relative norm floor for a set of frames.
pub fn default_eps(frames: &[&[f64]]) -> f64 {
    let max_norm = frames
        .iter()
        .map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    DEFAULT_EPS_REL * max_norm.max(1.0)
}

/// Histogram of `|q_ab|` over the strict upper triangle.
pub fn overlap_histogram(m: &OverlapMatrix, bins: usize) -> Result<Histogram> {
    let values = m.upper_triangle_abs();
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "no included upper-triangle pairs".into(),
        ));
    }
    Histogram::from_values(&values, bins, 0.0, 1.0)
}

/// Per-window overlap histograms over a sliding window of frames, optionally
/// restricted to a wavelength window of each spectrum.
pub fn sliding_overlap_evolution(
    series: &SpectralSeries,
    window_len: usize,
    stride: usize,
    bins: usize,
    wavelength_window: Option<(f64, f64)>,
) -> Result<OverlapEvolution> {
    if window_len < 3 {
        return Err(Error::InvalidInput("window_len must be at least 3".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be positive".into()));
    }
    let n = series.n_frames();
    if n < window_len {
        return Err(Error::InvalidInput(format!(
            "series has {n} frames; window needs {window_len}"
        )));
    }
    let bin_range = match wavelength_window {
        Some((lo, hi)) => {
            let r = series.window_bins(lo, hi);
            if r.len() < 2 {
                return Err(Error::InvalidInput(
                    "wavelength restriction covers fewer than 2 bins".into(),
                ));
            }
            r
        }
        None => 0..series.n_bins(),
    };

    let n_windows = (n - window_len) / stride + 1;
    let mut histograms = Vec::with_capacity(n_windows);
    let mut window_starts = Vec::with_capacity(n_windows);
    let mut bin_edges = Vec::new();
    for w in 0..n_windows {
        let start = w * stride;
        let frames: Vec<&[f64]> = (start..start + window_len)
            .map(|i| &series.frame(i)[bin_range.clone()])
            .collect();
        let eps = default_eps(&frames);
        let m = overlap_matrix_at(&frames, eps, start)?;
        let h = overlap_histogram(&m, bins)?;
        if bin_edges.is_empty() {
            bin_edges = h.bin_edges.clone();
        }
        histograms.push(h);
        window_starts.push(start);
    }
    Ok(OverlapEvolution {
        histograms,
        window_starts,
        window_len,
        stride,
        bin_edges,
    })
}
