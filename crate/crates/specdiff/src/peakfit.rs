//! Bounded nonlinear least squares and per-frame peak extraction.
//!
//! The solver is a Levenberg-Marquardt trust-region variant with bound
//! reflection; it backs the Lorentzian per-frame fits that turn spectrometer
//! frames into wavelength traces, the g²(τ) antibunching fit, and the sine
//! baseline of the forecaster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::model::{SpectralSeries, ZplTrace};

/// Solver configuration. Defaults: gradient tolerance 1e-10, 200 iterations.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Tolerance on the scaled gradient measure
    /// `max_j |g_j| / (||r|| ||J_j||)` (MINPACK-style orthogonality test).
    pub gtol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: 1e-10,
        }
    }
}

/// Generic solver output.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Diagonal of `(JᵀJ)⁻¹ · 2 cost / (m - n)`; zeros if singular.
    pub covariance_proxy: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final cost `0.5 Σ r²`.
    pub cost: f64,
    /// Final scaled gradient measure compared against `gtol`.
    pub gradient_measure: f64,
}

/// Single-peak Lorentzian fit of one frame window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeakFit {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub residual_rms: f64,
    pub converged: bool,
}

/// Simplified antibunching fit `g²(t) = 1 - (1 - g²₀) e^(-|t|/τ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G2Fit {
    pub g2_0: f64,
    pub tau_antibunch_s: f64,
    /// Fixed at 1 in the simplified (no-bunching) form.
    pub g2_inf: f64,
    pub residual_rms: f64,
}

/// Lorentzian profile with a constant offset.
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64, offset: f64) -> f64 {
    let h = 0.5 * fwhm;
    let d = (x - center) * (x - center) + h * h;
    amplitude * h * h / d + offset
}

/// Fit `model(params, x) ≈ y` by bounded Levenberg-Marquardt with a
/// finite-difference Jacobian. See [`least_squares_fit_with_jac`].
pub fn least_squares_fit<F>(
    model: F,
    init: &[f64],
    lower: &[f64],
    upper: &[f64],
    x: &[f64],
    y: &[f64],
    opts: &SolverOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64], f64) -> f64,
{
    let n = init.len();
    let fd = |p: &[f64], xi: f64, out: &mut [f64]| {
        let mut pp = p.to_vec();
        for j in 0..n {
            let h = 1e-6 * p[j].abs().max(1e-3);
            pp[j] = p[j] + h;
            let up = model(&pp, xi);
            pp[j] = p[j] - h;
            let dn = model(&pp, xi);
            pp[j] = p[j];
            out[j] = (up - dn) / (2.0 * h);
        }
    };
    least_squares_fit_with_jac(&model, fd, init, lower, upper, x, y, opts)
}

/// Fit `model(params, x) ≈ y` with an analytic Jacobian
/// (`jac(params, x, out)` fills `∂model/∂params` at one data point).
///
/// Iterates stay inside `[lower, upper]` (reflect-and-clamp); infinite bounds
/// are allowed. Accepted steps never increase the cost. Returns
/// `converged = false` rather than erroring when the iteration budget runs
/// out.
#[allow(clippy::too_many_arguments)]
pub fn least_squares_fit_with_jac<F, J>(
    model: F,
    jac: J,
    init: &[f64],
    lower: &[f64],
    upper: &[f64],
    x: &[f64],
    y: &[f64],
    opts: &SolverOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64], f64) -> f64,
    J: Fn(&[f64], f64, &mut [f64]),
{
    let n = init.len();
    let m = x.len();
    if m != y.len() {
        return Err(Error::InvalidInput("x/y length mismatch".into()));
    }
    if m < n {
        return Err(Error::Fit(format!(
            "need at least {n} data points for {n} parameters, got {m}"
        )));
    }
    if lower.len() != n || upper.len() != n {
        return Err(Error::InvalidInput("bounds length mismatch".into()));
    }
    for j in 0..n {
        if init[j] < lower[j] || init[j] > upper[j] {
            return Err(Error::InvalidInput(format!(
                "initial parameter {j} outside bounds"
            )));
        }
    }

    let residuals = |p: &[f64], out: &mut [f64]| {
        for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
            out[i] = model(p, xi) - yi;
        }
    };
    let cost_of = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();

    let mut p = init.to_vec();
    let mut r = vec![0.0; m];
    residuals(&p, &mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite residual at initial parameters".into()));
    }
    let mut cost = cost_of(&r);
    // Essentially-perfect fits count as converged: the orthogonality measure
    // is scale-invariant in r and meaningless once r is rounding noise.
    let ssq_y: f64 = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    let cost_floor = 1e-24 * ssq_y;
    let mut jmat = vec![0.0; m * n];
    let fill_jac = |p: &[f64], jmat: &mut [f64]| {
        let mut row = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            jac(p, xi, &mut row);
            jmat[i * n..(i + 1) * n].copy_from_slice(&row);
        }
    };
    fill_jac(&p, &mut jmat);

    let gradient_measure = |jmat: &[f64], r: &[f64], cost: f64| -> f64 {
        if cost == 0.0 {
            return 0.0;
        }
        let rnorm = (2.0 * cost).sqrt();
        let mut measure: f64 = 0.0;
        for j in 0..n {
            let mut g = 0.0;
            let mut colnorm = 0.0;
            for i in 0..m {
                g += jmat[i * n + j] * r[i];
                colnorm += jmat[i * n + j] * jmat[i * n + j];
            }
            let colnorm = colnorm.sqrt();
            if colnorm > 0.0 {
                measure = measure.max(g.abs() / (rnorm * colnorm));
            }
        }
        measure
    };

    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut measure = gradient_measure(&jmat, &r, cost);
    let mut r_try = vec![0.0; m];

    while iterations < opts.max_iter {
        if measure <= opts.gtol || cost <= cost_floor {
            converged = true;
            break;
        }
        iterations += 1;

        // Normal equations with Marquardt damping on the JtJ diagonal.
        let mut jtj = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                g[a] += jmat[i * n + a] * r[i];
                for b in a..n {
                    jtj[a * n + b] += jmat[i * n + a] * jmat[i * n + b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[a * n + b] = jtj[b * n + a];
            }
        }
        let mut damped = jtj.clone();
        for a in 0..n {
            let d = jtj[a * n + a];
            damped[a * n + a] = d + lambda * d.max(1e-12);
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = match cholesky_solve(damped, rhs) {
            Ok(s) => s,
            Err(_) => {
                lambda *= 10.0;
                continue;
            }
        };

        let mut candidate: Vec<f64> = p.iter().zip(&step).map(|(pi, si)| pi + si).collect();
        reflect_into_bounds(&mut candidate, lower, upper);
        residuals(&candidate, &mut r_try);
        let cost_try = if r_try.iter().all(|v| v.is_finite()) {
            cost_of(&r_try)
        } else {
            f64::INFINITY
        };

        if cost_try < cost {
            // Accepted trust-region step: cost is monotone non-increasing.
            assert!(cost_try <= cost);
            p = candidate;
            std::mem::swap(&mut r, &mut r_try);
            cost = cost_try;
            fill_jac(&p, &mut jmat);
            measure = gradient_measure(&jmat, &r, cost);
            lambda = (lambda / 3.0).max(1e-14);
        } else {
            lambda *= 4.0;
            if lambda > 1e14 {
                // Step size exhausted; no further progress possible.
                break;
            }
        }
    }
    if measure <= opts.gtol || cost <= cost_floor {
        converged = true;
    }

    // Covariance proxy from the undamped normal matrix.
    let mut jtj = vec![0.0; n * n];
    for i in 0..m {
        for a in 0..n {
            for b in 0..n {
                jtj[a * n + b] += jmat[i * n + a] * jmat[i * n + b];
            }
        }
    }
    let dof = (m.saturating_sub(n)).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let mut covariance_proxy = vec![0.0; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if let Ok(col) = cholesky_solve(jtj.clone(), e) {
            covariance_proxy[j] = (col[j] * s2).max(0.0);
        }
    }

    Ok(FitResult {
        params: p,
        covariance_proxy,
        iterations,
        converged,
        cost,
        gradient_measure: measure,
    })
}

fn reflect_into_bounds(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for j in 0..p.len() {
        let (lo, hi) = (lower[j], upper[j]);
        if hi.is_finite() && p[j] > hi {
            p[j] = 2.0 * hi - p[j];
        }
        if lo.is_finite() && p[j] < lo {
            p[j] = 2.0 * lo - p[j];
        }
        p[j] = p[j].clamp(lo, hi);
    }
}

fn lorentzian_jac(p: &[f64], x: f64, out: &mut [f64]) {
    let (c, w, a) = (p[0], p[1], p[2]);
    let h = 0.5 * w;
    let dx = x - c;
    let d = dx * dx + h * h;
    out[0] = a * h * h * 2.0 * dx / (d * d);
    out[1] = a * h * dx * dx / (d * d);
    out[2] = h * h / d;
    out[3] = 1.0;
}

/// Fit a Lorentzian + constant offset to one spectral window.
///
/// Initialization: center at the argmax bin, amplitude `max - median`,
/// fwhm 3 bin widths, offset at the median.
pub fn fit_lorentzian(x: &[f64], y: &[f64], opts: &SolverOptions) -> Result<PeakFit> {
    if x.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "fitting window has {} bins; need at least 5",
            x.len()
        )));
    }
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let bin = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let span = x[x.len() - 1] - x[0];

    let init = [x[imax], 3.0 * bin, (ymax - median).max(1e-9), median];
    let lower = [x[0], 0.5 * bin, 1e-12, f64::NEG_INFINITY];
    let upper = [x[x.len() - 1], 4.0 * span, f64::INFINITY, f64::INFINITY];
    let fit = least_squares_fit_with_jac(
        |p, xi| lorentzian(xi, p[0], p[1], p[2], p[3]),
        lorentzian_jac,
        &init,
        &lower,
        &upper,
        x,
        y,
        opts,
    )?;
    Ok(PeakFit {
        center_nm: fit.params[0],
        fwhm_nm: fit.params[1],
        amplitude: fit.params[2],
        offset: fit.params[3],
        residual_rms: (2.0 * fit.cost / x.len() as f64).sqrt(),
        converged: fit.converged,
    })
}

/// Per-frame Lorentzian extraction of the ZPL and the static reference line.
///
/// Non-converged frames carry the previous frame's value forward and are
/// counted; more than 20 % non-converged aborts. Returns `(zpl, reference)`
/// traces with one sample per frame.
pub fn extract_traces(
    series: &SpectralSeries,
    zpl_window: (f64, f64),
    ref_window: (f64, f64),
) -> Result<(ZplTrace, ZplTrace)> {
    extract_traces_with(series, zpl_window, ref_window, &frame_fit_options())
}

/// Solver options used for per-frame extraction. Noisy count data never
/// reaches the 1e-10 orthogonality tolerance, so the per-frame gtol is
/// relaxed to 1e-8.
pub fn frame_fit_options() -> SolverOptions {
    SolverOptions {
        max_iter: 200,
        gtol: 1e-8,
    }
}

pub fn extract_traces_with(
    series: &SpectralSeries,
    zpl_window: (f64, f64),
    ref_window: (f64, f64),
    opts: &SolverOptions,
) -> Result<(ZplTrace, ZplTrace)> {
    let axis = series.wavelength_nm();
    let lo = axis[0];
    let hi = axis[axis.len() - 1];
    for (name, (a, b)) in [("zpl", zpl_window), ("ref", ref_window)] {
        if !(a < b) || a < lo || b > hi {
            return Err(Error::InvalidInput(format!(
                "{name} window [{a}, {b}] outside wavelength axis [{lo}, {hi}]"
            )));
        }
    }
    if zpl_window.1.min(ref_window.1) > zpl_window.0.max(ref_window.0) {
        return Err(Error::InvalidInput("zpl and reference windows overlap".into()));
    }

    let mut traces = Vec::with_capacity(2);
    for (label, window) in [("zpl", zpl_window), ("reference", ref_window)] {
        let bins = series.window_bins(window.0, window.1);
        if bins.len() < 5 {
            return Err(Error::InvalidInput(format!(
                "window [{}, {}] covers {} bins; need at least 5",
                window.0,
                window.1,
                bins.len()
            )));
        }
        let wx = &axis[bins.clone()];
        let mut values = Vec::with_capacity(series.n_frames());
        let mut non_converged = 0usize;
        for i in 0..series.n_frames() {
            let wy = &series.frame(i)[bins.clone()];
            let fit = fit_lorentzian(wx, wy, opts)?;
            if fit.converged || values.is_empty() {
                if !fit.converged {
                    non_converged += 1;
                }
                values.push(fit.center_nm);
            } else {
                non_converged += 1;
                let prev = *values.last().expect("checked nonempty");
                values.push(prev);
            }
        }
        if non_converged * 5 > series.n_frames() {
            return Err(Error::TooManyNonConverged {
                non_converged,
                frames: series.n_frames(),
            });
        }
        let t: Vec<f64> = (0..series.n_frames())
            .map(|i| series.frame_time_s(i))
            .collect();
        traces.push(ZplTrace::new(t, values, label)?);
    }
    let reference = traces.pop().expect("two traces");
    let zpl = traces.pop().expect("two traces");
    Ok((zpl, reference))
}

/// Fit the simplified antibunching model to measured g²(τ) data.
/// Delays may be negative; the model uses `t_adj = |t|`.
pub fn fit_g2(delays_s: &[f64], g2_values: &[f64]) -> Result<G2Fit> {
    if delays_s.len() != g2_values.len() {
        return Err(Error::InvalidInput("delay/value length mismatch".into()));
    }
    if delays_s.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "g2 fit needs at least 4 points, got {}",
            delays_s.len()
        )));
    }
    if g2_values.iter().any(|v| !v.is_finite()) || delays_s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite g2 input".into()));
    }
    let first = g2_values[0];
    if g2_values.iter().all(|&v| v == first) {
        return Err(Error::InvalidInput("all g2 values identical".into()));
    }

    let abs_t: Vec<f64> = delays_s.iter().map(|t| t.abs()).collect();
    let g0_init = g2_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 0.95);
    let tmax = abs_t.iter().cloned().fold(0.0f64, f64::max);
    let tau_init = (tmax / 5.0).max(1e-12);

    let model = |p: &[f64], t: f64| 1.0 - (1.0 - p[0]) * (-t.abs() / p[1]).exp();
    let jac = |p: &[f64], t: f64, out: &mut [f64]| {
        let e = (-t.abs() / p[1]).exp();
        out[0] = e;
        out[1] = -(1.0 - p[0]) * e * t.abs() / (p[1] * p[1]);
    };
    let fit = least_squares_fit_with_jac(
        model,
        jac,
        &[g0_init, tau_init],
        &[0.0, 1e-15],
        &[0.999, f64::INFINITY],
        &abs_t,
        g2_values,
        &SolverOptions::default(),
    )?;
    Ok(G2Fit {
        g2_0: fit.params[0],
        tau_antibunch_s: fit.params[1],
        g2_inf: 1.0,
        residual_rms: (2.0 * fit.cost / delays_s.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_exact() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 2.0 * xi + 1.0).collect();
        let fit = least_squares_fit(
            |p, xi| p[0] * xi + p[1],
            &[0.5, 0.0],
            &[f64::NEG_INFINITY; 2],
            &[f64::INFINITY; 2],
            &x,
            &y,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] - 2.0).abs() < 1e-10);
        assert!((fit.params[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lorentzian_recovered_from_perturbed_init() {
        let truth = [539.55, 0.3, 1000.0, 10.0];
        let x: Vec<f64> = (0..200).map(|i| 538.5 + i as f64 * 0.01).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| lorentzian(xi, truth[0], truth[1], truth[2], truth[3]))
            .collect();
        let init = [539.55 * 1.0001, 0.33, 1100.0, 11.0];
        let fit = least_squares_fit_with_jac(
            |p, xi| lorentzian(xi, p[0], p[1], p[2], p[3]),
            lorentzian_jac,
            &init,
            &[538.5, 1e-3, 1e-9, f64::NEG_INFINITY],
            &[540.5, 10.0, f64::INFINITY, f64::INFINITY],
            &x,
            &y,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        for (got, want) in fit.params.iter().zip(&truth) {
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "param {got} vs {want}"
            );
        }
    }

    #[test]
    fn iterates_respect_bounds() {
        // Unconstrained minimizer at p = 3, but the upper bound is 2 and we
        // start exactly on it with the descent direction pointing outward.
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 3.0 * xi).collect();
        let fit = least_squares_fit(
            |p, xi| p[0] * xi,
            &[2.0],
            &[0.0],
            &[2.0],
            &x,
            &y,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(fit.params[0] <= 2.0 && fit.params[0] >= 0.0);
        assert!((fit.params[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_init_rejected() {
        let err = least_squares_fit(
            |p, xi| (p[0] * xi).ln(),
            &[-1.0],
            &[f64::NEG_INFINITY],
            &[f64::INFINITY],
            &[1.0, 2.0, 3.0],
            &[0.0, 0.0, 0.0],
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Fit(_)));
    }

    #[test]
    fn center_invariant_under_constant_offset() {
        let x: Vec<f64> = (0..100).map(|i| 539.0 + i as f64 * 0.01).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| lorentzian(xi, 539.47, 0.2, 500.0, 20.0))
            .collect();
        let y_shifted: Vec<f64> = y.iter().map(|v| v + 137.0).collect();
        let a = fit_lorentzian(&x, &y, &SolverOptions::default()).unwrap();
        let b = fit_lorentzian(&x, &y_shifted, &SolverOptions::default()).unwrap();
        assert!((a.center_nm - b.center_nm).abs() < 1e-8);
    }

    #[test]
    fn narrow_window_rejected() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0, 1.0, 1.0];
        assert!(fit_lorentzian(&x, &y, &SolverOptions::default()).is_err());
    }

    #[test]
    fn g2_exact_recovery() {
        let g0 = 0.3;
        let tau = 10e-9;
        let delays: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) * 2e-9).collect();
        let values: Vec<f64> = delays
            .iter()
            .map(|t| 1.0 - (1.0 - g0) * (-t.abs() / tau).exp())
            .collect();
        let fit = fit_g2(&delays, &values).unwrap();
        assert!(((fit.g2_0 - g0) / g0).abs() < 1e-6, "g2_0 = {}", fit.g2_0);
        assert!(
            ((fit.tau_antibunch_s - tau) / tau).abs() < 1e-6,
            "tau = {}",
            fit.tau_antibunch_s
        );
        // Value of the fitted model at t = 0 is g2_0 by construction.
        let at_zero = 1.0 - (1.0 - fit.g2_0) * (0.0f64).exp();
        assert!((at_zero - fit.g2_0).abs() < 1e-15);
    }

    #[test]
    fn g2_time_reversal_invariance() {
        let g0 = 0.2;
        let tau = 5e-9;
        let delays: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) * 1e-9).collect();
        let values: Vec<f64> = delays
            .iter()
            .map(|t| 1.0 - (1.0 - g0) * (-t.abs() / tau).exp())
            .collect();
        let reversed_delays: Vec<f64> = delays.iter().map(|t| -t).collect();
        let a = fit_g2(&delays, &values).unwrap();
        let b = fit_g2(&reversed_delays, &values).unwrap();
        assert!((a.g2_0 - b.g2_0).abs() < 1e-12);
        assert!((a.tau_antibunch_s - b.tau_antibunch_s).abs() < 1e-20);
    }

    #[test]
    fn g2_too_few_points_rejected() {
        assert!(fit_g2(&[0.0, 1e-9, 2e-9], &[0.3, 0.5, 0.7]).is_err());
    }

    #[test]
    fn g2_constant_values_rejected() {
        assert!(fit_g2(&[0.0, 1e-9, 2e-9, 3e-9], &[0.5; 4]).is_err());
    }
}
