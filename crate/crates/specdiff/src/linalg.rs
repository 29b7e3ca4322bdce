//! Small dense linear-algebra helpers used by the fitting code.

use crate::error::{Error, Result};

/// Solve `A x = b` for symmetric positive-definite `A` (row-major, n x n)
/// via Cholesky. `A` and `b` are consumed as scratch.
pub fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    // Factorize in place: lower triangle holds L.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Fit("matrix not positive definite".into()));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // Forward solve L y = b.
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    // Back solve L^T x = y.
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b)
}

/// Ordinary least squares line fit `y = slope * x + intercept`.
/// Returns (slope, intercept, r_squared, sse).
pub fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r_squared, sse)
}

/// Least-squares polynomial fit of degree `deg`. The abscissa is internally
/// shifted/scaled to [-1, 1] for conditioning; returned coefficients are in
/// the monomial basis of the *original* x (c[0] + c[1] x + ...), recovered by
/// expanding the scaled basis.
pub fn polyfit(x: &[f64], y: &[f64], deg: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < deg + 1 {
        return Err(Error::Fit(format!(
            "polyfit degree {deg} needs at least {} points, got {n}",
            deg + 1
        )));
    }
    let xmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (xmin + xmax);
    let half = 0.5 * (xmax - xmin);
    let half = if half > 0.0 { half } else { 1.0 };

    let m = deg + 1;
    // Normal equations on scaled abscissa u = (x - mid) / half.
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![0.0; m];
    let mut pow = vec![0.0; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - mid) / half;
        pow[0] = 1.0;
        for k in 1..m {
            pow[k] = pow[k - 1] * u;
        }
        for i in 0..m {
            atb[i] += pow[i] * yi;
            for j in 0..m {
                ata[i * m + j] += pow[i] * pow[j];
            }
        }
    }
    let c_scaled = cholesky_solve(ata, atb)?;

    // Expand sum_k c_k ((x - mid)/half)^k into monomials of x.
    let mut coeffs = vec![0.0; m];
    let mut basis = vec![0.0; m]; // coefficients of ((x - mid)/half)^k
    for (k, &ck) in c_scaled.iter().enumerate() {
        basis.iter_mut().for_each(|b| *b = 0.0);
        basis[0] = 1.0;
        for _ in 0..k {
            // multiply by (x - mid)/half
            for i in (0..m).rev() {
                let v = basis[i];
                basis[i] = -v * mid / half;
                if i + 1 < m {
                    basis[i + 1] += v / half;
                }
            }
        }
        for i in 0..m {
            coeffs[i] += ck * basis[i];
        }
    }
    Ok(coeffs)
}

/// Evaluate a monomial-basis polynomial at `x` (Horner).
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        // A = [[4,2],[2,3]], b = [10, 9] -> x = [1.5, 2]
        let x = cholesky_solve(vec![4.0, 2.0, 2.0, 3.0], vec![10.0, 9.0]).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_line_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, i, r2, sse) = ols_line(&x, &y);
        assert!((s - 2.0).abs() < 1e-12);
        assert!((i - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        assert!(sse < 1e-20);
    }

    #[test]
    fn polyfit_recovers_degree_5() {
        let c_true = [1.0, -2.0, 0.5, 3.0, -1.5, 0.25];
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|&xi| polyval(&c_true, xi)).collect();
        let c = polyfit(&x, &y, 5).unwrap();
        for (a, b) in c.iter().zip(&c_true) {
            assert!((a - b).abs() < 1e-8, "got {a}, want {b}");
        }
    }
}
