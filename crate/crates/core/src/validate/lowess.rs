//! Locally weighted linear smoothing with tri-cube weights.

use crate::error::{Error, Result};

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn bisquare(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        t * t
    }
}

/// Weighted local linear estimate at `x0` from the points `idx`.
fn local_fit(x: &[f64], y: &[f64], idx: &[usize], x0: f64, robust: &[f64]) -> f64 {
    let dmax = idx.iter().map(|&j| (x[j] - x0).abs()).fold(0.0, f64::max);
    let weight = |j: usize| {
        let d = if dmax > 0.0 { (x[j] - x0).abs() / dmax } else { 0.0 };
        tricube(d) * robust[j]
    };
    let mut sw = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &j in idx {
        let w = weight(j);
        sw += w;
        sx += w * x[j];
        sy += w * y[j];
    }
    if sw <= 0.0 {
        // every neighbour sits on the window edge or was down-weighted away
        return idx.iter().map(|&j| y[j]).sum::<f64>() / idx.len() as f64;
    }
    let (xbar, ybar) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &j in idx {
        let w = weight(j);
        let dx = x[j] - xbar;
        sxx += w * dx * dx;
        sxy += w * dx * (y[j] - ybar);
    }
    let spread = idx.iter().map(|&j| (x[j] - xbar).abs()).fold(0.0, f64::max);
    if sxx <= 1e-12 * spread * spread * sw || spread == 0.0 {
        return ybar;
    }
    ybar + sxy / sxx * (x0 - xbar)
}

/// Fitted values at every `x[i]`. Each fit uses the `ceil(frac * n)` nearest
/// points; `robust_iters` extra passes down-weight large residuals.
pub fn lowess(x: &[f64], y: &[f64], frac: f64, robust_iters: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("lowess needs at least 2 points".into()));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidArgument(format!("lowess frac {frac} not in (0, 1]")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("lowess input must be finite".into()));
    }
    let r = ((frac * n as f64).ceil() as usize).clamp(2, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();

    // window of r sorted positions nearest to each point
    let mut windows = vec![0usize; n];
    let mut lo = 0;
    for p in 0..n {
        let x0 = xs[p];
        while lo + r < n && xs[lo + r] - x0 < x0 - xs[lo] {
            lo += 1;
        }
        windows[p] = lo;
    }

    let mut robust = vec![1.0; n];
    let mut fitted = vec![0.0; n];
    for pass in 0..=robust_iters {
        for p in 0..n {
            let idx = &order[windows[p]..windows[p] + r];
            fitted[order[p]] = local_fit(x, y, idx, xs[p], &robust);
        }
        if pass == robust_iters {
            break;
        }
        let abs_res: Vec<f64> = (0..n).map(|i| (y[i] - fitted[i]).abs()).collect();
        let mut sorted = abs_res.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        if median <= 0.0 {
            // more than half the points are fitted exactly
            break;
        }
        for (w, e) in robust.iter_mut().zip(&abs_res) {
            *w = bisquare(*e / (6.0 * median));
        }
    }
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_line_and_constant() {
        let x: Vec<f64> = (0..40).map(|i| (i * 7 % 40) as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        for (f, want) in lowess(&x, &y, 2.0 / 3.0, 0).unwrap().iter().zip(&y) {
            assert!((f - want).abs() <= 1e-6);
        }
        let c = vec![4.5; 40];
        for f in lowess(&x, &c, 0.3, 2).unwrap() {
            assert!((f - 4.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn duplicate_x_falls_back_to_mean() {
        let f = lowess(&[1.0, 1.0, 1.0], &[1.0, 2.0, 6.0], 1.0, 0).unwrap();
        for v in f {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(lowess(&[1.0], &[1.0], 0.5, 0).is_err());
        assert!(lowess(&[1.0, 2.0], &[1.0], 0.5, 0).is_err());
        assert!(lowess(&[1.0, 2.0], &[1.0, 2.0], 0.0, 0).is_err());
        assert!(lowess(&[1.0, 2.0], &[1.0, 2.0], 1.5, 0).is_err());
    }

    #[test]
    fn robust_pass_resists_outlier() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v + 0.2 * (1.7 * v).sin()).collect();
        y[15] = 100.0;
        let plain = lowess(&x, &y, 0.5, 0).unwrap();
        let robust = lowess(&x, &y, 0.5, 3).unwrap();
        assert!((robust[14] - 7.0).abs() < (plain[14] - 7.0).abs());
        assert!((robust[14] - 7.0).abs() < 0.5);
    }
}
