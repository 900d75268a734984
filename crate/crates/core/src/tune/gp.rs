//! Gaussian-process surrogate with a Matérn-5/2 kernel.

const LENGTH_SCALES: [f64; 7] = [0.05, 0.1, 0.2, 0.35, 0.6, 1.0, 2.0];
const NOISES: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];

fn matern52(a: &[f64], b: &[f64], ell: f64) -> f64 {
    let r = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let s = 5f64.sqrt() * r / ell;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Lower Cholesky factor, row-major; `None` if not positive definite.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

fn backward(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

pub struct Gp {
    xs: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    ell: f64,
    noise: f64,
    y_mean: f64,
    y_scale: f64,
}

impl Gp {
    /// Fits on standardized targets, choosing length scale and noise from a
    /// fixed grid by log marginal likelihood.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Gp {
        let n = xs.len();
        assert!(n > 0 && n == ys.len());
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let z: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_scale).collect();

        let mut best: Option<(f64, f64, f64, Vec<f64>, Vec<f64>)> = None;
        for &ell in &LENGTH_SCALES {
            for &noise in &NOISES {
                let mut k = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        k[i * n + j] = matern52(&xs[i], &xs[j], ell);
                    }
                    k[i * n + i] += noise;
                }
                let Some(l) = cholesky(&k, n) else { continue };
                let alpha = backward(&l, n, &forward(&l, n, &z));
                let fit: f64 = z.iter().zip(&alpha).map(|(a, b)| a * b).sum();
                let logdet: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
                let lml = -0.5 * fit - logdet;
                if best.as_ref().is_none_or(|b| lml > b.0) {
                    best = Some((lml, ell, noise, l, alpha));
                }
            }
        }
        let (_, ell, noise, chol, alpha) = best.expect("noise 0.1 keeps the kernel matrix positive definite");
        Gp { xs: xs.to_vec(), chol, alpha, ell, noise, y_mean, y_scale }
    }

    /// Posterior mean and standard deviation in original units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.xs.len();
        let ks: Vec<f64> = self.xs.iter().map(|xi| matern52(xi, x, self.ell)).collect();
        let mu: f64 = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward(&self.chol, n, &ks);
        let var = (1.0 + self.noise - v.iter().map(|a| a * a).sum::<f64>()).max(1e-12);
        (self.y_mean + mu * self.y_scale, var.sqrt() * self.y_scale)
    }
}

/// Expected improvement below `best` for a minimization problem.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (best - mu).max(0.0);
    }
    let d = best - mu;
    let z = d / sigma;
    let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    d * cdf + sigma * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_smooth_function() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin()).collect();
        let gp = Gp::fit(&xs, &ys);
        for (x, y) in xs.iter().zip(&ys) {
            let (m, _) = gp.predict(x);
            assert!((m - y).abs() < 1e-2);
        }
        let (m, s) = gp.predict(&[0.5 / 11.0]);
        assert!((m - (3.0 * 0.5 / 11.0f64).sin()).abs() < 0.05);
        assert!(s > 0.0);
    }

    #[test]
    fn ei_properties() {
        assert_eq!(expected_improvement(5.0, 0.0, 3.0), 0.0);
        assert_eq!(expected_improvement(1.0, 0.0, 3.0), 2.0);
        let a = expected_improvement(3.0, 1.0, 3.0);
        assert!((a - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!(expected_improvement(2.0, 1.0, 3.0) > a);
        assert!(expected_improvement(3.0, 2.0, 3.0) > a);
    }

    #[test]
    fn cholesky_solves() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let x = backward(&l, 2, &forward(&l, 2, &[2.0, 1.0]));
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
