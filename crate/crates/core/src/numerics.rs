//! Regression, root finding and summary statistics.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero when fewer than three points.
    pub stderr: f64,
    pub n: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Parameter(format!(
            "length mismatch: {} x values, {} y values",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "a line fit needs at least 2 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Domain("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        stderr,
        n,
    })
}

/// Weighted least-squares line with weights `ws`, usually inverse
/// variances of `ys`.
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() != ws.len() {
        return Err(Error::Parameter(format!(
            "length mismatch: {} x values, {} y values, {} weights",
            xs.len(),
            ys.len(),
            ws.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "a line fit needs at least 2 points, got {n}"
        )));
    }
    if let Some(w) = ws.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Domain(format!(
            "weights must be positive and finite, got {w}"
        )));
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Domain("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let chi2: f64 = xs
            .iter()
            .zip(ys)
            .zip(ws)
            .map(|((&x, &y), &w)| w * (y - intercept - slope * x).powi(2))
            .sum();
        (chi2 / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        stderr,
        n,
    })
}

/// Slope of `ln y` against `ln x` over `window`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64], window: Range<usize>) -> Result<LinearFit> {
    if window.end > xs.len() || window.end > ys.len() || window.start > window.end {
        return Err(Error::Range(format!(
            "window {window:?} outside series of length {}",
            xs.len().min(ys.len())
        )));
    }
    if window.len() < 3 {
        return Err(Error::Parameter(format!(
            "log-log fit needs at least 3 points, got {}",
            window.len()
        )));
    }
    let mut lx = Vec::with_capacity(window.len());
    let mut ly = Vec::with_capacity(window.len());
    for i in window {
        let (x, y) = (xs[i], ys[i]);
        if !(x > 0.0) || !(y > 0.0) {
            return Err(Error::Domain(format!(
                "log-log fit needs positive values, got ({x}, {y}) at index {i}"
            )));
        }
        lx.push(x.ln());
        ly.push(y.ln());
    }
    linear_fit(&lx, &ly)
}

/// Log-log slope over every point with `lo ≤ x ≤ hi`.
pub fn fit_loglog_between(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> Result<LinearFit> {
    let (sel_x, sel_y): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(&x, _)| x >= lo && x <= hi)
        .map(|(&x, &y)| (x, y))
        .unzip();
    let n = sel_x.len();
    fit_loglog_slope(&sel_x, &sel_y, 0..n)
}

/// Brent's method on a sign-changing bracket.
///
/// Returns `x` with `|f(x)| ≤ tol` or a bracket narrower than machine
/// resolution around the root.
pub fn solve_root<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Bracket { a, b, fa, fb });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let step_tol = 2.0 * f64::EPSILON * b.abs() + 0.5e-300;
        let m = 0.5 * (c - b);
        if fb.abs() <= tol || m.abs() <= step_tol {
            return Ok(b);
        }
        if e.abs() >= step_tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (step_tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > step_tol {
            d
        } else {
            step_tol.copysign(m)
        };
        fb = f(b);
    }
    Ok(b)
}

/// Mean, sample variance and standard error of the mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut acc = Accumulator::default();
        for &v in values {
            acc.push(v);
        }
        acc.summary()
    }
}

/// Welford accumulator; merging is order-sensitive only in the last bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn summary(&self) -> Summary {
        let variance = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        let stderr = if self.n > 1 {
            (variance / self.n as f64).sqrt()
        } else {
            0.0
        };
        Summary {
            n: self.n,
            mean: self.mean,
            variance,
            stderr,
        }
    }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Distinct integers, log-spaced from `lo` to `hi`.
pub fn log_space_int(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    let mut out: Vec<u64> = log_space(lo as f64, hi as f64, n)
        .into_iter()
        .map(|x| x.round() as u64)
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn weighted_fit_matches_ols_at_equal_weights() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.1, 1.2, 1.9, 3.2, 3.9];
        let a = linear_fit(&xs, &ys).unwrap();
        let b = weighted_linear_fit(&xs, &ys, &[2.0; 5]).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12 && (a.intercept - b.intercept).abs() < 1e-12);
        assert!((a.stderr - b.stderr).abs() < 1e-12);
    }

    #[test]
    fn weighted_fit_ignores_downweighted_outlier() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 3.0, 5.0, 7.0, 100.0];
        let fit = weighted_linear_fit(&xs, &ys, &[1.0, 1.0, 1.0, 1.0, 1e-12]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9, "{}", fit.slope);
        assert!(weighted_linear_fit(&xs, &ys, &[1.0, 1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn identity_slope() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let fit = fit_loglog_slope(&xs, &xs, 0..10).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_root_slope() {
        let xs: Vec<f64> = (1..=10).map(|i| f64::from(i) * 3.7).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sqrt()).collect();
        let fit = fit_loglog_slope(&xs, &ys, 0..10).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-9);
        assert!(fit.stderr < 1e-9);
    }

    #[test]
    fn noisy_square_root_slope() {
        let mut rng = RandomSource::new(5, 0);
        let xs = log_space(1.0, 1e4, 40);
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.sqrt() * (1.0 + 0.01 * (2.0 * rng.uniform() - 1.0)))
            .collect();
        let fit = fit_loglog_slope(&xs, &ys, 0..xs.len()).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.02);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let xs = [1.0, 2.0, -3.0];
        let ys = [1.0, 2.0, 3.0];
        assert!(matches!(
            fit_loglog_slope(&xs, &ys, 0..3),
            Err(Error::Domain(_))
        ));
        assert!(fit_loglog_slope(&xs, &ys, 0..2).is_err());
        assert!(matches!(
            fit_loglog_slope(&xs, &ys, 0..4),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn root_linear() {
        let x = solve_root(|x| x - 1.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((x - 1.0).abs() < 1e-14);
    }

    #[test]
    fn root_sqrt_difference() {
        let x = solve_root(
            |x: f64| (1.0 + x).sqrt() - x.sqrt() - 2.0 / 3.0,
            0.0,
            1.0,
            1e-15,
        )
        .unwrap();
        assert!((x - 25.0 / 144.0).abs() < 1e-12);
    }

    #[test]
    fn root_without_sign_change() {
        assert!(matches!(
            solve_root(|x| x * x, 1.0, 2.0, 1e-12),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let whole = Summary::of(&xs);
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        let merged = a.summary();
        assert!((merged.mean - whole.mean).abs() < 1e-14);
        assert!((merged.variance - whole.variance).abs() < 1e-13);
    }
}
