//! Scalar-generic descriptive statistics shared across the estimators.

use crate::num::Real;

pub fn mean<F: Real>(values: &[F]) -> F {
    debug_assert!(!values.is_empty());
    let sum = values.iter().fold(F::zero(), |s, &v| s + v);
    sum / F::of(values.len() as f64)
}

/// Population variance about the mean.
pub fn variance<F: Real>(values: &[F]) -> F {
    let m = mean(values);
    let ss = values.iter().fold(F::zero(), |s, &v| s + (v - m) * (v - m));
    ss / F::of(values.len() as f64)
}

/// Pearson correlation; returns 0 when either side has zero variance.
pub fn pearson<F: Real>(xs: &[F], ys: &[F]) -> F {
    assert_eq!(xs.len(), ys.len());
    let n = F::of(xs.len() as f64);
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = F::zero();
    let mut syy = F::zero();
    let mut sxy = F::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
        sxy = sxy + dx * dy;
    }
    let _ = n;
    if sxx == F::zero() || syy == F::zero() {
        return F::zero();
    }
    sxy / (sxx * syy).sqrt()
}

/// Percentile in `[0, 100]` with linear interpolation between order
/// statistics (the numpy "linear" convention): index `h = (n-1) * p/100`.
pub fn percentile_linear<F: Real>(values: &[F], p: f64) -> F {
    assert!(!values.is_empty());
    let mut sorted: Vec<F> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    let h = (sorted.len() as f64 - 1.0) * (p / 100.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = F::of(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Simple linear regression `y = a + b x` with the slope standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleFit<F> {
    pub intercept: F,
    pub slope: F,
    /// Coefficient of determination; reported as 1 when the response has no
    /// variance and the fit is exact.
    pub r2: F,
    pub slope_se: F,
    pub intercept_se: F,
    pub n: usize,
}

/// Least-squares line through `(x, y)` pairs. Requires two distinct x.
pub fn simple_regression<F: Real>(xs: &[F], ys: &[F]) -> Option<SimpleFit<F>> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
    }
    if sxx == F::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = F::zero();
    let mut tss = F::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let e = y - (intercept + slope * x);
        rss = rss + e * e;
        tss = tss + (y - my) * (y - my);
    }
    let r2 = if tss == F::zero() {
        F::one()
    } else {
        (F::one() - rss / tss).max(F::zero()).min(F::one())
    };
    let (slope_se, intercept_se) = if n > 2 {
        let sigma2 = rss / F::of((n - 2) as f64);
        let slope_se = (sigma2 / sxx).sqrt();
        let sum_x2 = xs.iter().fold(F::zero(), |s, &x| s + x * x);
        let intercept_se = (sigma2 * sum_x2 / (F::of(n as f64) * sxx)).sqrt();
        (slope_se, intercept_se)
    } else {
        (F::zero(), F::zero())
    };
    Some(SimpleFit {
        intercept,
        slope,
        r2,
        slope_se,
        intercept_se,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn percentile_of_1_to_100_is_95_05() {
        // Hand computation: h = 99 * 0.95 = 94.05 between 95 and 96.
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_relative_eq!(percentile_linear(&v, 95.0), 95.05, epsilon = 1e-12);
    }

    #[test]
    fn percentile_endpoints() {
        let v = [3.0f64, 1.0, 2.0];
        assert_eq!(percentile_linear(&v, 0.0), 1.0);
        assert_eq!(percentile_linear(&v, 100.0), 3.0);
        assert_relative_eq!(percentile_linear(&v, 50.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_perfect_and_degenerate() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(pearson(&x, &y2), 1.0, epsilon = 1e-12);
        let yneg: Vec<f64> = x.iter().map(|v| 5.0 - v).collect();
        assert_relative_eq!(pearson(&x, &yneg), -1.0, epsilon = 1e-12);
        let flat = [7.0f64; 4];
        assert_eq!(pearson(&x, &flat), 0.0);
    }

    #[test]
    fn simple_regression_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x).collect();
        let fit = simple_regression(&xs, &ys).unwrap();
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-12);
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);
        assert!(fit.slope_se < 1e-10);
    }

    #[test]
    fn simple_regression_needs_two_distinct_x() {
        let xs = [2.0f64, 2.0, 2.0];
        let ys = [1.0f64, 2.0, 3.0];
        assert!(simple_regression(&xs, &ys).is_none());
        assert!(simple_regression(&xs[..1], &ys[..1]).is_none());
    }
}
