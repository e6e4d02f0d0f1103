//! Power-law fits on log-log axes: mean work per member vs. group size,
//! the total-work integral curve, and the edit-count vs. edit-size
//! relation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::UserProjectRow;
use crate::num::Real;
use crate::stats::simple_regression;
use crate::Scalar;

/// Fitted `y = c * x^alpha`, estimated by least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<F = Scalar> {
    pub alpha: F,
    /// Multiplicative constant, stored as `ln c`.
    pub ln_c: F,
    /// R² of the log-log regression; 1 for a noiseless constant response.
    pub r2: F,
    /// Standard error of the exponent from the OLS slope.
    pub se_alpha: F,
    pub point_count: usize,
}

impl<F: Real> PowerLawFit<F> {
    /// 95% confidence interval for the exponent (±1.96 SE).
    pub fn alpha_ci95(&self) -> (F, F) {
        let half = F::of(1.96) * self.se_alpha;
        (self.alpha - half, self.alpha + half)
    }
}

/// How points are pooled before the log-log regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    /// Average y within each integer x first (work aggregated by size).
    #[default]
    PerSizeMean,
    /// Use the raw point cloud.
    Raw,
}

/// Fits `y = c * x^alpha` by least squares on the logs.
///
/// Requires strictly positive coordinates and at least two distinct
/// abscissae after aggregation.
pub fn fit_power_law<F: Real>(points: &[(F, F)], aggregate: Aggregate) -> Result<PowerLawFit<F>> {
    for &(x, y) in points {
        if x <= F::zero() || y <= F::zero() {
            return Err(Error::LogDomain {
                context: "power-law fit",
                value: if x <= F::zero() { x.as_f64() } else { y.as_f64() },
            });
        }
    }
    let pooled: Vec<(F, F)> = match aggregate {
        Aggregate::Raw => points.to_vec(),
        Aggregate::PerSizeMean => {
            let mut sums: std::collections::BTreeMap<i64, (F, usize)> = Default::default();
            for &(x, y) in points {
                let key = x.round().as_f64() as i64;
                let e = sums.entry(key).or_insert((F::zero(), 0));
                e.0 = e.0 + y;
                e.1 += 1;
            }
            sums.into_iter()
                .map(|(k, (sum, cnt))| (F::of(k as f64), sum / F::of(cnt as f64)))
                .collect()
        }
    };
    let xs: Vec<F> = pooled.iter().map(|&(x, _)| x.ln()).collect();
    let ys: Vec<F> = pooled.iter().map(|&(_, y)| y.ln()).collect();
    let fit = simple_regression(&xs, &ys).ok_or(Error::NotIdentifiable(
        "power-law fit needs two distinct positive abscissae".into(),
    ))?;
    Ok(PowerLawFit {
        alpha: fit.slope,
        ln_c: fit.intercept,
        r2: fit.r2,
        se_alpha: fit.slope_se,
        point_count: pooled.len(),
    })
}

/// Mean work per member predicted at group size `n`: `c * n^alpha`.
pub fn predict_mean_work<F: Real>(fit: &PowerLawFit<F>, n: F) -> F {
    (fit.ln_c + fit.alpha * n.ln()).exp()
}

/// Total-work curve `W(N) = c/(alpha+1) * N^(alpha+1) + C`, the integral of
/// the mean-work power law. The printed form of the source equation drops
/// the `c` prefactor that its own integrand carries; the implementation
/// keeps it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalWorkCurve<F = Scalar> {
    pub alpha: F,
    pub c: F,
    /// Integration constant; defaults to 0.
    pub constant: F,
}

impl<F: Real> TotalWorkCurve<F> {
    pub fn new(alpha: F, c: F) -> Self {
        TotalWorkCurve {
            alpha,
            c,
            constant: F::zero(),
        }
    }
}

/// Evaluates the total-work curve at group size `n >= 1`.
pub fn total_work<F: Real>(curve: &TotalWorkCurve<F>, n: F) -> Result<F> {
    let a1 = curve.alpha + F::one();
    if a1 == F::zero() {
        return Err(Error::InvalidConfig(
            "total-work curve undefined at alpha = -1 (logarithmic case)".into(),
        ));
    }
    Ok(curve.c / a1 * n.powf(a1) + curve.constant)
}

/// Log-log fit of per-row byte volume (`E_s`) against edit count (`E_n`).
pub fn fit_edit_size_scaling(rows: &[UserProjectRow]) -> Result<PowerLawFit> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.oversize)
        .map(|r| (r.work as f64, r.edit_bytes as f64))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyInput("no rows with edit sizes"));
    }
    fit_power_law(&points, Aggregate::Raw)
}
