//! Ordinary least squares with the preprocessing used around it: min-max
//! scaling, correlated-predictor pruning, and percentile outlier filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_least_squares, Matrix};
use crate::metrics::FeatureMatrix;
use crate::num::t_two_sided_p;
use crate::stats::{pearson, percentile_linear};

/// Fitted multivariate linear model. The first entry of every per-term
/// vector is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub n_obs: usize,
}

/// Per-column min/max captured by the scaler, enough to invert it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerRecord {
    pub columns: Vec<ScaledColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledColumn {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ScalerRecord {
    /// Maps a scaled value back to the original units.
    pub fn inverse(&self, name: &str, scaled: f64) -> Result<f64> {
        let col = self
            .columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        Ok(col.min + scaled * (col.max - col.min))
    }
}

/// Maps every column onto `[0, 1]` via `(x - min) / (max - min)`.
///
/// A constant column has no scale and is rejected by name.
pub fn min_max_scale(matrix: &FeatureMatrix) -> Result<(FeatureMatrix, ScalerRecord)> {
    let mut scaled = matrix.clone();
    let mut record = ScalerRecord { columns: Vec::new() };
    for c in 0..matrix.n_cols() {
        let col = matrix.column(c);
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::ConstantColumn(matrix.names()[c].clone()));
        }
        let span = max - min;
        for r in 0..matrix.n_rows() {
            scaled.set(r, c, (matrix.get(r, c) - min) / span);
        }
        record.columns.push(ScaledColumn {
            name: matrix.names()[c].clone(),
            min,
            max,
        });
    }
    Ok((scaled, record))
}

/// One pruning decision: `dropped` correlated with `kept` at `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedColumn {
    pub dropped: String,
    pub kept: String,
    pub correlation: f64,
}

/// Greedy correlation pruning in declared column order: a column is dropped
/// when its absolute Pearson correlation with an already-kept column
/// exceeds the threshold. Earlier columns take priority.
pub fn prune_correlated(
    matrix: &FeatureMatrix,
    threshold: f64,
) -> Result<(FeatureMatrix, Vec<PrunedColumn>)> {
    if matrix.n_cols() < 2 {
        return Err(Error::InvalidConfig(
            "correlation pruning needs at least two columns".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = (0..matrix.n_cols()).map(|c| matrix.column(c)).collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut report = Vec::new();
    'cols: for c in 0..matrix.n_cols() {
        for &k in &kept {
            let r = pearson(&columns[c], &columns[k]);
            if r.abs() > threshold {
                report.push(PrunedColumn {
                    dropped: matrix.names()[c].clone(),
                    kept: matrix.names()[k].clone(),
                    correlation: r,
                });
                continue 'cols;
            }
        }
        kept.push(c);
    }
    let keep_names: Vec<&str> = kept.iter().map(|&c| matrix.names()[c].as_str()).collect();
    Ok((matrix.select(&keep_names)?, report))
}

/// Keep-mask that removes values strictly above the given percentile
/// (linear-interpolation convention).
pub fn keep_below_percentile(values: &[f64], percentile: f64) -> Vec<bool> {
    assert!(!values.is_empty());
    let cutoff = percentile_linear(values, percentile);
    values.iter().map(|&v| v <= cutoff).collect()
}

/// Drops matrix rows whose `column` value sits strictly above the
/// percentile cutoff.
pub fn filter_outliers_p95(
    matrix: &FeatureMatrix,
    column: &str,
    percentile: f64,
) -> Result<FeatureMatrix> {
    let values = matrix.column_by_name(column)?;
    Ok(matrix.filter_rows(&keep_below_percentile(&values, percentile)))
}

/// Fits the response on all other columns plus an intercept, by QR.
///
/// Standard errors come from `sigma² (X'X)^{-1}`, p-values from the t
/// distribution with `n - k` degrees of freedom.
pub fn fit_ols(matrix: &FeatureMatrix, response: &str) -> Result<OlsFit> {
    let y_idx = matrix.column_index(response)?;
    let y = matrix.column(y_idx);
    let predictors: Vec<usize> = (0..matrix.n_cols()).filter(|&c| c != y_idx).collect();
    let n = matrix.n_rows();
    let k = predictors.len() + 1;
    if n <= k + 1 {
        return Err(Error::NotIdentifiable(format!(
            "{n} observations cannot support {k} coefficients"
        )));
    }

    let mut design = Matrix::zeros(n, k);
    for r in 0..n {
        design.set(r, 0, 1.0);
        for (j, &c) in predictors.iter().enumerate() {
            design.set(r, j + 1, matrix.get(r, c));
        }
    }
    let ls = qr_least_squares(&design, &y).map_err(|e| match e {
        Error::RankDeficient { columns } => Error::RankDeficient {
            columns: columns
                .iter()
                .map(|c| {
                    // Map "column j" back to the feature name.
                    c.strip_prefix("column ")
                        .and_then(|s| s.parse::<usize>().ok())
                        .map(|j| {
                            if j == 0 {
                                "intercept".to_string()
                            } else {
                                matrix.names()[predictors[j - 1]].clone()
                            }
                        })
                        .unwrap_or_else(|| c.clone())
                })
                .collect(),
        },
        other => other,
    })?;

    let dof = (n - k) as f64;
    let sigma2 = ls.rss / dof;
    let mut names = vec!["intercept".to_string()];
    names.extend(predictors.iter().map(|&c| matrix.names()[c].clone()));
    let std_errors: Vec<f64> = (0..k)
        .map(|i| (sigma2 * ls.xtx_inv.get(i, i)).max(0.0).sqrt())
        .collect();
    let t_stats: Vec<f64> = ls
        .beta
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| if se > 0.0 { b / se } else { f64::INFINITY })
        .collect();
    let p_values: Vec<f64> = t_stats
        .iter()
        .map(|&t| if t.is_finite() { t_two_sided_p(t, dof) } else { 0.0 })
        .collect();

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let r2 = if tss <= f64::EPSILON * n as f64 {
        1.0
    } else {
        (1.0 - ls.rss / tss).clamp(0.0, 1.0)
    };

    Ok(OlsFit {
        names,
        coefficients: ls.beta,
        std_errors,
        t_stats,
        p_values,
        r2,
        n_obs: n,
    })
}

impl OlsFit {
    /// Coefficient looked up by term name.
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.p_values[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn matrix(names: &[&str], rows: &[Vec<f64>]) -> FeatureMatrix {
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        FeatureMatrix::new(
            names.iter().map(|s| s.to_string()).collect(),
            rows.len(),
            data,
        )
        .unwrap()
    }

    fn normal(rng: &mut ChaCha12Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn scales_column_to_unit_interval() {
        let m = matrix(&["a"], &[vec![0.0], vec![5.0], vec![10.0]]);
        let (scaled, rec) = min_max_scale(&m).unwrap();
        assert_eq!(scaled.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(rec.columns[0].min, 0.0);
        assert_eq!(rec.columns[0].max, 10.0);
    }

    #[test]
    fn unit_interval_column_is_identity() {
        let m = matrix(&["a"], &[vec![0.0], vec![0.25], vec![1.0]]);
        let (scaled, _) = min_max_scale(&m).unwrap();
        assert_eq!(scaled.column(0), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn scaling_round_trips_through_inverse() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>() * 40.0 - 7.0]).collect();
        let m = matrix(&["v"], &rows);
        let (scaled, rec) = min_max_scale(&m).unwrap();
        for r in 0..m.n_rows() {
            let back = rec.inverse("v", scaled.get(r, 0)).unwrap();
            assert!((back - m.get(r, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected_by_name() {
        let m = matrix(&["ok", "flat"], &[vec![1.0, 3.0], vec![2.0, 3.0]]);
        match min_max_scale(&m) {
            Err(Error::ConstantColumn(name)) => assert_eq!(name, "flat"),
            other => panic!("expected ConstantColumn, got {other:?}"),
        }
    }

    #[test]
    fn prunes_exact_multiple() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let x = i as f64;
                vec![x, 2.0 * x, (x * 0.7).sin()]
            })
            .collect();
        let m = matrix(&["x1", "x2", "x3"], &rows);
        let (pruned, report) = prune_correlated(&m, 0.8).unwrap();
        assert_eq!(pruned.names(), &["x1".to_string(), "x3".to_string()]);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].dropped, "x2");
        assert_eq!(report[0].kept, "x1");
        assert!((report[0].correlation.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn keeps_exactly_one_of_three_duplicates() {
        let rows: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64; 3]).collect();
        let m = matrix(&["a", "b", "c"], &rows);
        let (pruned, report) = prune_correlated(&m, 0.8).unwrap();
        assert_eq!(pruned.n_cols(), 1);
        assert_eq!(pruned.names(), &["a".to_string()]);
        assert_eq!(report.len(), 2);
    }

    /// Monte-Carlo: independent standard normals stay un-pruned at the 0.8
    /// threshold, far above n = 1e4 sampling noise.
    #[test]
    fn independent_columns_survive_pruning() {
        for seed in 0..5u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..10_000)
                .map(|_| (0..4).map(|_| normal(&mut rng)).collect())
                .collect();
            let m = matrix(&["a", "b", "c", "d"], &rows);
            let (pruned, report) = prune_correlated(&m, 0.8).unwrap();
            assert_eq!(pruned.n_cols(), 4, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn outlier_filter_on_1_to_100() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let keep = keep_below_percentile(&values, 95.0);
        let kept: Vec<f64> = values
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&v, _)| v)
            .collect();
        // Interpolated p95 of 1..100 is 95.05, so 96..=100 drop.
        assert_eq!(kept.len(), 95);
        assert_eq!(*kept.last().unwrap(), 95.0);
    }

    #[test]
    fn outlier_filter_keeps_equal_values() {
        let values = vec![7.0; 40];
        assert!(keep_below_percentile(&values, 95.0).iter().all(|&k| k));
    }

    /// Sort-and-cut oracle for the retained set.
    #[test]
    fn outlier_filter_matches_sort_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..501).map(|_| rng.random::<f64>() * 1000.0).collect();
        let keep = keep_below_percentile(&values, 95.0);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (sorted.len() - 1) as f64 * 0.95;
        let cut = sorted[h.floor() as usize]
            + (h - h.floor()) * (sorted[h.ceil() as usize] - sorted[h.floor() as usize]);
        for (v, k) in values.iter().zip(&keep) {
            assert_eq!(*k, *v <= cut);
        }
    }

    #[test]
    fn ols_exact_line() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let x = i as f64;
                vec![3.0 + 2.0 * x, x]
            })
            .collect();
        let m = matrix(&["y", "x"], &rows);
        let fit = fit_ols(&m, "y").unwrap();
        assert_relative_eq!(fit.coefficient("intercept").unwrap(), 3.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficient("x").unwrap(), 2.0, epsilon = 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    /// Independent normal-equations oracle (Gaussian elimination with
    /// partial pivoting), checked on random instances.
    fn normal_equations_solve(x_rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let k = x_rows[0].len();
        let mut a = vec![vec![0.0f64; k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                a[i][j] = x_rows.iter().map(|r| r[i] * r[j]).sum();
            }
            a[i][k] = x_rows.iter().zip(y).map(|(r, &yy)| r[i] * yy).sum();
        }
        for col in 0..k {
            let piv = (col..k).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
            a.swap(col, piv);
            for row in 0..k {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for j in col..=k {
                        a[row][j] -= f * a[col][j];
                    }
                }
            }
        }
        (0..k).map(|i| a[i][k] / a[i][i]).collect()
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        for seed in 0..20u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = 50;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let x1 = normal(&mut rng) * 2.0;
                    let x2 = normal(&mut rng) + 0.5;
                    let x3 = rng.random::<f64>() * 5.0;
                    let y = 1.5 - 0.7 * x1 + 2.2 * x2 + 0.3 * x3 + normal(&mut rng) * 0.5;
                    vec![y, x1, x2, x3]
                })
                .collect();
            let m = matrix(&["y", "x1", "x2", "x3"], &rows);
            let fit = fit_ols(&m, "y").unwrap();
            let design: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, r[1], r[2], r[3]]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let oracle = normal_equations_solve(&design, &y);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn planted_group_size_effect_is_recovered() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let n: f64 = rng.random_range(1..=20) as f64 / 20.0;
                let c1 = rng.random::<f64>();
                let c2 = rng.random::<f64>();
                let y = 0.03 + 0.92 * n + 0.2 * c1 + normal(&mut rng) * 0.1;
                vec![y, n, c1, c2]
            })
            .collect();
        let m = matrix(&["mean_work", "group_size", "watchers", "forks"], &rows);
        let fit = fit_ols(&m, "mean_work").unwrap();
        assert!(fit.coefficient("group_size").unwrap() > 0.0);
        assert!(fit.p_value("group_size").unwrap() < 0.005);
    }

    #[test]
    fn rank_deficiency_lists_column_names() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let x = i as f64;
                vec![x + 1.0, x, 3.0 * x]
            })
            .collect();
        let m = matrix(&["y", "x", "x_dup"], &rows);
        match fit_ols(&m, "y") {
            Err(Error::RankDeficient { columns }) => {
                assert!(columns.contains(&"x_dup".to_string()), "{columns:?}");
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn residuals_orthogonal_to_retained_columns() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| {
                let x1 = normal(&mut rng);
                let x2 = rng.random::<f64>() * 3.0;
                let y = 0.4 + x1 - 0.5 * x2 + normal(&mut rng);
                vec![y, x1, x2]
            })
            .collect();
        let m = matrix(&["y", "x1", "x2"], &rows);
        let fit = fit_ols(&m, "y").unwrap();
        let residuals: Vec<f64> = rows
            .iter()
            .map(|r| {
                r[0] - fit.coefficients[0] - fit.coefficients[1] * r[1] - fit.coefficients[2] * r[2]
            })
            .collect();
        let res_norm = residuals.iter().map(|e| e * e).sum::<f64>().sqrt();
        for col in 1..=2 {
            let column: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            let col_norm = column.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = residuals.iter().zip(&column).map(|(e, v)| e * v).sum();
            assert!(
                (dot / (res_norm * col_norm)).abs() < 1e-8,
                "column {col} not orthogonal"
            );
        }
    }

    #[test]
    fn permuting_rows_leaves_fit_unchanged() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let mut rows: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let x = normal(&mut rng);
                vec![1.0 + 2.0 * x + normal(&mut rng) * 0.3, x]
            })
            .collect();
        let before = fit_ols(&matrix(&["y", "x"], &rows), "y").unwrap();
        rows.reverse();
        rows.swap(3, 40);
        let after = fit_ols(&matrix(&["y", "x"], &rows), "y").unwrap();
        for (a, b) in before.coefficients.iter().zip(&after.coefficients) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn vanishing_noise_column_leaves_coefficients() {
        // A tiny-amplitude noise column must not move exact-fit
        // coefficients beyond 1e-6. (Amplitudes below the QR pivot
        // threshold are rejected as collinear instead.)
        let mut rng = ChaCha12Rng::seed_from_u64(66);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let x = i as f64;
                vec![3.0 + 2.0 * x, x, normal(&mut rng) * 1e-6]
            })
            .collect();
        let with_noise = fit_ols(&matrix(&["y", "x", "noise"], &rows), "y").unwrap();
        assert!((with_noise.coefficient("intercept").unwrap() - 3.0).abs() < 1e-6);
        assert!((with_noise.coefficient("x").unwrap() - 2.0).abs() < 1e-6);
    }
}
