//! Random-intercept linear mixed models fit by REML (or ML), plus the user
//! binning strategies and eligibility filtering used around them.
//!
//! The model is `y = X beta + u_g + eps` with `u_g ~ N(0, sigma_u^2)` and
//! `eps ~ N(0, sigma^2)`. Writing `theta = sigma_u^2 / sigma^2`, the
//! marginal covariance is block diagonal with blocks
//! `sigma^2 (I + theta 1 1')`, so Sherman-Morrison gives closed-form
//! per-group likelihood contributions from sufficient statistics and the
//! whole problem profiles down to a one-dimensional search over theta.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::metrics::UserProjectRow;
use crate::num::{golden_section_max, normal_two_sided_p, Real};

/// Variance-component estimation criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Restricted maximum likelihood (unbiased variance components).
    #[default]
    Reml,
    /// Plain maximum likelihood.
    Ml,
}

/// Fitted random-intercept model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeFit {
    /// Term names; index 0 is the intercept.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Wald p-values (normal approximation on beta / SE).
    pub p_values: Vec<f64>,
    /// Random-intercept variance `sigma_u^2`.
    pub random_intercept_var: f64,
    /// Residual variance `sigma^2`.
    pub residual_var: f64,
    /// Name of the grouping key the intercepts vary over.
    pub grouping: String,
    /// Log-likelihood (restricted when fit by REML) at the optimum.
    pub log_likelihood: f64,
    pub criterion: Criterion,
    pub n_obs: usize,
    pub n_groups: usize,
    /// Group labels and their predicted intercept deviations (BLUPs).
    pub group_labels: Vec<String>,
    pub group_effects: Vec<f64>,
}

impl LmeFit {
    /// Coefficient of the first fixed column after the intercept — the
    /// marginal-gain slot in every model built here.
    pub fn beta1(&self) -> f64 {
        self.coefficients[1]
    }

    pub fn beta1_se(&self) -> f64 {
        self.std_errors[1]
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }
}

/// Per-group sufficient statistics for the profiled likelihood.
struct GroupStats<F> {
    m: usize,
    sxx: Vec<F>, // p*p, row-major
    sx: Vec<F>,  // p
    sxy: Vec<F>, // p
    sy: F,
    syy: F,
}

/// Profiled evaluation at a fixed variance ratio theta.
struct ProfileEval<F> {
    beta: Vec<F>,
    ssr: F,
    ldet_h: F,
    ldet_a: F,
    a_inv: Matrix<F>,
}

/// Sufficient-statistic kernel for the one-dimensional REML/ML profile.
struct ProfileKernel<F> {
    groups: Vec<GroupStats<F>>,
    p: usize,
    n: usize,
}

impl<F: Real> ProfileKernel<F> {
    /// Builds per-group statistics. `x` is the design including the
    /// intercept column.
    fn new(x: &Matrix<F>, y: &[F], group_idx: &[usize], n_groups: usize) -> Self {
        let p = x.cols();
        let n = x.rows();
        let mut groups: Vec<GroupStats<F>> = (0..n_groups)
            .map(|_| GroupStats {
                m: 0,
                sxx: vec![F::zero(); p * p],
                sx: vec![F::zero(); p],
                sxy: vec![F::zero(); p],
                sy: F::zero(),
                syy: F::zero(),
            })
            .collect();
        for r in 0..n {
            let g = &mut groups[group_idx[r]];
            let row = x.row(r);
            let yi = y[r];
            g.m += 1;
            for i in 0..p {
                g.sx[i] = g.sx[i] + row[i];
                g.sxy[i] = g.sxy[i] + row[i] * yi;
                for j in 0..p {
                    g.sxx[i * p + j] = g.sxx[i * p + j] + row[i] * row[j];
                }
            }
            g.sy = g.sy + yi;
            g.syy = g.syy + yi * yi;
        }
        ProfileKernel { groups, p, n }
    }

    /// GLS solve and determinant terms at the given theta. `None` when the
    /// profiled normal equations lose positive definiteness.
    fn evaluate(&self, theta: F) -> Option<ProfileEval<F>> {
        let p = self.p;
        let mut a = Matrix::zeros(p, p);
        let mut b = vec![F::zero(); p];
        let mut q = F::zero();
        let mut ldet_h = F::zero();
        for g in &self.groups {
            let m = F::of(g.m as f64);
            let c = theta / (F::one() + theta * m);
            ldet_h = ldet_h + (F::one() + theta * m).ln();
            for i in 0..p {
                b[i] = b[i] + g.sxy[i] - c * g.sy * g.sx[i];
                for j in 0..p {
                    let v = g.sxx[i * p + j] - c * g.sx[i] * g.sx[j];
                    a.set(i, j, a.get(i, j) + v);
                }
            }
            q = q + g.syy - c * g.sy * g.sy;
        }
        let chol = Cholesky::decompose(&a).ok()?;
        let beta = chol.solve(&b);
        let fitted = beta
            .iter()
            .zip(&b)
            .fold(F::zero(), |s, (&bi, &vi)| s + bi * vi);
        let ssr = (q - fitted).max(F::zero());
        Some(ProfileEval {
            beta,
            ssr,
            ldet_h,
            ldet_a: chol.log_det(),
            a_inv: chol.inverse(),
        })
    }

    /// Profiled log-likelihood at theta (restricted or plain).
    fn log_likelihood(&self, theta: F, criterion: Criterion) -> F {
        let eval = match self.evaluate(theta) {
            Some(e) => e,
            None => return F::neg_infinity(),
        };
        self.log_likelihood_of(&eval, criterion)
    }

    fn log_likelihood_of(&self, eval: &ProfileEval<F>, criterion: Criterion) -> F {
        let two_pi = F::of(std::f64::consts::TAU);
        let half = F::of(0.5);
        match criterion {
            Criterion::Reml => {
                let dof = F::of((self.n - self.p) as f64);
                let sigma2 = eval.ssr / dof;
                if sigma2 <= F::zero() {
                    return F::infinity();
                }
                -half * (dof * (two_pi * sigma2).ln() + eval.ldet_h + eval.ldet_a + dof)
            }
            Criterion::Ml => {
                let n = F::of(self.n as f64);
                let sigma2 = eval.ssr / n;
                if sigma2 <= F::zero() {
                    return F::infinity();
                }
                -half * (n * (two_pi * sigma2).ln() + eval.ldet_h + n)
            }
        }
    }

    /// Derivative of the profiled log-likelihood in theta (envelope form).
    ///
    /// With `c_g = theta / (1 + theta m_g)` and `c'_g = (1 + theta m_g)^-2`:
    /// `SSR' = q' - 2 b'·beta + beta·A'·beta`, `d ln|H| = sum m_g c'_g ...`,
    /// `d ln|A| = tr(A^-1 A')`. `None` when the profile is degenerate.
    fn score(&self, theta: F, criterion: Criterion) -> Option<F> {
        let eval = self.evaluate(theta)?;
        if eval.ssr <= F::zero() {
            return None;
        }
        let p = self.p;
        let mut ssr_d = F::zero();
        let mut ldet_h_d = F::zero();
        let mut tr_term = F::zero();
        for g in &self.groups {
            let m = F::of(g.m as f64);
            let denom = F::one() + theta * m;
            let c_d = F::one() / (denom * denom);
            ldet_h_d = ldet_h_d + m / denom;
            let bx: F = (0..p).fold(F::zero(), |s, i| s + eval.beta[i] * g.sx[i]);
            // q' - 2 beta·b' + beta·A'·beta, all sharing the -c' factor.
            ssr_d = ssr_d - c_d * (g.sy * g.sy - (F::one() + F::one()) * g.sy * bx + bx * bx);
            // tr(A^-1 A') = -sum c'_g sx·A^-1·sx.
            let mut quad = F::zero();
            for i in 0..p {
                for j in 0..p {
                    quad = quad + g.sx[i] * eval.a_inv.get(i, j) * g.sx[j];
                }
            }
            tr_term = tr_term - c_d * quad;
        }
        let half = F::of(0.5);
        Some(match criterion {
            Criterion::Reml => {
                let dof = F::of((self.n - self.p) as f64);
                -half * (dof * ssr_d / eval.ssr + ldet_h_d + tr_term)
            }
            Criterion::Ml => {
                let n = F::of(self.n as f64);
                -half * (n * ssr_d / eval.ssr + ldet_h_d)
            }
        })
    }
}

/// Raw input to the random-intercept fit: a response, fixed-effect columns
/// (without intercept), and a dense group index per observation.
pub struct LmeInput<'a> {
    pub y: &'a [f64],
    pub fixed: &'a [Vec<f64>],
    pub fixed_names: &'a [String],
    pub group_idx: &'a [usize],
    pub group_labels: Vec<String>,
    pub grouping: String,
}

const THETA_LO: f64 = 1e-8;
const THETA_HI: f64 = 1e8;

/// Fits the random-intercept model on raw columns.
///
/// The variance ratio is located by a coarse scan over `log10 theta` in
/// `[-8, 8]`, golden-section search in the best bracket, a linear
/// refinement at the 1e-10 scale, and an explicit check of the
/// `theta = 0` boundary (which degenerates to OLS and is reported as
/// `sigma_u^2 = 0`).
pub fn fit_lme(input: &LmeInput<'_>, criterion: Criterion) -> Result<LmeFit> {
    let n = input.y.len();
    let p = input.fixed.len() + 1;
    let n_groups = input.group_labels.len();
    if n_groups < 2 {
        return Err(Error::NotIdentifiable(
            "random intercept needs at least two grouping levels".into(),
        ));
    }
    if n <= p {
        return Err(Error::NotIdentifiable(format!(
            "{n} observations cannot support {p} fixed effects"
        )));
    }
    let mut level_counts = vec![0usize; n_groups];
    for &g in input.group_idx {
        level_counts[g] += 1;
    }
    if level_counts.iter().all(|&c| c <= 1) {
        return Err(Error::NotIdentifiable(
            "every grouping level is a singleton; the intercept variance cannot be separated"
                .into(),
        ));
    }

    let mut x = Matrix::zeros(n, p);
    for r in 0..n {
        x.set(r, 0, 1.0);
        for (j, col) in input.fixed.iter().enumerate() {
            x.set(r, j + 1, col[r]);
        }
    }
    let kernel = ProfileKernel::new(&x, input.y, input.group_idx, n_groups);

    let grid_n = 49usize;
    let log_lo = THETA_LO.log10();
    let log_hi = THETA_HI.log10();
    let step = (log_hi - log_lo) / (grid_n - 1) as f64;
    let mut best_i = 0usize;
    let mut best_ll = f64::NEG_INFINITY;
    for i in 0..grid_n {
        let ll = kernel.log_likelihood(10f64.powf(log_lo + step * i as f64), criterion);
        if ll > best_ll {
            best_ll = ll;
            best_i = i;
        }
    }
    let blo = log_lo + step * best_i.saturating_sub(1) as f64;
    let bhi = log_lo + step * (best_i + 1).min(grid_n - 1) as f64;
    let (log_theta, ll_hat) = golden_section_max(blo, bhi, 1e-12, |lt| {
        kernel.log_likelihood(10f64.powf(lt), criterion)
    });
    let mut theta = 10f64.powf(log_theta);
    let mut ll = ll_hat;

    // Golden section localizes theta only to ~sqrt(eps); polish to machine
    // precision by bisecting the sign change of the score. The variance
    // components inherit this precision.
    if let Some(s_hat) = kernel.score(theta, criterion) {
        let mut lo = theta;
        let mut hi = theta;
        if s_hat > 0.0 {
            // Optimum lies to the right.
            let mut s = s_hat;
            while s > 0.0 && hi < THETA_HI {
                lo = hi;
                hi = (hi * 1.5).min(THETA_HI);
                s = kernel.score(hi, criterion).unwrap_or(-1.0);
            }
        } else {
            let mut s = s_hat;
            while s < 0.0 && lo > THETA_LO / 2.0 {
                hi = lo;
                lo = (lo / 1.5).max(0.0);
                s = kernel.score(lo, criterion).unwrap_or(1.0);
                if lo == 0.0 {
                    break;
                }
            }
        }
        let s_lo = kernel.score(lo, criterion);
        let s_hi = kernel.score(hi, criterion);
        if let (Some(mut s_lo), Some(_)) = (s_lo, s_hi) {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                match kernel.score(mid, criterion) {
                    Some(s_mid) => {
                        if s_mid.signum() == s_lo.signum() {
                            lo = mid;
                            s_lo = s_mid;
                        } else {
                            hi = mid;
                        }
                    }
                    None => break,
                }
            }
            let polished = 0.5 * (lo + hi);
            let ll_polished = kernel.log_likelihood(polished, criterion);
            if ll_polished >= ll {
                theta = polished;
                ll = ll_polished;
            }
        }
    }

    let ll_zero = kernel.log_likelihood(0.0, criterion);
    if ll_zero >= ll || theta <= THETA_LO {
        theta = 0.0;
        ll = ll_zero;
    }

    let eval = kernel
        .evaluate(theta)
        .ok_or_else(|| Error::NotIdentifiable("profiled normal equations singular".into()))?;
    let dof = match criterion {
        Criterion::Reml => (n - p) as f64,
        Criterion::Ml => n as f64,
    };
    let sigma2 = eval.ssr / dof;
    let sigma_u2 = theta * sigma2;

    let std_errors: Vec<f64> = (0..p)
        .map(|i| (sigma2 * eval.a_inv.get(i, i)).max(0.0).sqrt())
        .collect();
    let p_values: Vec<f64> = eval
        .beta
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| {
            if se > 0.0 {
                normal_two_sided_p(b / se)
            } else {
                0.0
            }
        })
        .collect();

    // BLUPs: shrunken group-mean residuals.
    let mut group_sum_resid = vec![0.0f64; n_groups];
    for r in 0..n {
        let pred: f64 = (0..p).map(|j| x.get(r, j) * eval.beta[j]).sum();
        group_sum_resid[input.group_idx[r]] += input.y[r] - pred;
    }
    let group_effects: Vec<f64> = group_sum_resid
        .iter()
        .zip(&level_counts)
        .map(|(&s, &m)| theta / (1.0 + theta * m as f64) * s)
        .collect();

    let mut names = vec!["intercept".to_string()];
    names.extend(input.fixed_names.iter().cloned());
    Ok(LmeFit {
        names,
        coefficients: eval.beta,
        std_errors,
        p_values,
        random_intercept_var: sigma_u2,
        residual_var: sigma2,
        grouping: input.grouping.clone(),
        log_likelihood: ll,
        criterion,
        n_obs: n,
        n_groups,
        group_labels: input.group_labels.clone(),
        group_effects,
    })
}

/// Profiled objective exposed for optimality probes.
pub fn profile_objective(input: &LmeInput<'_>, criterion: Criterion, theta: f64) -> f64 {
    let n = input.y.len();
    let p = input.fixed.len() + 1;
    let mut x = Matrix::zeros(n, p);
    for r in 0..n {
        x.set(r, 0, 1.0);
        for (j, col) in input.fixed.iter().enumerate() {
            x.set(r, j + 1, col[r]);
        }
    }
    let kernel = ProfileKernel::new(&x, input.y, input.group_idx, input.group_labels.len());
    kernel.log_likelihood(theta, criterion)
}

/// Predicted response for one observation, including the group effect when
/// the label was seen in training.
pub fn predict(fit: &LmeFit, fixed_values: &[f64], group_label: Option<&str>) -> f64 {
    let mut y = fit.coefficients[0];
    for (j, &v) in fixed_values.iter().enumerate() {
        y += fit.coefficients[j + 1] * v;
    }
    if let Some(label) = group_label {
        if let Some(i) = fit.group_labels.iter().position(|l| l == label) {
            y += fit.group_effects[i];
        }
    }
    y
}

/// Key the random intercepts vary over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingKey {
    #[default]
    UserId,
    ProjectId,
}

impl GroupingKey {
    pub fn name(self) -> &'static str {
        match self {
            GroupingKey::UserId => "user_id",
            GroupingKey::ProjectId => "project_id",
        }
    }

    fn label(self, row: &UserProjectRow) -> &str {
        match self {
            GroupingKey::UserId => &row.user_id,
            GroupingKey::ProjectId => &row.project_id,
        }
    }
}

/// Fits `response ~ fixed_columns + (1 | grouping)` on assembled rows.
pub fn fit_random_intercept(
    rows: &[UserProjectRow],
    response: &str,
    fixed_columns: &[&str],
    grouping: GroupingKey,
    criterion: Criterion,
) -> Result<LmeFit> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no rows to fit"));
    }
    let y: Vec<f64> = rows
        .iter()
        .map(|r| r.feature(response))
        .collect::<Result<_>>()?;
    let mut fixed = Vec::with_capacity(fixed_columns.len());
    for col in fixed_columns {
        fixed.push(
            rows.iter()
                .map(|r| r.feature(col))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    let mut label_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for row in rows {
        let next = label_ids.len();
        label_ids.entry(grouping.label(row)).or_insert(next);
    }
    let group_idx: Vec<usize> = rows.iter().map(|r| label_ids[grouping.label(r)]).collect();
    let mut group_labels = vec![String::new(); label_ids.len()];
    for (label, &i) in &label_ids {
        group_labels[i] = label.to_string();
    }
    let fixed_names: Vec<String> = fixed_columns.iter().map(|c| c.to_string()).collect();
    let input = LmeInput {
        y: &y,
        fixed: &fixed,
        fixed_names: &fixed_names,
        group_idx: &group_idx,
        group_labels,
        grouping: grouping.name().to_string(),
    };
    fit_lme(&input, criterion)
}

/// Binning strategy for the per-bin mixed models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BinSpec {
    /// One bin per user — the finest-grained strategy.
    PerUser,
    /// One bin per distinct attribute value (used for project counts).
    PerValue { attribute: String },
    /// Rank-based quantile bins over the attribute (default 5).
    Quantile { attribute: String, bins: usize },
}

impl BinSpec {
    pub fn quantile(attribute: &str, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidConfig(
                "quantile binning needs at least two bins".into(),
            ));
        }
        Ok(BinSpec::Quantile {
            attribute: attribute.to_string(),
            bins,
        })
    }
}

/// Bin assignment output; `fell_back` is set when a quantile request had
/// fewer distinct values than bins and degraded to per-value bins.
#[derive(Debug, Clone)]
pub struct UserBins {
    pub bins: BTreeMap<String, Vec<UserProjectRow>>,
    pub fell_back: bool,
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Splits rows into bins according to the spec.
pub fn bin_users(rows: &[UserProjectRow], spec: &BinSpec) -> Result<UserBins> {
    match spec {
        BinSpec::PerUser => {
            let mut bins: BTreeMap<String, Vec<UserProjectRow>> = BTreeMap::new();
            for row in rows {
                bins.entry(row.user_id.clone())
                    .or_default()
                    .push(row.clone());
            }
            Ok(UserBins {
                bins,
                fell_back: false,
            })
        }
        BinSpec::PerValue { attribute } => {
            let mut bins: BTreeMap<String, Vec<UserProjectRow>> = BTreeMap::new();
            for row in rows {
                let v = row.feature(attribute)?;
                bins.entry(format_value(v)).or_default().push(row.clone());
            }
            Ok(UserBins {
                bins,
                fell_back: false,
            })
        }
        BinSpec::Quantile { attribute, bins } => {
            if *bins < 2 {
                return Err(Error::InvalidConfig(
                    "quantile binning needs at least two bins".into(),
                ));
            }
            let values: Vec<f64> = rows
                .iter()
                .map(|r| r.feature(attribute))
                .collect::<Result<_>>()?;
            let distinct: std::collections::BTreeSet<u64> =
                values.iter().map(|v| v.to_bits()).collect();
            if distinct.len() < *bins {
                let fallback = bin_users(
                    rows,
                    &BinSpec::PerValue {
                        attribute: attribute.clone(),
                    },
                )?;
                return Ok(UserBins {
                    bins: fallback.bins,
                    fell_back: true,
                });
            }
            // Rank-based equal split; ties broken by row identity so the
            // assignment does not depend on input order.
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| {
                values[a]
                    .total_cmp(&values[b])
                    .then_with(|| rows[a].user_id.cmp(&rows[b].user_id))
                    .then_with(|| rows[a].project_id.cmp(&rows[b].project_id))
            });
            let n = rows.len();
            let k = *bins;
            let base = n / k;
            let extra = n % k;
            let mut out: BTreeMap<String, Vec<UserProjectRow>> = BTreeMap::new();
            let mut cursor = 0usize;
            for b in 0..k {
                let size = base + usize::from(b < extra);
                let id = format!("q{}", b + 1);
                let chunk = out.entry(id).or_default();
                for &idx in &order[cursor..cursor + size] {
                    chunk.push(rows[idx].clone());
                }
                cursor += size;
            }
            Ok(UserBins {
                bins: out,
                fell_back: false,
            })
        }
    }
}

/// Keeps only grouping levels with at least two rows spanning at least two
/// distinct group sizes — the levels that can identify a size slope.
pub fn filter_eligible(rows: &[UserProjectRow], grouping: GroupingKey) -> Vec<UserProjectRow> {
    let mut sizes: BTreeMap<&str, std::collections::BTreeSet<u32>> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for row in rows {
        sizes
            .entry(grouping.label(row))
            .or_default()
            .insert(row.group_size);
        *counts.entry(grouping.label(row)).or_insert(0) += 1;
    }
    rows.iter()
        .filter(|row| {
            let label = grouping.label(row);
            counts[label] >= 2 && sizes[label].len() >= 2
        })
        .cloned()
        .collect()
}

/// Per-bin fit or the reason the bin was skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinFit {
    pub bin_id: String,
    pub n_rows: usize,
    pub fit: Option<LmeFit>,
    pub skipped: Option<String>,
}

/// Binned mixed-model analysis: one fit per bin plus a pooled slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinnedFit {
    pub bins: Vec<BinFit>,
    /// Observation-weighted mean of per-bin beta1.
    pub pooled_beta1: f64,
    /// Combined standard error of the pooled slope.
    pub pooled_se: f64,
    pub n_fitted_bins: usize,
    pub fell_back_to_per_value: bool,
}

/// Fits the model inside every bin, skipping bins too small to identify,
/// and pools the group-size slope across bins.
pub fn fit_binned(
    rows: &[UserProjectRow],
    spec: &BinSpec,
    response: &str,
    fixed_columns: &[&str],
    criterion: Criterion,
) -> Result<BinnedFit> {
    let binned = bin_users(rows, spec)?;
    let mut bins = Vec::new();
    let mut wsum = 0.0f64;
    let mut bsum = 0.0f64;
    let mut var_sum = 0.0f64;
    let mut fitted = 0usize;
    for (bin_id, bin_rows) in &binned.bins {
        let eligible = filter_eligible(bin_rows, GroupingKey::UserId);
        if eligible.is_empty() {
            bins.push(BinFit {
                bin_id: bin_id.clone(),
                n_rows: bin_rows.len(),
                fit: None,
                skipped: Some("no eligible users (need two rows over two sizes)".into()),
            });
            continue;
        }
        match fit_random_intercept(
            &eligible,
            response,
            fixed_columns,
            GroupingKey::UserId,
            criterion,
        ) {
            Ok(fit) => {
                let w = fit.n_obs as f64;
                wsum += w;
                bsum += w * fit.beta1();
                var_sum += (w * fit.beta1_se()).powi(2);
                fitted += 1;
                bins.push(BinFit {
                    bin_id: bin_id.clone(),
                    n_rows: bin_rows.len(),
                    fit: Some(fit),
                    skipped: None,
                });
            }
            Err(e) => bins.push(BinFit {
                bin_id: bin_id.clone(),
                n_rows: bin_rows.len(),
                fit: None,
                skipped: Some(e.to_string()),
            }),
        }
    }
    if fitted == 0 {
        return Err(Error::NotIdentifiable(
            "no bin was identifiable after eligibility filtering".into(),
        ));
    }
    Ok(BinnedFit {
        bins,
        pooled_beta1: bsum / wsum,
        pooled_se: var_sum.sqrt() / wsum,
        n_fitted_bins: fitted,
        fell_back_to_per_value: binned.fell_back,
    })
}
