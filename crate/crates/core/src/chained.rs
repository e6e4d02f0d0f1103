//! Chained mixed-model analysis over overlapping group-size ranges and the
//! iterative unified curve stitched from the per-range slopes.
//!
//! Each range gets its own random-intercept fit of work on group size plus
//! the mode's confound set; the `beta1` slope is the marginal gain of one
//! extra collaborator inside that range. The unified curve chains those
//! local lines into a single nonlinear work-vs-size relation.

use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lme::{filter_eligible, fit_random_intercept, Criterion, GroupingKey, LmeFit};
use crate::metrics::{Mode, UserProjectRow};
use crate::ols::keep_below_percentile;

/// Confound columns of the size-range model, per platform (the group-size
/// term itself comes first and is always present).
pub fn confound_columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Github => &[
            "effective_size",
            "watchers",
            "user_age_days",
            "group_focus",
            "owned_repos",
            "followers",
            "projects",
        ],
        Mode::Wikipedia => &[
            "effective_size",
            "projects",
            "group_work",
            "largest_group",
            "project_age_days",
            "mean_group",
            "created_pages",
        ],
    }
}

/// Overlapping-range layout over the group-size domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeSpec {
    /// Consecutive sizes per range (`>= 2`).
    pub span: u32,
    /// Step between range starts (`>= 1`).
    pub stride: u32,
    pub lo: u32,
    pub hi: u32,
}

impl RangeSpec {
    pub fn new(span: u32, stride: u32, lo: u32, hi: u32) -> Result<Self> {
        if span < 2 {
            return Err(Error::InvalidConfig("range span must be at least 2".into()));
        }
        if stride < 1 {
            return Err(Error::InvalidConfig("range stride must be at least 1".into()));
        }
        if lo < 1 || hi < lo {
            return Err(Error::InvalidConfig(format!("bad range domain [{lo}, {hi}]")));
        }
        Ok(RangeSpec { span, stride, lo, hi })
    }

    /// Default layout per platform: span 6 / stride 1 over sizes 1..=20,
    /// or span 9 / stride 3 over 1..=70.
    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Github => RangeSpec {
                span: 6,
                stride: 1,
                lo: 1,
                hi: 20,
            },
            Mode::Wikipedia => RangeSpec {
                span: 9,
                stride: 3,
                lo: 1,
                hi: 70,
            },
        }
    }
}

/// Generates the ordered `(lower, upper)` ranges.
///
/// Range starts advance by `stride` while the range fits in the domain.
/// When the stride does not land a range exactly on the domain end, a
/// terminal range anchored at `hi` is appended so the largest sizes are
/// always covered.
pub fn make_ranges(spec: &RangeSpec) -> Result<Vec<(u32, u32)>> {
    let width = spec.hi - spec.lo + 1;
    if spec.span > width {
        return Err(Error::InvalidConfig(format!(
            "range span {} exceeds domain width {width}",
            spec.span
        )));
    }
    let mut out = Vec::new();
    let mut m = spec.lo;
    while m + spec.span - 1 <= spec.hi {
        out.push((m, m + spec.span - 1));
        m += spec.stride;
    }
    if let Some(&(_, last_hi)) = out.last() {
        if last_hi < spec.hi {
            out.push((spec.hi - spec.span + 1, spec.hi));
        }
    }
    Ok(out)
}

/// Estimates for one range, or the reason it was skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeFit {
    pub lower: u32,
    pub upper: u32,
    pub estimate: Option<RangeEstimate>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeEstimate {
    /// Marginal gain: work change per unit group size.
    pub beta1: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_obs: usize,
    /// Grouping levels (users) inside the range after filtering.
    pub n_bins: usize,
    /// Confound columns dropped inside this range for having no variance.
    pub dropped_confounds: Vec<String>,
}

/// The chained analysis across all ranges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainedFit {
    pub ranges: Vec<RangeFit>,
    pub mode: Mode,
    pub response: String,
    pub confounds: Vec<String>,
}

impl ChainedFit {
    /// Fitted ranges in order, skipping the unidentifiable ones.
    pub fn fitted(&self) -> impl Iterator<Item = (&RangeFit, &RangeEstimate)> {
        self.ranges
            .iter()
            .filter_map(|r| r.estimate.as_ref().map(|e| (r, e)))
    }
}

/// Knobs for the chained fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainedOptions {
    pub criterion: Criterion,
    /// Percentile cutoff on row work; rows strictly above it drop.
    pub outlier_percentile: Option<f64>,
    /// Include the mode's confound columns alongside group size.
    pub use_confounds: bool,
    /// Drop rows from oversize-flagged groups.
    pub drop_oversize: bool,
}

impl Default for ChainedOptions {
    fn default() -> Self {
        ChainedOptions {
            criterion: Criterion::Reml,
            outlier_percentile: Some(95.0),
            use_confounds: true,
            drop_oversize: true,
        }
    }
}

/// Runs one random-intercept fit per range on the rows inside it.
///
/// Preprocessing order: oversize rows drop, the work-outlier cut applies
/// globally, then each range keeps rows with `lower <= N <= upper` and
/// eligibility-filters users (two rows over two distinct sizes) before
/// fitting. Confounds with no variance inside a range are dropped there.
pub fn fit_chained(
    rows: &[UserProjectRow],
    spec: &RangeSpec,
    mode: Mode,
    options: &ChainedOptions,
) -> Result<ChainedFit> {
    let ranges = make_ranges(spec)?;
    let mut working: Vec<UserProjectRow> = rows
        .iter()
        .filter(|r| !(options.drop_oversize && r.oversize))
        .cloned()
        .collect();
    if working.is_empty() {
        return Err(Error::EmptyInput("no rows after oversize filtering"));
    }
    if let Some(pct) = options.outlier_percentile {
        let work: Vec<f64> = working.iter().map(|r| r.work as f64).collect();
        let keep = keep_below_percentile(&work, pct);
        working = working
            .into_iter()
            .zip(keep)
            .filter_map(|(r, k)| k.then_some(r))
            .collect();
    }
    let confounds: Vec<String> = if options.use_confounds {
        confound_columns(mode).iter().map(|c| c.to_string()).collect()
    } else {
        Vec::new()
    };

    let fits: Vec<RangeFit> = ranges
        .iter()
        .map(|&(lower, upper)| {
            fit_one_range(&working, lower, upper, &confounds, options.criterion)
        })
        .collect();

    Ok(ChainedFit {
        ranges: fits,
        mode,
        response: "work".to_string(),
        confounds,
    })
}

fn fit_one_range(
    rows: &[UserProjectRow],
    lower: u32,
    upper: u32,
    confounds: &[String],
    criterion: Criterion,
) -> RangeFit {
    let in_range: Vec<UserProjectRow> = rows
        .iter()
        .filter(|r| r.group_size >= lower && r.group_size <= upper)
        .cloned()
        .collect();
    let eligible = filter_eligible(&in_range, GroupingKey::UserId);
    if eligible.is_empty() {
        return RangeFit {
            lower,
            upper,
            estimate: None,
            skipped: Some("no eligible users in range".into()),
        };
    }
    // Confounds that are constant inside the range carry no information and
    // would only break the solve.
    let mut dropped = Vec::new();
    let mut fixed: Vec<&str> = vec!["group_size"];
    for c in confounds {
        let first = eligible[0].feature(c).unwrap_or(0.0);
        let varies = eligible
            .iter()
            .any(|r| r.feature(c).map(|v| v != first).unwrap_or(false));
        if varies {
            fixed.push(c.as_str());
        } else {
            dropped.push(c.clone());
        }
    }
    match fit_random_intercept(&eligible, "work", &fixed, GroupingKey::UserId, criterion) {
        Ok(fit) => {
            let beta1 = fit.beta1();
            let se = fit.beta1_se();
            RangeFit {
                lower,
                upper,
                estimate: Some(RangeEstimate {
                    beta1,
                    se,
                    ci_low: beta1 - 1.96 * se,
                    ci_high: beta1 + 1.96 * se,
                    n_obs: fit.n_obs,
                    n_bins: fit.n_groups,
                    dropped_confounds: dropped,
                }),
                skipped: None,
            }
        }
        Err(e) => RangeFit {
            lower,
            upper,
            estimate: None,
            skipped: Some(e.to_string()),
        },
    }
}

/// Convenience: the plain (no-confound) fit of one range over all rows —
/// the chain-of-one case is exactly `fit_random_intercept`.
pub fn fit_single_range(
    rows: &[UserProjectRow],
    lower: u32,
    upper: u32,
    criterion: Criterion,
) -> Result<LmeFit> {
    let in_range: Vec<UserProjectRow> = rows
        .iter()
        .filter(|r| r.group_size >= lower && r.group_size <= upper)
        .cloned()
        .collect();
    let eligible = filter_eligible(&in_range, GroupingKey::UserId);
    fit_random_intercept(&eligible, "work", &["group_size"], GroupingKey::UserId, criterion)
}

/// One point of the stitched work-vs-size curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnifiedPoint {
    pub k: u32,
    pub w: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// The unified nonlinear model: estimated individual work per group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedCurve {
    pub points: Vec<UnifiedPoint>,
    /// Base value anchoring the first range.
    pub wb1: f64,
}

impl UnifiedCurve {
    pub fn value_at(&self, k: u32) -> Option<f64> {
        self.points.iter().find(|p| p.k == k).map(|p| p.w)
    }
}

/// Stitches the per-range lines into one curve.
///
/// Model `i` predicts `w_k = wb_i + beta1_i (k - lower_i)` on its range;
/// `wb_i` is the mean of all earlier estimates at `k = lower_i` (the first
/// model uses `wb1`); the final value at `k` averages every covering model.
/// The confidence band runs the same recursion along each range's slope CI
/// endpoints and takes the pointwise envelope across models.
///
/// Ranges with identical bounds collapse into one averaged line first, so
/// feeding a duplicated range changes nothing.
pub fn unify(chained: &ChainedFit, wb1: f64) -> Result<UnifiedCurve> {
    let mut fits: Vec<(u32, u32, RangeEstimate)> = Vec::new();
    for (r, e) in chained.fitted() {
        if let Some(existing) = fits
            .iter_mut()
            .find(|(l, u, _)| *l == r.lower && *u == r.upper)
        {
            let merged = &mut existing.2;
            merged.beta1 = (merged.beta1 + e.beta1) / 2.0;
            merged.ci_low = (merged.ci_low + e.ci_low) / 2.0;
            merged.ci_high = (merged.ci_high + e.ci_high) / 2.0;
        } else {
            fits.push((r.lower, r.upper, e.clone()));
        }
    }
    if fits.is_empty() {
        return Err(Error::EmptyInput("no fitted ranges to unify"));
    }
    let domain_lo = fits[0].0;
    let domain_hi = fits.iter().map(|(_, u, _)| *u).max().unwrap();

    // Coverage check: every size in the domain belongs to some range.
    for k in domain_lo..=domain_hi {
        if !fits.iter().any(|(l, u, _)| *l <= k && k <= *u) {
            return Err(Error::CoverageGap(k));
        }
    }

    let idx = |k: u32| (k - domain_lo) as usize;
    let size = (domain_hi - domain_lo + 1) as usize;
    // Accumulated predictions per k for each track.
    let mut mean_preds: Vec<Vec<f64>> = vec![Vec::new(); size];
    let mut low_preds: Vec<Vec<f64>> = vec![Vec::new(); size];
    let mut high_preds: Vec<Vec<f64>> = vec![Vec::new(); size];

    for (i, (lower, upper, est)) in fits.iter().enumerate() {
        let (lower, upper) = (*lower, *upper);
        let (wb, wb_lo, wb_hi) = if i == 0 {
            (wb1, wb1, wb1)
        } else {
            let at = idx(lower);
            if mean_preds[at].is_empty() {
                return Err(Error::CoverageGap(lower));
            }
            let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            (
                mean_of(&mean_preds[at]),
                mean_of(&low_preds[at]),
                mean_of(&high_preds[at]),
            )
        };
        for k in lower..=upper {
            let dk = (k - lower) as f64;
            mean_preds[idx(k)].push(wb + est.beta1 * dk);
            low_preds[idx(k)].push(wb_lo + est.ci_low * dk);
            high_preds[idx(k)].push(wb_hi + est.ci_high * dk);
        }
    }

    let points: Vec<UnifiedPoint> = (domain_lo..=domain_hi)
        .map(|k| {
            let at = idx(k);
            let w = mean_preds[at].iter().sum::<f64>() / mean_preds[at].len() as f64;
            let ci_low = low_preds[at].iter().cloned().fold(f64::INFINITY, f64::min);
            let ci_high = high_preds[at].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            UnifiedPoint { k, w, ci_low, ci_high }
        })
        .collect();
    Ok(UnifiedCurve { points, wb1 })
}

/// One marginal-gain row: the per-range slope with its range midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalGain {
    pub lower: u32,
    pub upper: u32,
    pub midpoint: f64,
    pub beta1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_obs: usize,
    /// Set when the gain is non-positive (the sub-linear regime).
    pub sublinear: bool,
}

/// Projects the chained fit into the marginal-gain table, flagging
/// sub-linear entries.
pub fn marginal_gain_report(chained: &ChainedFit) -> Vec<MarginalGain> {
    chained
        .fitted()
        .map(|(r, e)| MarginalGain {
            lower: r.lower,
            upper: r.upper,
            midpoint: (r.lower + r.upper) as f64 / 2.0,
            beta1: e.beta1,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            n_obs: e.n_obs,
            sublinear: e.beta1 <= 0.0,
        })
        .collect()
}

/// Writes the per-range table (`chained.csv`).
pub fn write_chained_csv(path: &Path, chained: &ChainedFit) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record([
        "range_low",
        "range_high",
        "beta1",
        "se",
        "ci_low",
        "ci_high",
        "observations",
        "bins",
        "avg_bin_size",
        "skipped",
    ])?;
    for r in &chained.ranges {
        match &r.estimate {
            Some(e) => wtr.write_record([
                r.lower.to_string(),
                r.upper.to_string(),
                e.beta1.to_string(),
                e.se.to_string(),
                e.ci_low.to_string(),
                e.ci_high.to_string(),
                e.n_obs.to_string(),
                e.n_bins.to_string(),
                format!("{}", e.n_obs as f64 / e.n_bins as f64),
                String::new(),
            ])?,
            None => wtr.write_record([
                r.lower.to_string(),
                r.upper.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.skipped.clone().unwrap_or_default(),
            ])?,
        }
    }
    wtr.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Reads `chained.csv` back into a fit (estimates only).
pub fn read_chained_csv(path: &Path, mode: Mode) -> Result<ChainedFit> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut ranges = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let lower: u32 = rec[0]
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("{display}: {e}")))?;
        let upper: u32 = rec[1]
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("{display}: {e}")))?;
        if rec[2].is_empty() {
            ranges.push(RangeFit {
                lower,
                upper,
                estimate: None,
                skipped: Some(rec[9].to_string()),
            });
            continue;
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::InvalidConfig(format!("{display}: {e}")))
        };
        ranges.push(RangeFit {
            lower,
            upper,
            estimate: Some(RangeEstimate {
                beta1: parse(&rec[2])?,
                se: parse(&rec[3])?,
                ci_low: parse(&rec[4])?,
                ci_high: parse(&rec[5])?,
                n_obs: rec[6]
                    .parse()
                    .map_err(|e| Error::InvalidConfig(format!("{display}: {e}")))?,
                n_bins: rec[7]
                    .parse()
                    .map_err(|e| Error::InvalidConfig(format!("{display}: {e}")))?,
                dropped_confounds: Vec::new(),
            }),
            skipped: None,
        });
    }
    Ok(ChainedFit {
        ranges,
        mode,
        response: "work".to_string(),
        confounds: Vec::new(),
    })
}

/// Writes the stitched curve (`unified.csv`).
pub fn write_unified_csv(path: &Path, curve: &UnifiedCurve) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(["k", "w", "ci_low", "ci_high"])?;
    for p in &curve.points {
        wtr.write_record([
            p.k.to_string(),
            p.w.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Reads `unified.csv` back.
pub fn read_unified_csv(path: &Path) -> Result<UnifiedCurve> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |e: String| Error::InvalidConfig(format!("{display}: {e}"));
        points.push(UnifiedPoint {
            k: rec[0].parse().map_err(|e| bad(format!("{e}")))?,
            w: rec[1].parse().map_err(|e| bad(format!("{e}")))?,
            ci_low: rec[2].parse().map_err(|e| bad(format!("{e}")))?,
            ci_high: rec[3].parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    let wb1 = points.first().map(|p| p.w).unwrap_or(1.0);
    Ok(UnifiedCurve { points, wb1 })
}
