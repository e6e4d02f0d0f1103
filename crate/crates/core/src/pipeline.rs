//! Pipeline orchestration: a serializable run configuration, the staged
//! ingest → metrics → scaling → ols → lme → chained → unify → s3d run, the
//! window-sensitivity sweep, and plot-data emission.
//!
//! Every artifact lands in the output directory via write-temp-then-rename
//! and carries the configuration hash. Reruns with the same configuration
//! and inputs are byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chained::{
    fit_chained, make_ranges, marginal_gain_report, unify, write_chained_csv, write_unified_csv,
    ChainedFit, ChainedOptions, RangeSpec, UnifiedCurve,
};
use crate::error::{Error, Result};
use crate::ingest::{
    compute_activity_fraction, filter_window, load_events, load_project_profiles,
    load_user_profiles, write_events_csv, EventFormat, LoadOptions, TimeWindow,
    UnknownProjectPolicy, WindowedEvents,
};
use crate::lme::{
    filter_eligible, fit_binned, fit_random_intercept, BinSpec, Criterion, GroupingKey,
};
use crate::metrics::{
    assemble_rows, build_groups, data_range_end, group_level_matrix, group_size_distribution,
    write_groups_csv, write_rows_csv, FeatureMatrix, GroupRecord, Mode, UserProjectRow,
};
use crate::ols::{fit_ols, keep_below_percentile, min_max_scale, prune_correlated, PrunedColumn};
use crate::s3d::{cross_validate_lambda, fit_s3d, CvScore, S3dConfig, S3dModel};
use crate::scaling::{fit_edit_size_scaling, fit_power_law, predict_mean_work, Aggregate, PowerLawFit};
use crate::synth::{truth_check, RecoveredParams, SynthTruth, TruthTolerances};

/// Group-performance regression columns per mode, in priority order.
pub fn ols_group_columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Github => &[
            "group_size",
            "forks",
            "watchers",
            "project_age_days",
            "effective_size",
            "avg_projects",
            "avg_focus",
        ],
        Mode::Wikipedia => &["group_size", "project_age_days", "avg_projects", "avg_focus"],
    }
}

/// Individual-work regression columns per mode.
pub fn ols_user_columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Github => &[
            "effective_size",
            "watchers",
            "group_size",
            "project_age_days",
            "group_focus",
            "projects",
            "followers",
            "owned_repos",
        ],
        Mode::Wikipedia => &[
            "effective_size",
            "projects",
            "group_work",
            "largest_group",
            "created_pages",
            "project_age_days",
            "mean_group",
            "group_size",
        ],
    }
}

/// Feature-selection candidates per mode.
pub fn s3d_columns(mode: Mode) -> Vec<&'static str> {
    let mut cols = vec![
        "effective_size",
        "watchers",
        "forks",
        "group_size",
        "group_focus",
        "user_age_days",
        "project_age_days",
        "projects",
        "largest_group",
        "smallest_group",
        "followers",
        "owned_repos",
        "description_len",
    ];
    if mode == Mode::Wikipedia {
        cols.extend_from_slice(&["group_work", "edit_bytes", "mean_group", "created_pages"]);
    }
    cols
}

/// Short conventional symbol for a feature column, for report tables.
pub fn feature_notation(name: &str) -> &'static str {
    match name {
        "group_size" => "N",
        "effective_size" => "n",
        "group_focus" => "F",
        "focus_share" => "c_i",
        "group_work" => "W",
        "group_mean_work" => "W_bar",
        "projects" => "G_s",
        "avg_projects" => "G_s_bar",
        "avg_focus" => "F_bar",
        "user_work" => "w_u",
        "largest_group" => "N_max",
        "smallest_group" => "N_min",
        "mean_group" => "N_bar",
        "user_age_days" => "A_u",
        "project_age_days" => "A_r",
        "watchers" => "W_c",
        "forks" => "F_o",
        "followers" => "F_l",
        "owned_repos" => "O_r",
        "description_len" => "D_sc",
        "created_pages" => "P_c",
        "edit_bytes" => "E_s",
        "work" => "w",
        _ => "",
    }
}

/// How the unified curve anchors its first range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnifyAnchor {
    /// Fixed base value (one unit of solo work by default).
    Base(f64),
    /// Mean observed work among solo rows; used by the window sweep so
    /// curves from different windows share data units.
    EmpiricalSolo,
}

impl Default for UnifyAnchor {
    fn default() -> Self {
        UnifyAnchor::Base(1.0)
    }
}

/// Stage parameters for the group/user regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OlsParams {
    pub prune_threshold: f64,
    pub outlier_percentile: f64,
    pub scale_response: bool,
}

impl Default for OlsParams {
    fn default() -> Self {
        OlsParams {
            prune_threshold: 0.8,
            outlier_percentile: 95.0,
            scale_response: true,
        }
    }
}

/// Stage parameters for the binned mixed models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmeParams {
    pub quantile_bins: usize,
    pub outlier_percentile: f64,
    pub criterion: Criterion,
}

impl Default for LmeParams {
    fn default() -> Self {
        LmeParams {
            quantile_bins: 5,
            outlier_percentile: 95.0,
            criterion: Criterion::Reml,
        }
    }
}

/// Stage parameters for the chained analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainedParams {
    /// Range span; mode default when absent.
    pub span: Option<u32>,
    pub stride: Option<u32>,
    pub use_confounds: bool,
    pub outlier_percentile: Option<f64>,
}

impl Default for ChainedParams {
    fn default() -> Self {
        ChainedParams {
            span: None,
            stride: None,
            use_confounds: true,
            outlier_percentile: Some(95.0),
        }
    }
}

/// Stage parameters for feature selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct S3dParams {
    pub max_features: usize,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub min_r2_gain: f64,
    pub max_cut_candidates: usize,
}

impl Default for S3dParams {
    fn default() -> Self {
        S3dParams {
            max_features: 8,
            lambda_grid: vec![0.0001, 0.001, 0.01],
            folds: 5,
            min_r2_gain: 1e-4,
            max_cut_candidates: 256,
        }
    }
}

/// Full run configuration; a run is reproducible from this plus inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub events: PathBuf,
    pub event_format: EventFormat,
    pub projects: PathBuf,
    pub users: PathBuf,
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub window_months: u32,
    pub seed: u64,
    pub unknown_project: UnknownProjectPolicy,
    pub max_malformed_fraction: f64,
    pub activity_horizons: Vec<u32>,
    pub powerlaw_aggregate: Aggregate,
    pub ols: OlsParams,
    pub lme: LmeParams,
    pub chained: ChainedParams,
    pub unify_anchor: UnifyAnchor,
    pub s3d: S3dParams,
    pub sweep_windows: Vec<u32>,
    /// Optional ground-truth file; when set, a recovery report is written.
    pub truth: Option<PathBuf>,
    /// Cosmetic SVG rendering of the figure data.
    pub emit_svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            events: PathBuf::from("events.csv"),
            event_format: EventFormat::Csv,
            projects: PathBuf::from("projects.csv"),
            users: PathBuf::from("users.csv"),
            out_dir: PathBuf::from("out"),
            mode: Mode::Github,
            window_months: 3,
            seed: 0,
            unknown_project: UnknownProjectPolicy::DropWithCount,
            max_malformed_fraction: 0.01,
            activity_horizons: vec![1, 2, 3, 6, 12, 24],
            powerlaw_aggregate: Aggregate::PerSizeMean,
            ols: OlsParams::default(),
            lme: LmeParams::default(),
            chained: ChainedParams::default(),
            unify_anchor: UnifyAnchor::default(),
            s3d: S3dParams::default(),
            sweep_windows: vec![1, 2, 3, 6],
            truth: None,
            emit_svg: false,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// FNV-1a hash of the canonical JSON form; stamps every artifact.
    pub fn config_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in canon.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }

    fn range_spec(&self) -> RangeSpec {
        let default = RangeSpec::for_mode(self.mode);
        RangeSpec {
            span: self.chained.span.unwrap_or(default.span),
            stride: self.chained.stride.unwrap_or(default.stride),
            lo: default.lo,
            hi: default.hi,
        }
    }
}

/// Atomic JSON artifact write: temp file in the same directory, then rename.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let display = path.display().to_string();
    let tmp = path.with_extension("json.tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&display, e))?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, value)?;
        use std::io::Write;
        writer.write_all(b"\n").map_err(|e| Error::io(&display, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(&display, e))?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes through a temp path, then renames into place.
fn atomic_csv(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

// --- artifact shapes ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub events_loaded: usize,
    pub malformed_rows: usize,
    pub malformed_detail: Vec<(u64, String)>,
    pub dropped_bot: usize,
    pub dropped_redirect: usize,
    pub dropped_unknown_project: usize,
    pub dropped_outside_window: usize,
    pub window_months: u32,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub groups: usize,
    pub rows: usize,
    pub oversize_groups: usize,
    pub missing_user_profiles: usize,
    pub missing_project_profiles: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerLawArtifact {
    pub alpha: f64,
    pub ln_c: f64,
    pub r2: f64,
    pub se_alpha: f64,
    pub point_count: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsTerm {
    pub variable: String,
    pub notation: String,
    pub beta: f64,
    pub std_err: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsArtifact {
    pub level: String,
    pub response: String,
    pub terms: Vec<OlsTerm>,
    pub r2: f64,
    pub n_obs: usize,
    pub pruned: Vec<PrunedColumn>,
    pub dropped_constant: Vec<String>,
    pub scaled_response: bool,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmeStrategyRow {
    pub grouping: String,
    pub beta1: f64,
    pub se: f64,
    pub p_value: f64,
    pub bins: usize,
    pub max_bin_size: usize,
    pub mean_bin_size: f64,
    pub n_obs: usize,
    pub skipped_bins: usize,
    pub fell_back_to_per_value: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmeArtifact {
    pub response: String,
    pub fixed: Vec<String>,
    pub strategies: Vec<LmeStrategyRow>,
    /// Intercept variance of the per-user model.
    pub sigma_u2: f64,
    pub sigma2: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S3dStepRow {
    pub step: usize,
    pub feature: String,
    pub r2_gain: f64,
    pub penalized_gain: f64,
    pub n_cuts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S3dCandidateRow {
    pub step: usize,
    pub feature: String,
    pub score: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S3dArtifact {
    pub features: Vec<String>,
    pub steps: Vec<S3dStepRow>,
    pub candidates: Vec<S3dCandidateRow>,
    pub total_r2: f64,
    pub lambda: f64,
    pub cv_scores: Vec<CvScore>,
    pub folds: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub mode: Mode,
    pub window_months: u32,
    pub seed: u64,
    pub artifacts: Vec<String>,
}

/// Key numbers of a finished run, for CLI reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub events: usize,
    pub groups: usize,
    pub rows: usize,
    pub alpha: f64,
    pub chained_ranges: usize,
    pub s3d_features: Vec<String>,
    pub truth_all_pass: Option<bool>,
}

// --- stages ---

/// Loaded and windowed inputs shared by the in-memory stages.
pub struct PipelineData {
    pub windowed: WindowedEvents,
    pub groups: Vec<GroupRecord>,
    pub rows: Vec<UserProjectRow>,
}

/// Ingest + metrics on loaded tables, without touching the filesystem.
pub fn prepare_data(
    events: &[crate::ingest::ContributionEvent],
    projects: &BTreeMap<String, crate::ingest::ProjectProfile>,
    users: &BTreeMap<String, crate::ingest::UserProfile>,
    window_months: u32,
    mode: Mode,
    unknown: UnknownProjectPolicy,
) -> Result<PipelineData> {
    let window = TimeWindow::new(window_months)?;
    let windowed = filter_window(events, projects, window, unknown)?;
    if windowed.events.is_empty() {
        return Err(Error::EmptyInput("no events inside the analysis window"));
    }
    let groups = build_groups(&windowed.events, mode);
    let data_end = data_range_end(&groups).expect("nonempty groups");
    let (rows, _missing) = assemble_rows(&groups, projects, users, data_end);
    Ok(PipelineData {
        windowed,
        groups,
        rows,
    })
}

/// The group-performance (and individual-work) OLS stage.
pub fn ols_stage(
    matrix: &FeatureMatrix,
    response: &str,
    level: &str,
    params: &OlsParams,
    config_hash: &str,
) -> Result<OlsArtifact> {
    // Outlier cut on the response.
    let filtered = crate::ols::filter_outliers_p95(matrix, response, params.outlier_percentile)?;

    // Constant columns cannot be scaled; drop them with a note.
    let mut dropped_constant = Vec::new();
    let mut keep: Vec<&str> = Vec::new();
    for name in filtered.names() {
        let col = filtered.column_by_name(name)?;
        let first = col[0];
        if col.iter().any(|&v| v != first) || name == response {
            keep.push(name.as_str());
        } else {
            dropped_constant.push(name.clone());
        }
    }
    let trimmed = filtered.select(&keep)?;

    // Scale, prune predictors, fit.
    let (scaled, _scaler) = if params.scale_response {
        min_max_scale(&trimmed)?
    } else {
        let predictors: Vec<&str> = keep.iter().filter(|&&n| n != response).copied().collect();
        let (scaled_pred, scaler) = min_max_scale(&trimmed.select(&predictors)?)?;
        // Reattach the unscaled response.
        let mut names: Vec<String> = scaled_pred.names().to_vec();
        names.push(response.to_string());
        let resp = trimmed.column_by_name(response)?;
        let mut data = Vec::with_capacity(scaled_pred.n_rows() * names.len());
        for r in 0..scaled_pred.n_rows() {
            for c in 0..scaled_pred.n_cols() {
                data.push(scaled_pred.get(r, c));
            }
            data.push(resp[r]);
        }
        (FeatureMatrix::new(names, scaled_pred.n_rows(), data)?, scaler)
    };

    let predictor_names: Vec<&str> = scaled
        .names()
        .iter()
        .filter(|n| n.as_str() != response)
        .map(|n| n.as_str())
        .collect();
    let (pruned_predictors, prune_report) = if predictor_names.len() >= 2 {
        prune_correlated(&scaled.select(&predictor_names)?, params.prune_threshold)?
    } else {
        (scaled.select(&predictor_names)?, Vec::new())
    };

    let mut fit_columns: Vec<&str> = vec![response];
    fit_columns.extend(pruned_predictors.names().iter().map(|n| n.as_str()));
    let fit_matrix = scaled.select(&fit_columns)?;
    let fit = fit_ols(&fit_matrix, response)?;

    let terms = fit
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| OlsTerm {
            variable: name.clone(),
            notation: feature_notation(name).to_string(),
            beta: fit.coefficients[i],
            std_err: fit.std_errors[i],
            t_stat: fit.t_stats[i],
            p_value: fit.p_values[i],
        })
        .collect();
    Ok(OlsArtifact {
        level: level.to_string(),
        response: response.to_string(),
        terms,
        r2: fit.r2,
        n_obs: fit.n_obs,
        pruned: prune_report,
        dropped_constant,
        scaled_response: params.scale_response,
        config_hash: config_hash.to_string(),
    })
}

/// Preprocessing shared by the mixed-model stages: drop oversize rows and
/// cut the work outliers.
pub fn model_rows(rows: &[UserProjectRow], outlier_percentile: Option<f64>) -> Vec<UserProjectRow> {
    let mut working: Vec<UserProjectRow> =
        rows.iter().filter(|r| !r.oversize).cloned().collect();
    if let Some(pct) = outlier_percentile {
        if !working.is_empty() {
            let work: Vec<f64> = working.iter().map(|r| r.work as f64).collect();
            let keep = keep_below_percentile(&work, pct);
            working = working
                .into_iter()
                .zip(keep)
                .filter_map(|(r, k)| k.then_some(r))
                .collect();
        }
    }
    working
}

/// The binned mixed-model stage (the per-attribute strategies plus the
/// per-user model).
pub fn lme_stage(
    rows: &[UserProjectRow],
    mode: Mode,
    params: &LmeParams,
    config_hash: &str,
) -> Result<LmeArtifact> {
    let working = model_rows(rows, Some(params.outlier_percentile));
    let eligible = filter_eligible(&working, GroupingKey::UserId);
    if eligible.is_empty() {
        return Err(Error::EmptyInput("no eligible users for the mixed models"));
    }

    let mut strategies = Vec::new();
    let mut specs: Vec<(String, BinSpec)> = vec![
        (
            "projects".to_string(),
            BinSpec::PerValue {
                attribute: "projects".into(),
            },
        ),
        (
            "user_work".to_string(),
            BinSpec::quantile("user_work", params.quantile_bins)?,
        ),
    ];
    if mode == Mode::Github {
        specs.push((
            "followers".to_string(),
            BinSpec::quantile("followers", params.quantile_bins)?,
        ));
    }
    for (name, spec) in &specs {
        let binned = fit_binned(&working, spec, "work", &["group_size"], params.criterion)?;
        let sizes: Vec<usize> = binned
            .bins
            .iter()
            .filter(|b| b.fit.is_some())
            .map(|b| b.n_rows)
            .collect();
        let n_obs: usize = binned
            .bins
            .iter()
            .filter_map(|b| b.fit.as_ref().map(|f| f.n_obs))
            .sum();
        strategies.push(LmeStrategyRow {
            grouping: name.clone(),
            beta1: binned.pooled_beta1,
            se: binned.pooled_se,
            p_value: crate::num::normal_two_sided_p(binned.pooled_beta1 / binned.pooled_se.max(1e-300)),
            bins: binned.n_fitted_bins,
            max_bin_size: sizes.iter().copied().max().unwrap_or(0),
            mean_bin_size: sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64,
            n_obs,
            skipped_bins: binned.bins.len() - binned.n_fitted_bins,
            fell_back_to_per_value: binned.fell_back_to_per_value,
        });
    }

    // The finest strategy: every user its own bin, i.e. the user-grouped
    // random-intercept model.
    let per_user = fit_random_intercept(
        &eligible,
        "work",
        &["group_size"],
        GroupingKey::UserId,
        params.criterion,
    )?;
    let mut per_user_rows: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &eligible {
        *per_user_rows.entry(r.user_id.as_str()).or_insert(0) += 1;
    }
    strategies.push(LmeStrategyRow {
        grouping: "user_id".to_string(),
        beta1: per_user.beta1(),
        se: per_user.beta1_se(),
        p_value: per_user.p_values[1],
        bins: per_user.n_groups,
        max_bin_size: per_user_rows.values().copied().max().unwrap_or(0),
        mean_bin_size: per_user.n_obs as f64 / per_user.n_groups as f64,
        n_obs: per_user.n_obs,
        skipped_bins: 0,
        fell_back_to_per_value: false,
    });

    Ok(LmeArtifact {
        response: "work".to_string(),
        fixed: vec!["group_size".to_string()],
        strategies,
        sigma_u2: per_user.random_intercept_var,
        sigma2: per_user.residual_var,
        config_hash: config_hash.to_string(),
    })
}

/// S3D stage: cross-validate the penalty, then fit at the winner.
pub fn s3d_stage(
    rows: &[UserProjectRow],
    mode: Mode,
    params: &S3dParams,
    seed: u64,
    config_hash: &str,
) -> Result<(S3dArtifact, S3dModel)> {
    let working = model_rows(rows, None);
    let mut columns = vec!["work"];
    columns.extend(s3d_columns(mode));
    let matrix = FeatureMatrix::from_rows(&working, &columns)?;
    let base = S3dConfig {
        max_features: params.max_features,
        lambda: params.lambda_grid[0],
        min_r2_gain: params.min_r2_gain,
        max_cut_candidates: params.max_cut_candidates,
    };
    let cv = cross_validate_lambda(&matrix, "work", &params.lambda_grid, params.folds, seed, &base)?;
    let model = fit_s3d(
        &matrix,
        "work",
        &S3dConfig {
            lambda: cv.best_lambda,
            ..base
        },
    )?;
    let steps = model
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| S3dStepRow {
            step: i + 1,
            feature: s.feature.clone(),
            r2_gain: s.r2_gain,
            penalized_gain: s.penalized_gain,
            n_cuts: s.n_cuts,
        })
        .collect();
    let candidates = model
        .feature_importance_steps()
        .into_iter()
        .map(|(step, c)| S3dCandidateRow {
            step,
            feature: c.feature,
            score: c.score,
            selected: c.selected,
        })
        .collect();
    Ok((
        S3dArtifact {
            features: model.features.clone(),
            steps,
            candidates,
            total_r2: model.total_r2,
            lambda: cv.best_lambda,
            cv_scores: cv.scores,
            folds: params.folds,
            config_hash: config_hash.to_string(),
        },
        model,
    ))
}

/// Writes the flattened cell table (`s3d_cells.csv`).
pub fn write_s3d_cells_csv(path: &Path, model: &S3dModel) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let mut header = Vec::new();
    for f in &model.features {
        header.push(format!("{f}_lo"));
        header.push(format!("{f}_hi"));
    }
    header.push("mean".to_string());
    header.push("count".to_string());
    wtr.write_record(&header)?;
    for cell in model.cells() {
        let mut rec: Vec<String> = Vec::new();
        for &(lo, hi) in &cell.bounds {
            rec.push(lo.to_string());
            rec.push(hi.to_string());
        }
        rec.push(cell.mean.to_string());
        rec.push(cell.count.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Mean-work curve samples with the exponent CI band (`curve.csv`).
pub fn write_powerlaw_curve_csv(path: &Path, fit: &PowerLawFit, n_max: u32) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(["n", "mean", "ci_low", "ci_high"])?;
    let (alo, ahi) = fit.alpha_ci95();
    for n in 1..=n_max {
        let x = n as f64;
        let mean = predict_mean_work(fit, x);
        let lo = (fit.ln_c + alo * x.ln()).exp();
        let hi = (fit.ln_c + ahi * x.ln()).exp();
        wtr.write_record([
            n.to_string(),
            mean.to_string(),
            lo.min(hi).to_string(),
            lo.max(hi).to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Per-size mean-work table behind the first figure.
pub fn fig1_rows(rows: &[UserProjectRow]) -> Vec<(u32, f64, f64, f64, usize, usize)> {
    let mut by_size: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.oversize) {
        by_size.entry(r.group_size).or_default().push(r.work as f64);
    }
    by_size
        .into_iter()
        .map(|(n, works)| {
            let k = works.len() as f64;
            let mean = works.iter().sum::<f64>() / k;
            let var = works.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / k;
            let se = (var / k).sqrt();
            (
                n,
                mean,
                mean - 1.96 * se,
                mean + 1.96 * se,
                works.len(),
                works.len() / n as usize,
            )
        })
        .collect()
}

/// Writes the figure-data analogues: per-size means, marginal gains, and
/// the unified curve. SVG rendering elsewhere is cosmetic; these files are
/// the numeric record.
pub fn emit_plots(
    dir: &Path,
    rows: &[UserProjectRow],
    chained: &ChainedFit,
    unified: &UnifiedCurve,
) -> Result<Vec<String>> {
    let mut written = Vec::new();

    let fig1 = dir.join("fig1_mean_work.csv");
    atomic_csv(&fig1, |tmp| {
        let file = std::fs::File::create(tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        let mut wtr = csv::Writer::from_writer(file);
        wtr.write_record(["n", "mean_work", "ci_low", "ci_high", "rows", "groups"])?;
        for (n, mean, lo, hi, nrows, ngroups) in fig1_rows(rows) {
            wtr.write_record([
                n.to_string(),
                mean.to_string(),
                lo.to_string(),
                hi.to_string(),
                nrows.to_string(),
                ngroups.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io(tmp.display().to_string(), e))?;
        Ok(())
    })?;
    written.push("fig1_mean_work.csv".to_string());

    let fig2 = dir.join("fig2_marginal_gain.csv");
    atomic_csv(&fig2, |tmp| {
        let file = std::fs::File::create(tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        let mut wtr = csv::Writer::from_writer(file);
        wtr.write_record([
            "range_low",
            "range_high",
            "midpoint",
            "beta1",
            "ci_low",
            "ci_high",
            "observations",
            "sublinear",
        ])?;
        for g in marginal_gain_report(chained) {
            wtr.write_record([
                g.lower.to_string(),
                g.upper.to_string(),
                g.midpoint.to_string(),
                g.beta1.to_string(),
                g.ci_low.to_string(),
                g.ci_high.to_string(),
                g.n_obs.to_string(),
                g.sublinear.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io(tmp.display().to_string(), e))?;
        Ok(())
    })?;
    written.push("fig2_marginal_gain.csv".to_string());

    let fig3 = dir.join("fig3_unified.csv");
    atomic_csv(&fig3, |tmp| write_unified_csv(tmp, unified))?;
    written.push("fig3_unified.csv".to_string());

    Ok(written)
}

/// Minimal SVG polyline rendering of the unified curve; cosmetic only.
pub fn emit_unified_svg(path: &Path, curve: &UnifiedCurve) -> Result<()> {
    let display = path.display().to_string();
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let xmax = curve.points.iter().map(|p| p.k).max().unwrap_or(1) as f64;
    let ymax = curve
        .points
        .iter()
        .map(|p| p.ci_high)
        .fold(1.0f64, f64::max);
    let sx = |k: f64| pad + (k - 1.0) / (xmax - 1.0).max(1.0) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v / ymax).max(0.0) * (h - 2.0 * pad);
    let mut band = String::new();
    for p in &curve.points {
        band.push_str(&format!("{:.1},{:.1} ", sx(p.k as f64), sy(p.ci_high)));
    }
    for p in curve.points.iter().rev() {
        band.push_str(&format!("{:.1},{:.1} ", sx(p.k as f64), sy(p.ci_low)));
    }
    let line: String = curve
        .points
        .iter()
        .map(|p| format!("{:.1},{:.1} ", sx(p.k as f64), sy(p.w)))
        .collect();
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <polygon points=\"{band}\" fill=\"#9ecae1\" opacity=\"0.5\"/>\n\
         <polyline points=\"{line}\" fill=\"none\" stroke=\"#3182bd\" stroke-width=\"2\"/>\n\
         <line x1=\"{pad}\" y1=\"{y0}\" x2=\"{xw}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         </svg>\n",
        y0 = h - pad,
        xw = w - pad,
    );
    std::fs::write(path, svg).map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Assembles the recovered-parameter view from a run's artifacts.
pub fn recovered_from_artifacts(dir: &Path, mode: Mode) -> Result<RecoveredParams> {
    let power: PowerLawArtifact = read_json(&dir.join("powerlaw.json"))?;
    let chained = crate::chained::read_chained_csv(&dir.join("chained.csv"), mode)?;
    let lme: LmeArtifact = read_json(&dir.join("lme.json"))?;
    let s3d: S3dArtifact = read_json(&dir.join("s3d.json"))?;
    Ok(RecoveredParams {
        alpha: Some(power.alpha),
        range_slopes: chained
            .fitted()
            .map(|(r, e)| (r.lower, r.upper, e.beta1, e.se))
            .collect(),
        sigma_u2: Some(lme.sigma_u2),
        s3d_first_feature: s3d.features.first().cloned(),
    })
}

/// Runs every stage in order, writing all artifacts into the output
/// directory. Any stage error aborts with the stage name attached.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    let hash = config.config_hash();
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let mut artifacts: Vec<String> = Vec::new();

    // --- ingest ---
    let loaded = load_events(
        &config.events,
        config.event_format,
        LoadOptions {
            max_malformed_fraction: config.max_malformed_fraction,
        },
    )
    .map_err(|e| e.in_stage("ingest"))?;
    let projects = load_project_profiles(&config.projects).map_err(|e| e.in_stage("ingest"))?;
    let users = load_user_profiles(&config.users).map_err(|e| e.in_stage("ingest"))?;
    let data = prepare_data(
        &loaded.events,
        &projects,
        &users,
        config.window_months,
        config.mode,
        config.unknown_project,
    )
    .map_err(|e| e.in_stage("ingest"))?;

    atomic_csv(&out.join("windowed_events.csv"), |tmp| {
        write_events_csv(tmp, &data.windowed.events)
    })
    .map_err(|e| e.in_stage("ingest"))?;
    artifacts.push("windowed_events.csv".into());

    let activity = compute_activity_fraction(&loaded.events, &projects, &config.activity_horizons)
        .map_err(|e| e.in_stage("ingest"))?;
    atomic_csv(&out.join("activity.csv"), |tmp| {
        let file = std::fs::File::create(tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        let mut wtr = csv::Writer::from_writer(file);
        wtr.write_record(["horizon_months", "fraction"])?;
        for (h, f) in &activity {
            wtr.write_record([h.to_string(), f.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io(tmp.display().to_string(), e))?;
        Ok(())
    })
    .map_err(|e| e.in_stage("ingest"))?;
    artifacts.push("activity.csv".into());

    write_json(
        &out.join("ingest_report.json"),
        &IngestReport {
            events_loaded: loaded.events.len(),
            malformed_rows: loaded.malformed.len(),
            malformed_detail: loaded.malformed.iter().take(32).cloned().collect(),
            dropped_bot: data.windowed.dropped_bot,
            dropped_redirect: data.windowed.dropped_redirect,
            dropped_unknown_project: data.windowed.dropped_unknown_project,
            dropped_outside_window: data.windowed.dropped_outside_window,
            window_months: config.window_months,
            config_hash: hash.clone(),
        },
    )
    .map_err(|e| e.in_stage("ingest"))?;
    artifacts.push("ingest_report.json".into());

    // --- metrics ---
    atomic_csv(&out.join("groups.csv"), |tmp| write_groups_csv(tmp, &data.groups))
        .map_err(|e| e.in_stage("metrics"))?;
    artifacts.push("groups.csv".into());
    atomic_csv(&out.join("rows.csv"), |tmp| write_rows_csv(tmp, &data.rows))
        .map_err(|e| e.in_stage("metrics"))?;
    artifacts.push("rows.csv".into());
    write_json(
        &out.join("metrics_report.json"),
        &MetricsReport {
            groups: data.groups.len(),
            rows: data.rows.len(),
            oversize_groups: data.groups.iter().filter(|g| g.oversize).count(),
            missing_user_profiles: data
                .rows
                .iter()
                .map(|r| r.user_id.as_str())
                .filter(|u| !users.contains_key(*u))
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            missing_project_profiles: data
                .groups
                .iter()
                .filter(|g| !projects.contains_key(&g.project_id))
                .count(),
            config_hash: hash.clone(),
        },
    )
    .map_err(|e| e.in_stage("metrics"))?;
    artifacts.push("metrics_report.json".into());

    // --- scaling ---
    let scale_points: Vec<(f64, f64)> = data
        .rows
        .iter()
        .filter(|r| !r.oversize)
        .map(|r| (r.group_size as f64, r.work as f64))
        .collect();
    let power = fit_power_law(&scale_points, config.powerlaw_aggregate)
        .map_err(|e| e.in_stage("scaling"))?;
    write_json(
        &out.join("powerlaw.json"),
        &PowerLawArtifact {
            alpha: power.alpha,
            ln_c: power.ln_c,
            r2: power.r2,
            se_alpha: power.se_alpha,
            point_count: power.point_count,
            config_hash: hash.clone(),
        },
    )
    .map_err(|e| e.in_stage("scaling"))?;
    artifacts.push("powerlaw.json".into());
    atomic_csv(&out.join("curve.csv"), |tmp| {
        write_powerlaw_curve_csv(tmp, &power, config.mode.group_size_cap())
    })
    .map_err(|e| e.in_stage("scaling"))?;
    artifacts.push("curve.csv".into());

    if config.mode == Mode::Wikipedia {
        let edit = fit_edit_size_scaling(&data.rows).map_err(|e| e.in_stage("scaling"))?;
        write_json(
            &out.join("edit_size.json"),
            &PowerLawArtifact {
                alpha: edit.alpha,
                ln_c: edit.ln_c,
                r2: edit.r2,
                se_alpha: edit.se_alpha,
                point_count: edit.point_count,
                config_hash: hash.clone(),
            },
        )
        .map_err(|e| e.in_stage("scaling"))?;
        artifacts.push("edit_size.json".into());
    }

    // --- ols ---
    let in_cap_groups: Vec<GroupRecord> = data
        .groups
        .iter()
        .filter(|g| !g.oversize)
        .cloned()
        .collect();
    let group_matrix =
        group_level_matrix(&in_cap_groups, &data.rows).map_err(|e| e.in_stage("ols"))?;
    let mut group_cols: Vec<&str> = vec!["mean_work"];
    group_cols.extend(ols_group_columns(config.mode));
    let group_matrix = group_matrix
        .select(&group_cols)
        .map_err(|e| e.in_stage("ols"))?;
    let ols_group = ols_stage(&group_matrix, "mean_work", "group", &config.ols, &hash)
        .map_err(|e| e.in_stage("ols"))?;
    write_json(&out.join("ols.json"), &ols_group).map_err(|e| e.in_stage("ols"))?;
    artifacts.push("ols.json".into());

    let model = model_rows(&data.rows, None);
    let mut user_cols: Vec<&str> = vec!["work"];
    user_cols.extend(ols_user_columns(config.mode));
    let user_matrix =
        FeatureMatrix::from_rows(&model, &user_cols).map_err(|e| e.in_stage("ols"))?;
    let ols_user = ols_stage(&user_matrix, "work", "user", &config.ols, &hash)
        .map_err(|e| e.in_stage("ols"))?;
    write_json(&out.join("ols_user.json"), &ols_user).map_err(|e| e.in_stage("ols"))?;
    artifacts.push("ols_user.json".into());

    // --- lme ---
    let lme = lme_stage(&data.rows, config.mode, &config.lme, &hash)
        .map_err(|e| e.in_stage("lme"))?;
    write_json(&out.join("lme.json"), &lme).map_err(|e| e.in_stage("lme"))?;
    artifacts.push("lme.json".into());

    // --- chained ---
    let spec = config.range_spec();
    let chained = fit_chained(
        &data.rows,
        &spec,
        config.mode,
        &ChainedOptions {
            criterion: config.lme.criterion,
            outlier_percentile: config.chained.outlier_percentile,
            use_confounds: config.chained.use_confounds,
            drop_oversize: true,
        },
    )
    .map_err(|e| e.in_stage("chained"))?;
    atomic_csv(&out.join("chained.csv"), |tmp| write_chained_csv(tmp, &chained))
        .map_err(|e| e.in_stage("chained"))?;
    artifacts.push("chained.csv".into());

    // --- unify ---
    let wb1 = match config.unify_anchor {
        UnifyAnchor::Base(v) => v,
        UnifyAnchor::EmpiricalSolo => empirical_solo_work(&data.rows).unwrap_or(1.0),
    };
    let unified = unify(&chained, wb1).map_err(|e| e.in_stage("unify"))?;
    atomic_csv(&out.join("unified.csv"), |tmp| write_unified_csv(tmp, &unified))
        .map_err(|e| e.in_stage("unify"))?;
    artifacts.push("unified.csv".into());

    // --- s3d ---
    let (s3d_artifact, s3d_model) =
        s3d_stage(&data.rows, config.mode, &config.s3d, config.seed, &hash)
            .map_err(|e| e.in_stage("s3d"))?;
    write_json(&out.join("s3d.json"), &s3d_artifact).map_err(|e| e.in_stage("s3d"))?;
    artifacts.push("s3d.json".into());
    atomic_csv(&out.join("s3d_cells.csv"), |tmp| {
        write_s3d_cells_csv(tmp, &s3d_model)
    })
    .map_err(|e| e.in_stage("s3d"))?;
    artifacts.push("s3d_cells.csv".into());

    // --- figures ---
    let figs = emit_plots(out, &data.rows, &chained, &unified).map_err(|e| e.in_stage("plots"))?;
    artifacts.extend(figs);
    if config.emit_svg {
        emit_unified_svg(&out.join("fig3_unified.svg"), &unified)
            .map_err(|e| e.in_stage("plots"))?;
        artifacts.push("fig3_unified.svg".into());
    }

    // --- optional recovery report ---
    let mut truth_all_pass = None;
    if let Some(truth_path) = &config.truth {
        let truth: SynthTruth = read_json(truth_path).map_err(|e| e.in_stage("truth"))?;
        let recovered = recovered_from_artifacts(out, config.mode).map_err(|e| e.in_stage("truth"))?;
        let report = truth_check(&truth, &recovered, &TruthTolerances::default());
        truth_all_pass = Some(report.all_pass);
        write_json(&out.join("truth_report.json"), &report).map_err(|e| e.in_stage("truth"))?;
        artifacts.push("truth_report.json".into());
    }

    write_json(
        &out.join("manifest.json"),
        &Manifest {
            config_hash: hash.clone(),
            mode: config.mode,
            window_months: config.window_months,
            seed: config.seed,
            artifacts: artifacts.clone(),
        },
    )?;

    Ok(RunSummary {
        out_dir: out.clone(),
        config_hash: hash,
        events: data.windowed.events.len(),
        groups: data.groups.len(),
        rows: data.rows.len(),
        alpha: power.alpha,
        chained_ranges: chained.ranges.len(),
        s3d_features: s3d_artifact.features,
        truth_all_pass,
    })
}

/// Mean work among solo rows, the empirical curve anchor.
pub fn empirical_solo_work(rows: &[UserProjectRow]) -> Option<f64> {
    let solo: Vec<f64> = rows
        .iter()
        .filter(|r| r.group_size == 1)
        .map(|r| r.work as f64)
        .collect();
    if solo.is_empty() {
        None
    } else {
        Some(solo.iter().sum::<f64>() / solo.len() as f64)
    }
}

/// Ratio of two unified curves at one window step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowRatio {
    pub from_months: u32,
    pub to_months: u32,
    /// Mean over group sizes of `w(N, t_next) / w(N, t)`.
    pub alpha_hat: f64,
    pub sizes_used: usize,
}

/// Window-sensitivity report: one unified curve per window plus the
/// consecutive-window ratios and the saturating-ratio fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub windows: Vec<u32>,
    pub skipped: Vec<(u32, String)>,
    pub curves: Vec<(u32, UnifiedCurve)>,
    pub ratios: Vec<WindowRatio>,
    /// Constant in `alpha(t) = t / (t + z)`, fit by least squares over the
    /// observed ratios (constrained to z >= 0).
    pub z: f64,
    pub fitted_alpha: Vec<(u32, f64)>,
    pub config_hash: String,
}

/// Runs the chained+unified analysis once per window length and compares
/// consecutive curves.
///
/// Curves are anchored at the empirical solo work of their own window so
/// the ratios live in data units.
pub fn sweep_windows(config: &RunConfig, windows: &[u32]) -> Result<SensitivityReport> {
    if windows.len() < 2 {
        return Err(Error::InvalidConfig(
            "sensitivity sweep needs at least two windows".into(),
        ));
    }
    if windows.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig(
            "sweep windows must be non-decreasing".into(),
        ));
    }
    let hash = config.config_hash();
    let loaded = load_events(
        &config.events,
        config.event_format,
        LoadOptions {
            max_malformed_fraction: config.max_malformed_fraction,
        },
    )?;
    let projects = load_project_profiles(&config.projects)?;
    let users = load_user_profiles(&config.users)?;

    let mut curves: Vec<(u32, UnifiedCurve)> = Vec::new();
    let mut skipped: Vec<(u32, String)> = Vec::new();
    for &t in windows {
        let one = || -> Result<UnifiedCurve> {
            let data = prepare_data(
                &loaded.events,
                &projects,
                &users,
                t,
                config.mode,
                config.unknown_project,
            )?;
            let chained = fit_chained(
                &data.rows,
                &config.range_spec(),
                config.mode,
                &ChainedOptions {
                    criterion: config.lme.criterion,
                    outlier_percentile: config.chained.outlier_percentile,
                    use_confounds: config.chained.use_confounds,
                    drop_oversize: true,
                },
            )?;
            let wb1 = empirical_solo_work(&data.rows).unwrap_or(1.0);
            unify(&chained, wb1)
        };
        match one() {
            Ok(curve) => curves.push((t, curve)),
            Err(e) => skipped.push((t, e.to_string())),
        }
    }
    if curves.len() < 2 {
        return Err(Error::NotIdentifiable(
            "fewer than two windows produced a curve".into(),
        ));
    }

    let mut ratios = Vec::new();
    for pair in curves.windows(2) {
        let (t0, ref c0) = pair[0];
        let (t1, ref c1) = pair[1];
        let mut acc = 0.0;
        let mut used = 0usize;
        for p0 in &c0.points {
            if let Some(w1) = c1.value_at(p0.k) {
                if p0.w > 0.0 && w1 > 0.0 {
                    acc += w1 / p0.w;
                    used += 1;
                }
            }
        }
        if used == 0 {
            return Err(Error::NotIdentifiable(format!(
                "windows {t0} and {t1} share no positive curve points"
            )));
        }
        ratios.push(WindowRatio {
            from_months: t0,
            to_months: t1,
            alpha_hat: acc / used as f64,
            sizes_used: used,
        });
    }

    // Least squares for z in alpha(t) = t / (t + z), z >= 0.
    let objective = |z: f64| -> f64 {
        ratios
            .iter()
            .map(|r| {
                let t = r.from_months as f64;
                let e = r.alpha_hat - t / (t + z);
                e * e
            })
            .sum()
    };
    let mut best_z = 0.0;
    let mut best_obj = objective(0.0);
    for i in 0..=600 {
        let z = 10f64.powf(-3.0 + i as f64 * 0.015); // 1e-3 .. 1e6
        let o = objective(z);
        if o < best_obj {
            best_obj = o;
            best_z = z;
        }
    }
    if best_z > 0.0 {
        let (z_ref, _) = crate::num::golden_section_max(best_z / 1.5, best_z * 1.5, 1e-10, |z| {
            -objective(z)
        });
        if objective(z_ref) < best_obj {
            best_z = z_ref;
        }
    }
    let fitted_alpha = ratios
        .iter()
        .map(|r| {
            let t = r.from_months as f64;
            (r.from_months, t / (t + best_z))
        })
        .collect();

    Ok(SensitivityReport {
        windows: windows.to_vec(),
        skipped,
        curves,
        ratios,
        z: best_z,
        fitted_alpha,
        config_hash: hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, write_corpus, ProductivityCurve, SynthConfig};

    fn synth_run_config(dir: &Path, synth: &SynthConfig) -> RunConfig {
        let out = generate(synth).unwrap();
        write_corpus(&dir.join("corpus"), &out).unwrap();
        RunConfig {
            events: dir.join("corpus/events.csv"),
            projects: dir.join("corpus/projects.csv"),
            users: dir.join("corpus/users.csv"),
            out_dir: dir.join("out"),
            mode: synth.mode,
            window_months: synth.window_months,
            truth: Some(dir.join("corpus/truth.json")),
            ..Default::default()
        }
    }

    fn small_synth() -> SynthConfig {
        SynthConfig {
            n_users: 400,
            n_projects: 700,
            size_cap: 10,
            size_exponent: 1.2,
            curve: ProductivityCurve::SlopeTable {
                base: 12.0,
                slopes: vec![3.0],
            },
            user_sd: 1.5,
            noise_sd: 1.5,
            ..Default::default()
        }
    }

    #[test]
    fn pipeline_produces_all_artifacts_and_recovers_truth() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = synth_run_config(dir.path(), &small_synth());
        config.chained.span = Some(4);
        config.chained.stride = Some(2);
        let summary = run_pipeline(&config).unwrap();

        for name in [
            "windowed_events.csv",
            "activity.csv",
            "ingest_report.json",
            "groups.csv",
            "rows.csv",
            "metrics_report.json",
            "powerlaw.json",
            "curve.csv",
            "ols.json",
            "ols_user.json",
            "lme.json",
            "chained.csv",
            "unified.csv",
            "s3d.json",
            "s3d_cells.csv",
            "fig1_mean_work.csv",
            "fig2_marginal_gain.csv",
            "fig3_unified.csv",
            "truth_report.json",
            "manifest.json",
        ] {
            assert!(
                config.out_dir.join(name).exists(),
                "missing artifact {name}"
            );
        }
        assert_eq!(summary.truth_all_pass, Some(true));
        assert!(summary.rows > 0);

        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(config.out_dir.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.config_hash, config.config_hash());
    }

    #[test]
    fn rerunning_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_users: 250,
            n_projects: 400,
            size_cap: 8,
            ..small_synth()
        };
        let mut config = synth_run_config(dir.path(), &synth);
        config.chained.span = Some(4);
        config.chained.stride = Some(2);
        run_pipeline(&config).unwrap();
        let first: BTreeMap<String, Vec<u8>> = std::fs::read_dir(&config.out_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().to_string(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();

        let mut second_config = config.clone();
        second_config.out_dir = dir.path().join("out2");
        run_pipeline(&second_config).unwrap();
        for (name, bytes) in &first {
            if name == "manifest.json" {
                continue; // echoes out_dir-independent data only, but skip anyway
            }
            let other = std::fs::read(second_config.out_dir.join(name)).unwrap();
            assert_eq!(&other, bytes, "artifact {name} differs between runs");
        }
    }

    #[test]
    fn missing_input_reports_stage_and_path() {
        let config = RunConfig {
            events: PathBuf::from("/nonexistent/events.csv"),
            ..Default::default()
        };
        let err = run_pipeline(&config).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ingest"), "{msg}");
        match err {
            Error::Stage { stage, source } => {
                assert_eq!(stage, "ingest");
                assert!(source.to_string().contains("/nonexistent/events.csv"));
            }
            other => panic!("expected stage error, got {other}"),
        }
    }

    #[test]
    fn fig1_means_match_row_recomputation() {
        let out = generate(&small_synth()).unwrap();
        let data = prepare_data(
            &out.events,
            &out.projects,
            &out.users,
            3,
            Mode::Github,
            UnknownProjectPolicy::DropWithCount,
        )
        .unwrap();
        let fig1 = fig1_rows(&data.rows);
        // Distribution-weighted recomputation: mean work per member at N
        // equals total group work at N over member count at N.
        let hist = group_size_distribution(&data.groups);
        for (n, mean, _, _, nrows, ngroups) in fig1 {
            let total: u64 = data
                .groups
                .iter()
                .filter(|g| g.group_size == n && !g.oversize)
                .map(|g| g.total_work)
                .sum();
            let members = n as usize * hist[&n];
            assert_eq!(nrows, members);
            assert_eq!(ngroups, hist[&n]);
            assert!((mean - total as f64 / members as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_repeated_window_ratio_is_exactly_one() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            event_horizon_months: 6,
            ..small_synth()
        };
        let mut config = synth_run_config(dir.path(), &synth);
        config.chained.span = Some(4);
        config.chained.stride = Some(2);
        config.chained.use_confounds = false;
        let report = sweep_windows(&config, &[3, 3]).unwrap();
        assert_eq!(report.ratios.len(), 1);
        assert_eq!(report.ratios[0].alpha_hat, 1.0);
    }

    #[test]
    fn sweep_tracks_event_count_ratio_for_stationary_generator() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_users: 600,
            n_projects: 1200,
            size_cap: 8,
            size_exponent: 0.8,
            curve: ProductivityCurve::SlopeTable {
                base: 40.0,
                slopes: vec![10.0],
            },
            user_sd: 2.0,
            noise_sd: 2.0,
            event_horizon_months: 12,
            ..Default::default()
        };
        let mut config = synth_run_config(dir.path(), &synth);
        config.chained.span = Some(4);
        config.chained.stride = Some(2);
        config.chained.use_confounds = false;
        let report = sweep_windows(&config, &[3, 6]).unwrap();
        assert_eq!(report.ratios.len(), 1);

        // Event-count oracle: windowed event totals from the raw corpus.
        let loaded = load_events(&config.events, EventFormat::Csv, LoadOptions::default()).unwrap();
        let projects = load_project_profiles(&config.projects).unwrap();
        let count_at = |months: u32| -> f64 {
            filter_window(
                &loaded.events,
                &projects,
                TimeWindow { months },
                UnknownProjectPolicy::DropWithCount,
            )
            .unwrap()
            .events
            .len() as f64
        };
        let expected = count_at(6) / count_at(3);
        let got = report.ratios[0].alpha_hat;
        assert!(
            (got - expected).abs() / expected < 0.05,
            "ratio {got} vs event-count ratio {expected}"
        );
    }

    #[test]
    fn sweep_rejects_single_window() {
        let config = RunConfig::default();
        assert!(sweep_windows(&config, &[3]).is_err());
    }
}
