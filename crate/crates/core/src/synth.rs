//! Seeded generative model of individual productivity: event logs with
//! planted, known parameters. Every estimator in the crate is validated by
//! recovering these plants.
//!
//! The shape follows the observed regularities: long-tail group sizes,
//! per-user productivity heterogeneity (random intercepts), and a
//! configurable work-vs-size curve that can saturate.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Months, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_events_csv, write_project_profiles, write_user_profiles, ContributionEvent,
    ProjectProfile, UserProfile,
};
use crate::metrics::Mode;

/// Planted work-vs-size relation `w*(N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProductivityCurve {
    /// `w*(N) = c * N^alpha`.
    PowerLaw { c: f64, alpha: f64 },
    /// `w*(1) = base`; the step to size `j` uses the slope of the last
    /// knot starting strictly below `j`.
    PiecewiseLinear { base: f64, knots: Vec<(u32, f64)> },
    /// `w*(1) = base`; `slopes[i]` is the increment from size i+1 to i+2,
    /// extended with the last entry.
    SlopeTable { base: f64, slopes: Vec<f64> },
}

impl ProductivityCurve {
    pub fn value(&self, n: u32) -> f64 {
        match self {
            ProductivityCurve::PowerLaw { c, alpha } => c * (n as f64).powf(*alpha),
            ProductivityCurve::PiecewiseLinear { base, knots } => {
                let mut w = *base;
                for j in 2..=n {
                    let slope = knots
                        .iter()
                        .filter(|(start, _)| *start < j)
                        .next_back()
                        .map(|(_, s)| *s)
                        .unwrap_or(0.0);
                    w += slope;
                }
                w
            }
            ProductivityCurve::SlopeTable { base, slopes } => {
                let mut w = *base;
                for j in 2..=n {
                    let idx = (j - 2) as usize;
                    w += slopes
                        .get(idx)
                        .or(slopes.last())
                        .copied()
                        .unwrap_or(0.0);
                }
                w
            }
        }
    }

    /// Mean slope of the curve over `[lo, hi]` — the marginal gain a
    /// range fit should recover.
    pub fn mean_slope(&self, lo: u32, hi: u32) -> f64 {
        assert!(hi > lo);
        (self.value(hi) - self.value(lo)) / (hi - lo) as f64
    }
}

/// Generator configuration. A fixed seed yields byte-identical output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_projects: usize,
    /// Discrete power-law exponent for group sizes, `P(N) ~ N^-gamma`
    /// truncated at `size_cap`. Zero gives uniform sizes.
    pub size_exponent: f64,
    pub size_cap: u32,
    pub curve: ProductivityCurve,
    /// Random-intercept spread across users.
    pub user_sd: f64,
    /// Per-row residual noise.
    pub noise_sd: f64,
    pub seed: u64,
    /// Analysis window the corpus targets.
    pub window_months: u32,
    /// Events are spread uniformly over this many months after project
    /// creation; equal to `window_months` to land everything inside the
    /// window, longer for window-sensitivity experiments.
    pub event_horizon_months: u32,
    pub mode: Mode,
    /// Lognormal sd of per-user activity weights for membership sampling;
    /// heavier weights join more projects.
    pub activity_weight_sd: f64,
    /// Per-row byte volume: `E_s = E_n^beta * exp(noise)` (wiki mode).
    pub edit_size_exponent: f64,
    pub edit_size_noise: f64,
    /// Probability a user is a bot / a project is a redirect.
    pub bot_fraction: f64,
    pub redirect_fraction: f64,
    /// Planted profile-feature effects on work, applied as
    /// `coeff * ln(1 + feature)`. Keys: watchers, forks, followers,
    /// owned_repos, description_len, created_pages.
    pub confound_coeffs: BTreeMap<String, f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 2000,
            n_projects: 4000,
            size_exponent: 2.2,
            size_cap: 20,
            curve: ProductivityCurve::PowerLaw {
                c: (2.45f64).exp(),
                alpha: 0.28,
            },
            user_sd: 2.0,
            noise_sd: 2.0,
            seed: 0,
            window_months: 3,
            event_horizon_months: 3,
            mode: Mode::Github,
            activity_weight_sd: 1.0,
            edit_size_exponent: 1.2,
            edit_size_noise: 0.5,
            bot_fraction: 0.0,
            redirect_fraction: 0.0,
            confound_coeffs: BTreeMap::new(),
        }
    }
}

/// Ground truth of one generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    /// Planted intercept per user id.
    pub user_intercepts: BTreeMap<String, f64>,
    /// `w*(N)` tabulated over the size domain.
    pub expected_curve: Vec<(u32, f64)>,
    /// Group sizes drawn per project (generator bookkeeping).
    pub drawn_sizes: BTreeMap<String, u32>,
}

/// A generated corpus: everything the ingest stage consumes, plus truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub events: Vec<ContributionEvent>,
    pub projects: BTreeMap<String, ProjectProfile>,
    pub users: BTreeMap<String, UserProfile>,
    pub truth: SynthTruth,
}

fn normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn lognormal_count(rng: &mut ChaCha12Rng, median: f64, sd: f64) -> u64 {
    (median * (sd * normal(rng)).exp()).floor() as u64
}

/// Draws one group size from the truncated discrete power law by inverse
/// CDF lookup.
struct SizeLaw {
    cdf: Vec<f64>,
}

impl SizeLaw {
    fn new(exponent: f64, cap: u32) -> Self {
        let weights: Vec<f64> = (1..=cap).map(|n| (n as f64).powf(-exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        SizeLaw { cdf }
    }

    fn draw(&self, rng: &mut ChaCha12Rng) -> u32 {
        let u: f64 = rng.random();
        (self.cdf.partition_point(|&c| c < u) as u32 + 1).min(self.cdf.len() as u32)
    }
}

/// Weighted sampling of distinct users by cumulative-weight lookup with
/// rejection on duplicates.
struct UserSampler {
    cumulative: Vec<f64>,
}

impl UserSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        UserSampler { cumulative }
    }

    fn draw_distinct(&self, rng: &mut ChaCha12Rng, k: usize) -> Vec<usize> {
        let total = *self.cumulative.last().unwrap();
        let mut picked = Vec::with_capacity(k);
        let mut seen = std::collections::BTreeSet::new();
        while picked.len() < k {
            let u: f64 = rng.random::<f64>() * total;
            let idx = self.cumulative.partition_point(|&c| c <= u);
            let idx = idx.min(self.cumulative.len() - 1);
            if seen.insert(idx) {
                picked.push(idx);
            }
        }
        picked
    }
}

/// Generates the corpus.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    if config.n_users < config.size_cap as usize {
        return Err(Error::InvalidConfig(format!(
            "{} users cannot fill groups of up to {}",
            config.n_users, config.size_cap
        )));
    }
    if config.n_users == 0 || config.n_projects == 0 {
        return Err(Error::InvalidConfig("empty population".into()));
    }
    if config.user_sd < 0.0 || config.noise_sd < 0.0 {
        return Err(Error::InvalidConfig("negative variance".into()));
    }
    if config.window_months < 1 || config.event_horizon_months < 1 {
        return Err(Error::InvalidConfig("window and horizon must be positive".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let epoch = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();

    // Users: profiles, activity weights, intercepts, bot flags.
    let width = (config.n_users - 1).max(1).ilog10() as usize + 1;
    let mut users = BTreeMap::new();
    let mut weights = Vec::with_capacity(config.n_users);
    let mut intercepts = Vec::with_capacity(config.n_users);
    let mut is_bot = Vec::with_capacity(config.n_users);
    let mut user_ids = Vec::with_capacity(config.n_users);
    for i in 0..config.n_users {
        let id = format!("u{i:0width$}");
        let account_created_at = epoch - Duration::days(rng.random_range(30..1500));
        users.insert(
            id.clone(),
            UserProfile {
                user_id: id.clone(),
                account_created_at,
                followers: lognormal_count(&mut rng, 8.0, 1.2),
                owned_repos: lognormal_count(&mut rng, 3.0, 1.0),
                created_pages: lognormal_count(&mut rng, 2.0, 1.0),
            },
        );
        weights.push((config.activity_weight_sd * normal(&mut rng)).exp());
        intercepts.push(config.user_sd * normal(&mut rng));
        is_bot.push(rng.random::<f64>() < config.bot_fraction);
        user_ids.push(id);
    }

    // Projects: profiles and drawn group sizes.
    let pwidth = (config.n_projects - 1).max(1).ilog10() as usize + 1;
    let size_law = SizeLaw::new(config.size_exponent, config.size_cap);
    let mut projects = BTreeMap::new();
    let mut drawn_sizes = BTreeMap::new();
    let mut project_meta = Vec::with_capacity(config.n_projects);
    for p in 0..config.n_projects {
        let id = format!("p{p:0pwidth$}");
        let created_at = epoch
            + Duration::days(rng.random_range(0..180))
            + Duration::seconds(rng.random_range(0..86_400));
        let profile = ProjectProfile {
            project_id: id.clone(),
            created_at,
            watchers: lognormal_count(&mut rng, 5.0, 1.3),
            forks: lognormal_count(&mut rng, 2.0, 1.2),
            description_len: lognormal_count(&mut rng, 40.0, 0.8),
            is_redirect: rng.random::<f64>() < config.redirect_fraction,
        };
        let size = size_law.draw(&mut rng);
        drawn_sizes.insert(id.clone(), size);
        project_meta.push((id, created_at, size));
        projects.insert(
            project_meta.last().unwrap().0.clone(),
            profile,
        );
    }

    // Memberships and events.
    let sampler = UserSampler::new(&weights);
    let mut events = Vec::new();
    for (project_id, created_at, size) in &project_meta {
        let members = sampler.draw_distinct(&mut rng, *size as usize);
        let horizon_end = created_at
            .checked_add_months(Months::new(config.event_horizon_months))
            .expect("horizon fits the calendar");
        let span_secs = (horizon_end - *created_at).num_seconds();
        let profile = &projects[project_id];
        let confound_shift: f64 = config
            .confound_coeffs
            .iter()
            .map(|(name, coeff)| {
                let v = match name.as_str() {
                    "watchers" => profile.watchers as f64,
                    "forks" => profile.forks as f64,
                    "description_len" => profile.description_len as f64,
                    _ => 0.0,
                };
                coeff * (1.0 + v).ln()
            })
            .sum();
        for &member in &members {
            let user = &users[&user_ids[member]];
            let user_shift: f64 = config
                .confound_coeffs
                .iter()
                .map(|(name, coeff)| {
                    let v = match name.as_str() {
                        "followers" => user.followers as f64,
                        "owned_repos" => user.owned_repos as f64,
                        "created_pages" => user.created_pages as f64,
                        _ => 0.0,
                    };
                    coeff * (1.0 + v).ln()
                })
                .sum();
            let mu = config.curve.value(*size)
                + intercepts[member]
                + confound_shift
                + user_shift
                + config.noise_sd * normal(&mut rng);
            let work = mu.round().max(1.0) as u64;

            let mut stamps: Vec<i64> = (0..work)
                .map(|_| rng.random_range(0..span_secs.max(1)))
                .collect();
            stamps.sort_unstable();

            // Byte volume: planted scaling law, spread across the events.
            let sizes: Option<Vec<u64>> = match config.mode {
                Mode::Github => None,
                Mode::Wikipedia => {
                    let total = ((work as f64).powf(config.edit_size_exponent)
                        * (config.edit_size_noise * normal(&mut rng)).exp())
                    .round()
                    .max(0.0) as u64;
                    let base = total / work;
                    let extra = (total % work) as usize;
                    Some(
                        (0..work as usize)
                            .map(|i| base + u64::from(i < extra))
                            .collect(),
                    )
                }
            };
            for (i, off) in stamps.iter().enumerate() {
                events.push(ContributionEvent {
                    user_id: user_ids[member].clone(),
                    project_id: project_id.clone(),
                    timestamp: *created_at + Duration::seconds(*off),
                    size_bytes: sizes.as_ref().map(|s| s[i]),
                    is_bot: is_bot[member],
                });
            }
        }
    }

    let expected_curve = (1..=config.size_cap)
        .map(|n| (n, config.curve.value(n)))
        .collect();
    let user_intercepts = user_ids
        .iter()
        .zip(&intercepts)
        .map(|(id, &u)| (id.clone(), u))
        .collect();
    Ok(SynthOutput {
        events,
        projects,
        users,
        truth: SynthTruth {
            config: config.clone(),
            user_intercepts,
            expected_curve,
            drawn_sizes,
        },
    })
}

/// Writes `events.csv`, `projects.csv`, `users.csv`, and `truth.json`.
pub fn write_corpus(dir: &Path, output: &SynthOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_events_csv(&dir.join("events.csv"), &output.events)?;
    write_project_profiles(&dir.join("projects.csv"), &output.projects)?;
    write_user_profiles(&dir.join("users.csv"), &output.users)?;
    let truth_path = dir.join("truth.json");
    let file = std::fs::File::create(&truth_path)
        .map_err(|e| Error::io(truth_path.display().to_string(), e))?;
    serde_json::to_writer_pretty(file, &output.truth)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<SynthTruth> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_reader(file)?)
}

/// Parameters recovered by the pipeline, ready to compare against a truth.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RecoveredParams {
    /// Power-law exponent from the mean-work fit.
    pub alpha: Option<f64>,
    /// Per-range marginal gains `(lower, upper, beta1, se)`.
    pub range_slopes: Vec<(u32, u32, f64, f64)>,
    /// Random-intercept variance from the per-user model.
    pub sigma_u2: Option<f64>,
    /// First feature selected by the decomposition.
    pub s3d_first_feature: Option<String>,
}

/// Comparison tolerances for [`truth_check`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthTolerances {
    /// Absolute tolerance on the power-law exponent.
    pub alpha: f64,
    /// Slope tolerance: `se_mult * se + abs_slack` per range.
    pub slope_se_mult: f64,
    pub slope_abs_slack: f64,
    /// Absolute tolerance on the intercept variance.
    pub sigma_u2: f64,
    /// Features accepted as the first selection (empty = don't check).
    pub s3d_first_any_of: Vec<String>,
}

impl Default for TruthTolerances {
    fn default() -> Self {
        TruthTolerances {
            alpha: 0.02,
            slope_se_mult: 2.0,
            slope_abs_slack: 0.05,
            sigma_u2: f64::INFINITY,
            s3d_first_any_of: Vec::new(),
        }
    }
}

/// One parameter comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthCheckEntry {
    pub parameter: String,
    pub planted: f64,
    pub recovered: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// The recovery report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthReport {
    pub entries: Vec<TruthCheckEntry>,
    pub all_pass: bool,
}

/// Compares recovered parameters against the plants.
pub fn truth_check(
    truth: &SynthTruth,
    recovered: &RecoveredParams,
    tol: &TruthTolerances,
) -> TruthReport {
    let mut entries = Vec::new();

    if let Some(alpha_hat) = recovered.alpha {
        if let ProductivityCurve::PowerLaw { alpha, .. } = &truth.config.curve {
            entries.push(TruthCheckEntry {
                parameter: "alpha".into(),
                planted: *alpha,
                recovered: alpha_hat,
                tolerance: tol.alpha,
                pass: (alpha_hat - alpha).abs() <= tol.alpha,
            });
        }
    }

    for &(lo, hi, beta1, se) in &recovered.range_slopes {
        let planted = truth.config.curve.mean_slope(lo, hi);
        let tolerance = tol.slope_se_mult * se + tol.slope_abs_slack;
        entries.push(TruthCheckEntry {
            parameter: format!("beta1[{lo}-{hi}]"),
            planted,
            recovered: beta1,
            tolerance,
            pass: (beta1 - planted).abs() <= tolerance,
        });
    }

    if let Some(s2) = recovered.sigma_u2 {
        let planted = truth.config.user_sd * truth.config.user_sd;
        entries.push(TruthCheckEntry {
            parameter: "sigma_u2".into(),
            planted,
            recovered: s2,
            tolerance: tol.sigma_u2,
            pass: (s2 - planted).abs() <= tol.sigma_u2,
        });
    }

    if let (Some(first), false) = (
        recovered.s3d_first_feature.as_ref(),
        tol.s3d_first_any_of.is_empty(),
    ) {
        let ok = tol.s3d_first_any_of.iter().any(|f| f == first);
        entries.push(TruthCheckEntry {
            parameter: "s3d_first_feature".into(),
            planted: f64::NAN,
            recovered: f64::NAN,
            tolerance: f64::NAN,
            pass: ok,
        });
    }

    let all_pass = entries.iter().all(|e| e.pass);
    TruthReport { entries, all_pass }
}
