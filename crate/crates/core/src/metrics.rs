//! Collaboration groups and per-user features: work, group size, effective
//! group size, aggregate focus, and the regression rows every downstream
//! model consumes.
//!
//! `groups.csv` and `rows.csv` emitted here are the interchange contract
//! for the fitting stages.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ts_format, ContributionEvent, ProjectProfile, UserProfile};
use crate::num::Real;

/// Which platform's conventions apply (group-size cap, feature sets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Github,
    Wikipedia,
}

impl Mode {
    /// Flagging threshold for group size: 20 for code hosting, 70 for the
    /// wiki, where the size distribution is less skewed.
    pub fn group_size_cap(self) -> u32 {
        match self {
            Mode::Github => 20,
            Mode::Wikipedia => 70,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "github" => Ok(Mode::Github),
            "wikipedia" => Ok(Mode::Wikipedia),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// One project's collaborator set inside the analysis window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub project_id: String,
    /// Contribution count per member; membership requires at least one.
    pub member_work: BTreeMap<String, u64>,
    /// Byte volume per member (0 where the platform records no sizes).
    pub member_bytes: BTreeMap<String, u64>,
    /// Nominal group size `N`.
    pub group_size: u32,
    /// Total work `W` = sum of member contributions.
    pub total_work: u64,
    /// Effective group size `n` = 2^H of the work shares.
    pub effective_size: f64,
    /// Mean work per member `W/N`.
    pub mean_work: f64,
    /// Set when the group exceeds the mode's size cap; flagged, not dropped.
    pub oversize: bool,
    /// Last contribution seen for the project (drives project age).
    #[serde(with = "ts_format")]
    pub last_event_at: DateTime<Utc>,
}

/// Effective group size `n = 2^H`, `H = -Σ f_i log2 f_i`, `f_i = w_i / W`.
///
/// Uniform work is an exact identity (`n = N`), so that case short-circuits
/// instead of accumulating rounding error.
pub fn effective_group_size<F: Real>(work: &[F]) -> Result<F> {
    if work.is_empty() {
        return Err(Error::EmptyInput("effective group size of an empty group"));
    }
    if let Some(bad) = work.iter().find(|&&w| w <= F::zero()) {
        return Err(Error::LogDomain {
            context: "effective group size",
            value: bad.as_f64(),
        });
    }
    let first = work[0];
    if work.iter().all(|&w| w == first) {
        return Ok(F::of(work.len() as f64));
    }
    let total = work.iter().fold(F::zero(), |s, &w| s + w);
    let mut entropy = F::zero();
    for &w in work {
        let f = w / total;
        entropy = entropy - f * f.log2();
    }
    Ok(entropy.exp2())
}

/// Builds one group per project with at least one windowed event.
///
/// Groups whose size exceeds the mode cap are flagged `oversize`; dropping
/// is left to the fitting stages.
pub fn build_groups(events: &[ContributionEvent], mode: Mode) -> Vec<GroupRecord> {
    let cap = mode.group_size_cap();
    #[allow(clippy::type_complexity)]
    let mut per_project: BTreeMap<&str, (BTreeMap<&str, u64>, BTreeMap<&str, u64>, DateTime<Utc>)> =
        BTreeMap::new();
    for ev in events {
        debug_assert!(!ev.is_bot, "bot events must not reach group construction");
        let entry = per_project
            .entry(&ev.project_id)
            .or_insert_with(|| (BTreeMap::new(), BTreeMap::new(), ev.timestamp));
        *entry.0.entry(&ev.user_id).or_insert(0) += 1;
        *entry.1.entry(&ev.user_id).or_insert(0) += ev.size_bytes.unwrap_or(0);
        if ev.timestamp > entry.2 {
            entry.2 = ev.timestamp;
        }
    }
    per_project
        .into_iter()
        .map(|(project_id, (work, bytes, last_event_at))| {
            let counts: Vec<f64> = work.values().map(|&w| w as f64).collect();
            let effective_size = effective_group_size(&counts).expect("nonempty group");
            let group_size = work.len() as u32;
            let total_work: u64 = work.values().sum();
            GroupRecord {
                project_id: project_id.to_string(),
                member_work: work.iter().map(|(k, &v)| (k.to_string(), v)).collect(),
                member_bytes: bytes.iter().map(|(k, &v)| (k.to_string(), v)).collect(),
                group_size,
                total_work,
                effective_size,
                mean_work: total_work as f64 / group_size as f64,
                oversize: group_size > cap,
                last_event_at,
            }
        })
        .collect()
}

/// Latest event timestamp across all groups; the analysis data-range end.
pub fn data_range_end(groups: &[GroupRecord]) -> Option<DateTime<Utc>> {
    groups.iter().map(|g| g.last_event_at).max()
}

/// Aggregate focus `F = Σ_i w_i / W_user_i`: how much of each member's
/// total output lands in this project, summed over the group.
pub fn aggregate_focus(group: &GroupRecord, user_totals: &BTreeMap<String, u64>) -> f64 {
    group
        .member_work
        .iter()
        .map(|(user, &w)| {
            let total = *user_totals
                .get(user)
                .expect("group member missing from user totals");
            assert!(total >= w && total > 0, "member total below project work");
            w as f64 / total as f64
        })
        .sum()
}

/// Histogram of nominal group sizes.
pub fn group_size_distribution(groups: &[GroupRecord]) -> BTreeMap<u32, usize> {
    let mut hist = BTreeMap::new();
    for g in groups {
        *hist.entry(g.group_size).or_insert(0) += 1;
    }
    hist
}

/// One (user, project) membership with every regression feature populated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProjectRow {
    pub user_id: String,
    pub project_id: String,
    /// Contributions of this user to this project (`w`).
    pub work: u64,
    /// Nominal group size `N`.
    pub group_size: u32,
    /// Effective group size `n` of the group.
    pub effective_size: f64,
    /// Fraction of the user's total work spent here (`c_i`).
    pub focus_share: f64,
    /// Aggregate focus `F` of the whole group.
    pub group_focus: f64,
    /// Total work `W` of the group.
    pub group_work: u64,
    /// Mean work per member of the group.
    pub group_mean_work: f64,
    /// Number of projects the user contributes to (`G_s`), in-dataset.
    pub projects: u32,
    /// The user's total contributions inside the window (`W_user`).
    pub user_work: u64,
    /// Largest / smallest / mean group size among the user's groups.
    pub largest_group: u32,
    pub smallest_group: u32,
    pub mean_group: f64,
    /// Account age in whole days up to the data-range end (`A_u`).
    pub user_age_days: i64,
    /// Project age in whole days from creation to its last event (`A_r`/`A_p`).
    pub project_age_days: i64,
    pub watchers: u64,
    pub forks: u64,
    pub followers: u64,
    pub owned_repos: u64,
    pub description_len: u64,
    pub created_pages: u64,
    /// Byte volume of this user's edits on this project (`E_s`).
    pub edit_bytes: u64,
    /// Inherited from the group's cap flag.
    pub oversize: bool,
}

/// Numeric feature columns available on a row, in declared order.
pub const ROW_COLUMNS: &[&str] = &[
    "work",
    "group_size",
    "effective_size",
    "focus_share",
    "group_focus",
    "group_work",
    "group_mean_work",
    "projects",
    "user_work",
    "largest_group",
    "smallest_group",
    "mean_group",
    "user_age_days",
    "project_age_days",
    "watchers",
    "forks",
    "followers",
    "owned_repos",
    "description_len",
    "created_pages",
    "edit_bytes",
];

impl UserProjectRow {
    /// Numeric value of a named feature column.
    pub fn feature(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "work" => self.work as f64,
            "group_size" => self.group_size as f64,
            "effective_size" => self.effective_size,
            "focus_share" => self.focus_share,
            "group_focus" => self.group_focus,
            "group_work" => self.group_work as f64,
            "group_mean_work" => self.group_mean_work,
            "projects" => self.projects as f64,
            "user_work" => self.user_work as f64,
            "largest_group" => self.largest_group as f64,
            "smallest_group" => self.smallest_group as f64,
            "mean_group" => self.mean_group,
            "user_age_days" => self.user_age_days as f64,
            "project_age_days" => self.project_age_days as f64,
            "watchers" => self.watchers as f64,
            "forks" => self.forks as f64,
            "followers" => self.followers as f64,
            "owned_repos" => self.owned_repos as f64,
            "description_len" => self.description_len as f64,
            "created_pages" => self.created_pages as f64,
            "edit_bytes" => self.edit_bytes as f64,
            other => return Err(Error::UnknownColumn(other.to_string())),
        })
    }
}

/// Profile joins that fell back to defaults during row assembly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingProfiles {
    pub users: usize,
    pub projects: usize,
}

/// Joins groups with profile tables into one row per (user, project)
/// membership. Missing profiles fill features with 0 and are counted.
pub fn assemble_rows(
    groups: &[GroupRecord],
    project_profiles: &BTreeMap<String, ProjectProfile>,
    user_profiles: &BTreeMap<String, UserProfile>,
    data_end: DateTime<Utc>,
) -> (Vec<UserProjectRow>, MissingProfiles) {
    // Per-user aggregates over all of the user's groups.
    struct UserAgg {
        total_work: u64,
        sizes: Vec<u32>,
    }
    let mut per_user: BTreeMap<&str, UserAgg> = BTreeMap::new();
    for g in groups {
        for (user, &w) in &g.member_work {
            let agg = per_user.entry(user).or_insert(UserAgg {
                total_work: 0,
                sizes: Vec::new(),
            });
            agg.total_work += w;
            agg.sizes.push(g.group_size);
        }
    }
    let user_totals: BTreeMap<String, u64> = per_user
        .iter()
        .map(|(u, agg)| (u.to_string(), agg.total_work))
        .collect();

    let mut missing = MissingProfiles::default();
    let mut missing_users: std::collections::BTreeSet<&str> = Default::default();
    let mut rows = Vec::new();
    for g in groups {
        let focus = aggregate_focus(g, &user_totals);
        let project = project_profiles.get(&g.project_id);
        if project.is_none() {
            missing.projects += 1;
        }
        let project_age_days = project
            .map(|p| (g.last_event_at - p.created_at).num_days().max(0))
            .unwrap_or(0);
        for (user, &w) in &g.member_work {
            let agg = &per_user[user.as_str()];
            let profile = user_profiles.get(user);
            if profile.is_none() {
                missing_users.insert(user);
            }
            rows.push(UserProjectRow {
                user_id: user.clone(),
                project_id: g.project_id.clone(),
                work: w,
                group_size: g.group_size,
                effective_size: g.effective_size,
                focus_share: w as f64 / agg.total_work as f64,
                group_focus: focus,
                group_work: g.total_work,
                group_mean_work: g.mean_work,
                projects: agg.sizes.len() as u32,
                user_work: agg.total_work,
                largest_group: *agg.sizes.iter().max().unwrap(),
                smallest_group: *agg.sizes.iter().min().unwrap(),
                mean_group: agg.sizes.iter().map(|&s| s as f64).sum::<f64>()
                    / agg.sizes.len() as f64,
                user_age_days: profile
                    .map(|p| (data_end - p.account_created_at).num_days().max(0))
                    .unwrap_or(0),
                project_age_days,
                watchers: project.map(|p| p.watchers).unwrap_or(0),
                forks: project.map(|p| p.forks).unwrap_or(0),
                followers: profile.map(|p| p.followers).unwrap_or(0),
                owned_repos: profile.map(|p| p.owned_repos).unwrap_or(0),
                description_len: project.map(|p| p.description_len).unwrap_or(0),
                created_pages: profile.map(|p| p.created_pages).unwrap_or(0),
                edit_bytes: g.member_bytes.get(user).copied().unwrap_or(0),
                oversize: g.oversize,
            });
        }
    }
    missing.users = missing_users.len();
    (rows, missing)
}

/// Named-column numeric table; the regression-facing view of the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: Vec<f64>, // row-major
    nrows: usize,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, nrows: usize, data: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidConfig("feature matrix needs columns".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(Error::InvalidConfig(format!("duplicate column {n:?}")));
            }
        }
        if data.len() != names.len() * nrows {
            return Err(Error::InvalidConfig("matrix shape mismatch".into()));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite value {bad} in feature matrix"
            )));
        }
        Ok(FeatureMatrix { names, data, nrows })
    }

    /// Builds a matrix from rows using the named feature columns.
    pub fn from_rows(rows: &[UserProjectRow], columns: &[&str]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * columns.len());
        for row in rows {
            for col in columns {
                data.push(row.feature(col)?);
            }
        }
        FeatureMatrix::new(
            columns.iter().map(|c| c.to_string()).collect(),
            rows.len(),
            data,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.nrows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.names.len() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.names.len() + col] = v;
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.nrows).map(|r| self.get(r, col)).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(self.column_index(name)?))
    }

    /// New matrix keeping only the named columns, in the given order.
    pub fn select(&self, columns: &[&str]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| self.column_index(c))
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(self.nrows * idx.len());
        for r in 0..self.nrows {
            for &c in &idx {
                data.push(self.get(r, c));
            }
        }
        FeatureMatrix::new(
            columns.iter().map(|c| c.to_string()).collect(),
            self.nrows,
            data,
        )
    }

    /// New matrix keeping only rows where `keep` is true.
    pub fn filter_rows(&self, keep: &[bool]) -> FeatureMatrix {
        assert_eq!(keep.len(), self.nrows);
        let p = self.n_cols();
        let mut data = Vec::new();
        for (r, &k) in keep.iter().enumerate() {
            if k {
                data.extend_from_slice(&self.data[r * p..(r + 1) * p]);
            }
        }
        let nrows = data.len() / p;
        FeatureMatrix {
            names: self.names.clone(),
            data,
            nrows,
        }
    }
}

/// Group-level columns derivable for the group-performance regression.
pub const GROUP_COLUMNS: &[&str] = &[
    "group_size",
    "effective_size",
    "total_work",
    "mean_work",
    "watchers",
    "forks",
    "description_len",
    "project_age_days",
    "avg_projects",
    "avg_focus",
];

/// One row per group with per-member averages joined in; feeds the
/// group-performance OLS.
pub fn group_level_matrix(groups: &[GroupRecord], rows: &[UserProjectRow]) -> Result<FeatureMatrix> {
    // Per-project member aggregates from the assembled rows.
    struct ProjAgg {
        sum_projects: f64,
        sum_focus_share: f64,
        members: usize,
        watchers: u64,
        forks: u64,
        description_len: u64,
        project_age_days: i64,
    }
    let mut per_project: BTreeMap<&str, ProjAgg> = BTreeMap::new();
    for row in rows {
        let agg = per_project.entry(&row.project_id).or_insert(ProjAgg {
            sum_projects: 0.0,
            sum_focus_share: 0.0,
            members: 0,
            watchers: row.watchers,
            forks: row.forks,
            description_len: row.description_len,
            project_age_days: row.project_age_days,
        });
        agg.sum_projects += row.projects as f64;
        agg.sum_focus_share += row.focus_share;
        agg.members += 1;
    }
    let mut data = Vec::with_capacity(groups.len() * GROUP_COLUMNS.len());
    for g in groups {
        let agg = per_project.get(g.project_id.as_str()).ok_or_else(|| {
            Error::InvalidConfig(format!("no rows for project {:?}", g.project_id))
        })?;
        let m = agg.members as f64;
        data.extend_from_slice(&[
            g.group_size as f64,
            g.effective_size,
            g.total_work as f64,
            g.mean_work,
            agg.watchers as f64,
            agg.forks as f64,
            agg.description_len as f64,
            agg.project_age_days as f64,
            agg.sum_projects / m,
            agg.sum_focus_share / m,
        ]);
    }
    FeatureMatrix::new(
        GROUP_COLUMNS.iter().map(|c| c.to_string()).collect(),
        groups.len(),
        data,
    )
}

/// Writes the group interchange file. Member maps are JSON-encoded cells.
pub fn write_groups_csv(path: &Path, groups: &[GroupRecord]) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record([
        "project_id",
        "group_size",
        "total_work",
        "effective_size",
        "mean_work",
        "oversize",
        "last_event_at",
        "member_work",
        "member_bytes",
    ])?;
    for g in groups {
        wtr.write_record([
            g.project_id.as_str(),
            &g.group_size.to_string(),
            &g.total_work.to_string(),
            &g.effective_size.to_string(),
            &g.mean_work.to_string(),
            if g.oversize { "true" } else { "false" },
            &ts_format::format(&g.last_event_at),
            &serde_json::to_string(&g.member_work)?,
            &serde_json::to_string(&g.member_bytes)?,
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Reads the group interchange file back.
pub fn read_groups_csv(path: &Path) -> Result<Vec<GroupRecord>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |e: String| Error::InvalidConfig(format!("{display}: {e}"));
        out.push(GroupRecord {
            project_id: rec[0].to_string(),
            group_size: rec[1].parse().map_err(|e| bad(format!("{e}")))?,
            total_work: rec[2].parse().map_err(|e| bad(format!("{e}")))?,
            effective_size: rec[3].parse().map_err(|e| bad(format!("{e}")))?,
            mean_work: rec[4].parse().map_err(|e| bad(format!("{e}")))?,
            oversize: &rec[5] == "true",
            last_event_at: ts_format::parse(&rec[6]).map_err(Error::InvalidConfig)?,
            member_work: serde_json::from_str(&rec[7])?,
            member_bytes: serde_json::from_str(&rec[8])?,
        });
    }
    Ok(out)
}

/// Writes the row interchange file, one record per (user, project).
pub fn write_rows_csv(path: &Path, rows: &[UserProjectRow]) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Reads the row interchange file back.
pub fn read_rows_csv(path: &Path) -> Result<Vec<UserProjectRow>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for rec in rdr.deserialize::<UserProjectRow>() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn ev(user: &str, project: &str, day: i64) -> ContributionEvent {
        ContributionEvent {
            user_id: user.into(),
            project_id: project.into(),
            timestamp: Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap()
                + chrono::Duration::days(day),
            size_bytes: None,
            is_bot: false,
        }
    }

    #[test]
    fn builds_single_group_with_counts() {
        let events = vec![ev("u1", "p1", 0), ev("u1", "p1", 1), ev("u2", "p1", 2)];
        let groups = build_groups(&events, Mode::Github);
        assert_eq!(groups.len(), 1);
        let g = &groups[0];
        assert_eq!(g.group_size, 2);
        assert_eq!(g.total_work, 3);
        assert_eq!(g.member_work["u1"], 2);
        assert_eq!(g.member_work["u2"], 1);
        assert_relative_eq!(g.mean_work, 1.5);
    }

    #[test]
    fn single_event_group() {
        let groups = build_groups(&[ev("u1", "p1", 0)], Mode::Github);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].group_size, 1);
        assert_eq!(groups[0].total_work, 1);
        assert_eq!(groups[0].effective_size, 1.0);
        assert!(!groups[0].oversize);
    }

    /// Exhaustive-tally oracle over a random event log.
    #[test]
    fn group_counts_match_brute_force_tally() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let events: Vec<ContributionEvent> = (0..500)
            .map(|_| {
                ev(
                    &format!("u{}", rng.random_range(0..40)),
                    &format!("p{}", rng.random_range(0..20)),
                    rng.random_range(0..60),
                )
            })
            .collect();
        let groups = build_groups(&events, Mode::Github);
        let mut tally: BTreeMap<(String, String), u64> = BTreeMap::new();
        for e in &events {
            *tally
                .entry((e.project_id.clone(), e.user_id.clone()))
                .or_insert(0) += 1;
        }
        let mut group_cnt = 0;
        for g in &groups {
            for (u, &w) in &g.member_work {
                assert_eq!(tally[&(g.project_id.clone(), u.clone())], w);
                group_cnt += 1;
            }
            assert_eq!(g.total_work, g.member_work.values().sum::<u64>());
            assert_eq!(g.group_size as usize, g.member_work.len());
        }
        assert_eq!(group_cnt, tally.len());
    }

    #[test]
    fn oversize_flagging_follows_mode_cap() {
        let events: Vec<ContributionEvent> =
            (0..25).map(|i| ev(&format!("u{i}"), "p1", 0)).collect();
        let gh = build_groups(&events, Mode::Github);
        assert!(gh[0].oversize);
        let wiki = build_groups(&events, Mode::Wikipedia);
        assert!(!wiki[0].oversize);
    }

    #[test]
    fn effective_size_uniform_and_single() {
        assert_eq!(effective_group_size(&[5.0f64, 5.0, 5.0, 5.0]).unwrap(), 4.0);
        assert_eq!(effective_group_size(&[7.0f64]).unwrap(), 1.0);
    }

    /// Direct high-precision evaluation of the [3,1] case.
    #[test]
    fn effective_size_three_one() {
        let n = effective_group_size(&[3.0f64, 1.0]).unwrap();
        // Independent evaluation: H = -(0.75 lg 0.75 + 0.25 lg 0.25).
        let h = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert_relative_eq!(h, 0.811_278_124_459_1328, epsilon = 1e-12);
        assert_relative_eq!(n, h.exp2(), epsilon = 1e-12);
        assert!((n - 1.754_765).abs() < 1e-6);
    }

    #[test]
    fn effective_size_rejects_empty_and_nonpositive() {
        assert!(matches!(
            effective_group_size::<f64>(&[]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            effective_group_size(&[2.0f64, 0.0]),
            Err(Error::LogDomain { .. })
        ));
    }

    #[test]
    fn effective_size_generic_in_f32() {
        let n = effective_group_size(&[3.0f32, 1.0]).unwrap();
        assert!((n - 1.754_765f32).abs() < 1e-4);
    }

    proptest! {
        /// Permutation symmetry and integer-scaling invariance of n.
        #[test]
        fn entropy_symmetry_and_scaling(work in proptest::collection::vec(1u64..500, 1..12), k in 1u64..20) {
            let w: Vec<f64> = work.iter().map(|&v| v as f64).collect();
            let n0 = effective_group_size(&w).unwrap();
            let mut rev = w.clone();
            rev.reverse();
            let n1 = effective_group_size(&rev).unwrap();
            prop_assert!((n0 - n1).abs() < 1e-12);
            let scaled: Vec<f64> = w.iter().map(|&v| v * k as f64).collect();
            let n2 = effective_group_size(&scaled).unwrap();
            prop_assert!((n0 - n2).abs() < 1e-9);
        }

        /// 1 <= n <= N with equality at N iff the work is uniform.
        #[test]
        fn entropy_bounds(work in proptest::collection::vec(1u64..200, 1..15)) {
            let w: Vec<f64> = work.iter().map(|&v| v as f64).collect();
            let n = effective_group_size(&w).unwrap();
            let cap = w.len() as f64;
            prop_assert!(n >= 1.0 - 1e-12);
            prop_assert!(n <= cap + 1e-9);
            let uniform = work.iter().all(|&v| v == work[0]);
            if uniform {
                prop_assert_eq!(n, cap);
            } else {
                prop_assert!(n < cap - 1e-12);
            }
        }
    }

    fn totals(groups: &[GroupRecord]) -> BTreeMap<String, u64> {
        let mut t = BTreeMap::new();
        for g in groups {
            for (u, &w) in &g.member_work {
                *t.entry(u.clone()).or_insert(0) += w;
            }
        }
        t
    }

    #[test]
    fn focus_all_members_exclusive() {
        let events = vec![ev("u1", "p1", 0), ev("u2", "p1", 0), ev("u3", "p1", 1)];
        let groups = build_groups(&events, Mode::Github);
        let f = aggregate_focus(&groups[0], &totals(&groups));
        assert_relative_eq!(f, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn focus_hand_evaluated_split() {
        // A: 4 here + 4 elsewhere; B: 2 here only -> F = 0.5 + 1.0.
        let mut events = Vec::new();
        for _ in 0..4 {
            events.push(ev("a", "p1", 0));
            events.push(ev("a", "p2", 0));
        }
        for _ in 0..2 {
            events.push(ev("b", "p1", 0));
        }
        let groups = build_groups(&events, Mode::Github);
        let p1 = groups.iter().find(|g| g.project_id == "p1").unwrap();
        let f = aggregate_focus(p1, &totals(&groups));
        assert_relative_eq!(f, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn focus_single_user_spread_over_four_projects() {
        let mut events = Vec::new();
        for p in 0..4 {
            for _ in 0..3 {
                events.push(ev("solo", &format!("p{p}"), 0));
            }
        }
        let groups = build_groups(&events, Mode::Github);
        let f = aggregate_focus(&groups[0], &totals(&groups));
        assert_relative_eq!(f, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn distribution_counts_sizes() {
        let mut events = vec![ev("u1", "p1", 0), ev("u2", "p2", 0)];
        events.push(ev("u1", "p3", 0));
        events.push(ev("u2", "p3", 0));
        let groups = build_groups(&events, Mode::Github);
        let hist = group_size_distribution(&groups);
        assert_eq!(hist[&1], 2);
        assert_eq!(hist[&2], 1);
        assert_eq!(hist.values().sum::<usize>(), groups.len());
        assert!(group_size_distribution(&[]).is_empty());
    }

    fn default_end() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2015, 6, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn rows_aggregate_user_group_sizes() {
        // One user in groups of sizes 1, 4, 4.
        let mut events = vec![ev("x", "solo", 0)];
        for p in ["q1", "q2"] {
            events.push(ev("x", p, 0));
            for i in 0..3 {
                events.push(ev(&format!("m{i}"), p, 0));
            }
        }
        let groups = build_groups(&events, Mode::Github);
        let (rows, missing) =
            assemble_rows(&groups, &BTreeMap::new(), &BTreeMap::new(), default_end());
        let xr: Vec<&UserProjectRow> = rows.iter().filter(|r| r.user_id == "x").collect();
        assert_eq!(xr.len(), 3);
        for r in &xr {
            assert_eq!(r.projects, 3);
            assert_eq!(r.largest_group, 4);
            assert_eq!(r.smallest_group, 1);
            assert_relative_eq!(r.mean_group, 3.0);
            assert_eq!(r.user_work, 3);
        }
        // Unprofiled users and projects fall back to zero features, counted.
        assert_eq!(missing.users, 4);
        assert_eq!(missing.projects, 3);
    }

    #[test]
    fn single_group_user_has_equal_extremes() {
        let events = vec![ev("u1", "p1", 0), ev("u2", "p1", 0)];
        let groups = build_groups(&events, Mode::Github);
        let (rows, _) = assemble_rows(&groups, &BTreeMap::new(), &BTreeMap::new(), default_end());
        for r in &rows {
            assert_eq!(r.largest_group, r.group_size);
            assert_eq!(r.smallest_group, r.group_size);
            assert_relative_eq!(r.mean_group, r.group_size as f64);
        }
    }

    /// Recompute oracle: every row field re-derived from the raw events.
    #[test]
    fn rows_match_brute_force_recompute() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let events: Vec<ContributionEvent> = (0..800)
            .map(|_| {
                let mut e = ev(
                    &format!("u{}", rng.random_range(0..30)),
                    &format!("p{}", rng.random_range(0..25)),
                    rng.random_range(0..80),
                );
                e.size_bytes = Some(rng.random_range(0..1000));
                e
            })
            .collect();
        let groups = build_groups(&events, Mode::Github);
        let (rows, _) = assemble_rows(&groups, &BTreeMap::new(), &BTreeMap::new(), default_end());

        for row in &rows {
            let w = events
                .iter()
                .filter(|e| e.user_id == row.user_id && e.project_id == row.project_id)
                .count() as u64;
            assert_eq!(row.work, w);
            let user_total = events.iter().filter(|e| e.user_id == row.user_id).count() as u64;
            assert_eq!(row.user_work, user_total);
            assert_relative_eq!(row.focus_share, w as f64 / user_total as f64, epsilon = 1e-12);
            let members: std::collections::BTreeSet<&str> = events
                .iter()
                .filter(|e| e.project_id == row.project_id)
                .map(|e| e.user_id.as_str())
                .collect();
            assert_eq!(row.group_size as usize, members.len());
            let bytes: u64 = events
                .iter()
                .filter(|e| e.user_id == row.user_id && e.project_id == row.project_id)
                .map(|e| e.size_bytes.unwrap())
                .sum();
            assert_eq!(row.edit_bytes, bytes);
            let user_projects: std::collections::BTreeSet<&str> = events
                .iter()
                .filter(|e| e.user_id == row.user_id)
                .map(|e| e.project_id.as_str())
                .collect();
            assert_eq!(row.projects as usize, user_projects.len());
        }

        // Focus shares of each user sum to one.
        let mut share_sums: BTreeMap<&str, f64> = BTreeMap::new();
        for r in &rows {
            *share_sums.entry(&r.user_id).or_insert(0.0) += r.focus_share;
        }
        for (_, s) in share_sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interchange_files_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let events: Vec<ContributionEvent> = (0..300)
            .map(|_| {
                let mut e = ev(
                    &format!("u{}", rng.random_range(0..20)),
                    &format!("p{}", rng.random_range(0..12)),
                    rng.random_range(0..50),
                );
                e.size_bytes = Some(rng.random_range(0..500));
                e
            })
            .collect();
        let groups = build_groups(&events, Mode::Github);
        let (rows, _) = assemble_rows(&groups, &BTreeMap::new(), &BTreeMap::new(), default_end());

        let dir = tempfile::tempdir().unwrap();
        let gpath = dir.path().join("groups.csv");
        write_groups_csv(&gpath, &groups).unwrap();
        assert_eq!(read_groups_csv(&gpath).unwrap(), groups);
        let rpath = dir.path().join("rows.csv");
        write_rows_csv(&rpath, &rows).unwrap();
        assert_eq!(read_rows_csv(&rpath).unwrap(), rows);
    }

    #[test]
    fn feature_matrix_ops() {
        let rows = {
            let events = vec![ev("u1", "p1", 0), ev("u2", "p1", 1), ev("u1", "p2", 2)];
            let groups = build_groups(&events, Mode::Github);
            assemble_rows(&groups, &BTreeMap::new(), &BTreeMap::new(), default_end()).0
        };
        let m = FeatureMatrix::from_rows(&rows, &["work", "group_size", "projects"]).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.n_cols(), 3);
        let sel = m.select(&["projects", "work"]).unwrap();
        assert_eq!(sel.names(), &["projects".to_string(), "work".to_string()]);
        assert_eq!(
            sel.column_by_name("work").unwrap(),
            m.column_by_name("work").unwrap()
        );
        assert!(m.select(&["nope"]).is_err());
        assert!(FeatureMatrix::from_rows(&rows, &["work", "work"]).is_err());
    }
}
