//! Structured sum-of-squares decomposition: greedy selection of features
//! whose binned partitions explain the most response variance, one feature
//! per step, recursively within the cells of the previous steps.
//!
//! Within every current cell, the candidate feature's values are split by
//! a dynamic program that maximizes the between-block sum of squares minus
//! a per-cut penalty of `lambda * SST` (so `lambda` is an R² tax per cut).
//! The feature with the best penalized score wins the step; raw and
//! penalized gains are both recorded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FeatureMatrix;

/// Fitting knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S3dConfig {
    /// Greedy steps to run at most.
    pub max_features: usize,
    /// Per-cut penalty in R² units.
    pub lambda: f64,
    /// Stop when the best penalized gain falls below this.
    pub min_r2_gain: f64,
    /// Distinct-value cap per cell before cut candidates are thinned to
    /// balanced chunks; exact below the cap.
    pub max_cut_candidates: usize,
}

impl Default for S3dConfig {
    fn default() -> Self {
        S3dConfig {
            max_features: 8,
            lambda: 0.001,
            min_r2_gain: 1e-4,
            max_cut_candidates: 256,
        }
    }
}

/// Candidate evaluation for one feature at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub feature: String,
    /// Penalized gain in R² units (the selection criterion).
    pub score: f64,
    /// Raw explained-variance gain of the chosen partition.
    pub r2: f64,
    pub cuts: usize,
    pub selected: bool,
}

/// One greedy step: the chosen feature and every candidate's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S3dStep {
    pub feature: String,
    /// Raw incremental R² of this step.
    pub r2_gain: f64,
    pub penalized_gain: f64,
    pub n_cuts: usize,
    pub candidates: Vec<CandidateScore>,
}

/// Prediction-table cell: one box in feature space with its training mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S3dCell {
    /// Per selected feature, the half-open interval `[lo, hi)`; outer
    /// edges are infinite, so every point falls in exactly one cell.
    pub bounds: Vec<(f64, f64)>,
    pub mean: f64,
    pub count: usize,
}

/// Per-level split tree: level `d` splits on the `d`-th selected feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitNode {
    /// Sorted cut points partitioning the feature axis within this node.
    cuts: Vec<f64>,
    /// `cuts.len() + 1` children, or empty at the leaves.
    children: Vec<SplitNode>,
    /// Leaf payload.
    mean: f64,
    count: usize,
}

/// Fitted decomposition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S3dModel {
    /// Selected features in order.
    pub features: Vec<String>,
    pub steps: Vec<S3dStep>,
    pub response: String,
    /// Sum of raw per-step gains.
    pub total_r2: f64,
    /// Global response mean (the zero-step prediction).
    pub global_mean: f64,
    root: SplitNode,
}

/// Distinct-value run within a cell: count, response sum and square sum.
#[derive(Clone, Copy)]
struct ValueChunk {
    min_x: f64,
    max_x: f64,
    n: f64,
    sum_y: f64,
}

/// Optimal 1-D partition of chunks maximizing
/// `sum_b (sum_y_b)^2 / n_b - penalty * cuts`, by dynamic programming.
/// Returns `(gain_over_single_block, cut_positions)`.
fn best_partition(chunks: &[ValueChunk], penalty: f64) -> (f64, Vec<f64>) {
    let k = chunks.len();
    if k <= 1 {
        return (0.0, Vec::new());
    }
    // Prefix sums for O(1) block stats.
    let mut pn = vec![0.0f64; k + 1];
    let mut py = vec![0.0f64; k + 1];
    for (i, c) in chunks.iter().enumerate() {
        pn[i + 1] = pn[i] + c.n;
        py[i + 1] = py[i] + c.sum_y;
    }
    let block = |j: usize, i: usize| -> f64 {
        let n = pn[i] - pn[j];
        let s = py[i] - py[j];
        s * s / n
    };
    // best[i] = max penalized score of partitioning chunks[..i].
    let mut best = vec![f64::NEG_INFINITY; k + 1];
    let mut prev = vec![0usize; k + 1];
    best[0] = 0.0;
    for i in 1..=k {
        for j in 0..i {
            let cost = if j == 0 { 0.0 } else { penalty };
            let cand = best[j] + block(j, i) - cost;
            if cand > best[i] {
                best[i] = cand;
                prev[i] = j;
            }
        }
    }
    let single = block(0, k);
    let gain = best[k] - single;
    // Backtrack the chosen boundaries.
    let mut cuts = Vec::new();
    let mut i = k;
    while i > 0 {
        let j = prev[i];
        if j > 0 {
            cuts.push((chunks[j - 1].max_x + chunks[j].min_x) / 2.0);
        }
        i = j;
    }
    cuts.reverse();
    (gain.max(0.0), cuts)
}

/// Groups a cell's sorted (x, y) pairs into distinct-value chunks, thinning
/// to at most `cap` balanced chunks when there are more distinct values.
fn chunk_values(mut pairs: Vec<(f64, f64)>, cap: usize) -> Vec<ValueChunk> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut chunks: Vec<ValueChunk> = Vec::new();
    for (x, y) in pairs {
        match chunks.last_mut() {
            Some(c) if c.max_x == x => {
                c.n += 1.0;
                c.sum_y += y;
            }
            _ => chunks.push(ValueChunk {
                min_x: x,
                max_x: x,
                n: 1.0,
                sum_y: y,
            }),
        }
    }
    if chunks.len() <= cap {
        return chunks;
    }
    // Merge adjacent distinct values into roughly count-balanced chunks.
    let total: f64 = chunks.iter().map(|c| c.n).sum();
    let target = total / cap as f64;
    let mut out: Vec<ValueChunk> = Vec::with_capacity(cap);
    let mut acc: Option<ValueChunk> = None;
    for c in chunks {
        match acc.as_mut() {
            None => acc = Some(c),
            Some(a) => {
                if a.n >= target && out.len() < cap - 1 {
                    out.push(*a);
                    acc = Some(c);
                } else {
                    a.max_x = c.max_x;
                    a.n += c.n;
                    a.sum_y += c.sum_y;
                }
            }
        }
    }
    if let Some(a) = acc {
        out.push(a);
    }
    out
}

struct WorkingCell {
    rows: Vec<usize>,
}

/// Evaluates one candidate feature over all current cells; returns the
/// penalized gain (absolute SS units) and per-cell cuts.
fn evaluate_feature(
    matrix: &FeatureMatrix,
    y: &[f64],
    col: usize,
    cells: &[WorkingCell],
    penalty_abs: f64,
    cap: usize,
) -> (f64, f64, Vec<Vec<f64>>) {
    let mut penalized = 0.0;
    let mut raw = 0.0;
    let mut cuts_per_cell = Vec::with_capacity(cells.len());
    for cell in cells {
        let pairs: Vec<(f64, f64)> = cell
            .rows
            .iter()
            .map(|&r| (matrix.get(r, col), y[r]))
            .collect();
        let chunks = chunk_values(pairs, cap);
        let (gain, cuts) = best_partition(&chunks, penalty_abs);
        if gain > 0.0 && !cuts.is_empty() {
            penalized += gain;
            raw += gain + penalty_abs * cuts.len() as f64;
            cuts_per_cell.push(cuts);
        } else {
            cuts_per_cell.push(Vec::new());
        }
    }
    (penalized, raw, cuts_per_cell)
}

/// Fits the decomposition on all non-response columns.
pub fn fit_s3d(matrix: &FeatureMatrix, response: &str, config: &S3dConfig) -> Result<S3dModel> {
    if config.max_features < 1 {
        return Err(Error::InvalidConfig("max_features must be at least 1".into()));
    }
    let y_idx = matrix.column_index(response)?;
    let y = matrix.column(y_idx);
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::EmptyInput("too few observations for a decomposition"));
    }
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    if sst <= 0.0 {
        return Err(Error::InvalidConfig(
            "zero-variance response cannot be decomposed".into(),
        ));
    }
    let penalty_abs = config.lambda * sst;

    let candidates: Vec<usize> = (0..matrix.n_cols()).filter(|&c| c != y_idx).collect();
    let mut remaining = candidates;
    let mut cells = vec![WorkingCell {
        rows: (0..n).collect(),
    }];
    // Tree mirrors the cell list; leaf order equals cell order.
    let mut root = SplitNode {
        cuts: Vec::new(),
        children: Vec::new(),
        mean: mean_y,
        count: n,
    };
    let mut steps: Vec<S3dStep> = Vec::new();
    let mut features: Vec<String> = Vec::new();

    while features.len() < config.max_features && !remaining.is_empty() {
        let evals: Vec<(usize, f64, f64, Vec<Vec<f64>>)> = remaining
            .par_iter()
            .map(|&col| {
                let (p, r, cuts) = evaluate_feature(matrix, &y, col, &cells, penalty_abs, config.max_cut_candidates);
                (col, p, r, cuts)
            })
            .collect();
        // Argmax by penalized score, ties to the earliest declared column.
        let mut best: Option<&(usize, f64, f64, Vec<Vec<f64>>)> = None;
        for e in &evals {
            if best.map(|b| e.1 > b.1).unwrap_or(true) {
                best = Some(e);
            }
        }
        let (best_col, best_pen, best_raw, best_cuts) = match best {
            Some(b) => (b.0, b.1, b.2, b.3.clone()),
            None => break,
        };
        let step_candidates: Vec<CandidateScore> = evals
            .iter()
            .map(|(col, p, r, cuts)| CandidateScore {
                feature: matrix.names()[*col].clone(),
                score: p / sst,
                r2: r / sst,
                cuts: cuts.iter().map(Vec::len).sum(),
                selected: *col == best_col,
            })
            .collect();
        if best_pen / sst < config.min_r2_gain {
            break;
        }

        // Split every cell by its chosen cuts and grow the tree a level.
        let mut new_cells: Vec<WorkingCell> = Vec::new();
        let mut leaves: Vec<SplitNode> = Vec::new();
        for (cell, cuts) in cells.iter().zip(&best_cuts) {
            let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cuts.len() + 1];
            for &r in &cell.rows {
                let v = matrix.get(r, best_col);
                let b = cuts.partition_point(|&c| v >= c);
                buckets[b].push(r);
            }
            let mut children = Vec::with_capacity(buckets.len());
            for rows in buckets {
                let count = rows.len();
                let mean = if count > 0 {
                    rows.iter().map(|&r| y[r]).sum::<f64>() / count as f64
                } else {
                    mean_y
                };
                children.push(SplitNode {
                    cuts: Vec::new(),
                    children: Vec::new(),
                    mean,
                    count,
                });
                new_cells.push(WorkingCell { rows });
            }
            leaves.push(SplitNode {
                cuts: cuts.clone(),
                children,
                mean: 0.0,
                count: cell.rows.len(),
            });
        }
        attach_level(&mut root, &mut leaves.into_iter());
        cells = new_cells;

        let total_cuts: usize = best_cuts.iter().map(Vec::len).sum();
        features.push(matrix.names()[best_col].clone());
        steps.push(S3dStep {
            feature: matrix.names()[best_col].clone(),
            r2_gain: best_raw / sst,
            penalized_gain: best_pen / sst,
            n_cuts: total_cuts,
            candidates: step_candidates,
        });
        remaining.retain(|&c| c != best_col);
    }

    let total_r2 = steps.iter().map(|s| s.r2_gain).sum();
    Ok(S3dModel {
        features,
        steps,
        response: response.to_string(),
        total_r2,
        global_mean: mean_y,
        root,
    })
}

/// Replaces the current leaves of the tree (in leaf order) with the given
/// one-level subtrees.
fn attach_level(node: &mut SplitNode, replacements: &mut impl Iterator<Item = SplitNode>) {
    if node.children.is_empty() {
        let replacement = replacements.next().expect("one subtree per leaf");
        node.cuts = replacement.cuts;
        node.children = replacement.children;
    } else {
        for child in &mut node.children {
            attach_level(child, replacements);
        }
    }
}

impl S3dModel {
    /// Predicted response: the training mean of the cell the row lands in.
    /// Values outside every training interval fall into the outer cells
    /// (the intervals are unbounded at the edges).
    pub fn predict(&self, row: &[f64]) -> f64 {
        assert_eq!(row.len(), self.features.len(), "one value per selected feature");
        let mut node = &self.root;
        let mut depth = 0usize;
        while !node.children.is_empty() {
            let v = row[depth];
            let b = node.cuts.partition_point(|&c| v >= c);
            node = &node.children[b];
            depth += 1;
        }
        node.mean
    }

    /// Flat cell table: per-feature bounds and the training mean.
    pub fn cells(&self) -> Vec<S3dCell> {
        let mut out = Vec::new();
        let mut bounds = Vec::new();
        collect_cells(&self.root, &mut bounds, &mut out);
        out
    }

    /// Step table: per step, each candidate's penalized score and whether
    /// it was selected.
    pub fn feature_importance_steps(&self) -> Vec<(usize, CandidateScore)> {
        self.steps
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.candidates.iter().map(move |c| (i + 1, c.clone())))
            .collect()
    }
}

fn collect_cells(node: &SplitNode, bounds: &mut Vec<(f64, f64)>, out: &mut Vec<S3dCell>) {
    if node.children.is_empty() {
        out.push(S3dCell {
            bounds: bounds.clone(),
            mean: node.mean,
            count: node.count,
        });
        return;
    }
    for (i, child) in node.children.iter().enumerate() {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            node.cuts[i - 1]
        };
        let hi = if i == node.cuts.len() {
            f64::INFINITY
        } else {
            node.cuts[i]
        };
        bounds.push((lo, hi));
        collect_cells(child, bounds, out);
        bounds.pop();
    }
}

/// Deterministic fold assignment: a seeded shuffle split into `k` chunks.
pub fn cv_fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut fold = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        fold[idx] = pos % k;
    }
    fold
}

/// Per-lambda cross-validation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda: f64,
    pub mean_mse: f64,
}

/// Cross-validation outcome over a lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_lambda: f64,
    pub scores: Vec<CvScore>,
}

/// Chooses the penalty by k-fold cross-validation: the lambda minimizing
/// the mean held-out squared error, ties resolved toward the larger
/// (more regularized) value.
pub fn cross_validate_lambda(
    matrix: &FeatureMatrix,
    response: &str,
    grid: &[f64],
    folds: usize,
    seed: u64,
    base: &S3dConfig,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig("cross-validation needs k >= 2".into()));
    }
    let n = matrix.n_rows();
    if n < 10 * folds {
        return Err(Error::InvalidConfig(format!(
            "{n} observations are too few for {folds}-fold cross-validation"
        )));
    }
    let y_idx = matrix.column_index(response)?;
    let y = matrix.column(y_idx);
    let assignment = cv_fold_assignment(n, folds, seed);
    let feature_cols: Vec<usize> = (0..matrix.n_cols()).filter(|&c| c != y_idx).collect();

    let jobs: Vec<(usize, usize)> = grid
        .iter()
        .enumerate()
        .flat_map(|(li, _)| (0..folds).map(move |f| (li, f)))
        .collect();
    let errors: Vec<(usize, f64, usize)> = jobs
        .par_iter()
        .map(|&(li, fold)| {
            let keep: Vec<bool> = assignment.iter().map(|&a| a != fold).collect();
            let train = matrix.filter_rows(&keep);
            let config = S3dConfig {
                lambda: grid[li],
                ..base.clone()
            };
            let model = match fit_s3d(&train, response, &config) {
                Ok(m) => m,
                Err(_) => {
                    // Degenerate training fold: fall back to the mean.
                    let train_y = train.column_by_name(response).unwrap_or_default();
                    let mean = train_y.iter().sum::<f64>() / train_y.len().max(1) as f64;
                    let mut sq = 0.0;
                    let mut cnt = 0usize;
                    for (r, &a) in assignment.iter().enumerate() {
                        if a == fold {
                            sq += (y[r] - mean) * (y[r] - mean);
                            cnt += 1;
                        }
                    }
                    return (li, sq, cnt);
                }
            };
            let mut sq = 0.0;
            let mut cnt = 0usize;
            for (r, &a) in assignment.iter().enumerate() {
                if a == fold {
                    let row: Vec<f64> = model
                        .features
                        .iter()
                        .map(|f| {
                            let c = feature_cols
                                .iter()
                                .find(|&&c| &matrix.names()[c] == f)
                                .copied()
                                .expect("selected feature exists");
                            matrix.get(r, c)
                        })
                        .collect();
                    let e = y[r] - model.predict(&row);
                    sq += e * e;
                    cnt += 1;
                }
            }
            (li, sq, cnt)
        })
        .collect();

    let mut scores: Vec<CvScore> = grid
        .iter()
        .map(|&l| CvScore {
            lambda: l,
            mean_mse: 0.0,
        })
        .collect();
    let mut counts = vec![0usize; grid.len()];
    for (li, sq, cnt) in errors {
        scores[li].mean_mse += sq;
        counts[li] += cnt;
    }
    for (s, c) in scores.iter_mut().zip(&counts) {
        s.mean_mse /= *c as f64;
    }
    let mut best = 0usize;
    for i in 1..scores.len() {
        let better = scores[i].mean_mse < scores[best].mean_mse;
        let tie_larger =
            scores[i].mean_mse == scores[best].mean_mse && scores[i].lambda > scores[best].lambda;
        if better || tie_larger {
            best = i;
        }
    }
    Ok(CvResult {
        best_lambda: scores[best].lambda,
        scores,
    })
}
