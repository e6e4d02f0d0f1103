//! Analytics for collaboration scaling in event-log platforms.
//!
//! The crate rebuilds a full group-productivity analysis pipeline on top of
//! contribution event logs (pushes on a code-hosting platform, edits on a
//! wiki): it assembles collaboration groups inside a project-relative time
//! window, computes entropy-based group metrics, fits log-log power laws,
//! runs confound-controlled OLS and random-intercept mixed-effects models
//! over overlapping group-size ranges, stitches those into a single
//! nonlinear work-vs-size curve, and selects informative features with a
//! variance-decomposition tree. A seeded generative model produces event
//! logs with planted parameters so every estimator can be validated by
//! parameter recovery.
//!
//! Stages communicate through plain CSV/JSON artifacts (`groups.csv`,
//! `rows.csv`, `powerlaw.json`, `chained.csv`, `unified.csv`, ...); see
//! [`pipeline`] for the orchestrated form and the `collabscale` binary for
//! the CLI.
//!
//! Numeric kernels ([`num`], [`linalg`], [`stats`]) are generic over the
//! scalar type via `num-traits`; pipeline-level code uses the [`Scalar`]
//! alias below.

pub mod chained;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod lme;
pub mod metrics;
pub mod num;
pub mod ols;
pub mod pipeline;
pub mod s3d;
pub mod scaling;
pub mod stats;
pub mod synth;

/// Scalar type used by the pipeline layer. Kernels stay generic over
/// [`num::Real`]; everything that touches files is pinned to `f64`.
pub type Scalar = f64;

pub use error::{Error, Result};
