//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Too many malformed rows in an event or profile file.
    #[error("{path}: {} of {total} rows malformed (limit {limit:.2}%), first bad rows: {}",
        rows.len(),
        rows.iter().take(8).map(|(n, e)| format!("#{n}: {e}")).collect::<Vec<_>>().join("; "))]
    MalformedRows {
        path: String,
        total: usize,
        limit: f64,
        rows: Vec<(u64, String)>,
    },

    #[error("event references unknown project {project_id:?}")]
    UnknownProject { project_id: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("column {0:?} is constant; min-max scaling is undefined")]
    ConstantColumn(String),

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("log-domain violation: {context} requires strictly positive values (offender: {value})")]
    LogDomain { context: &'static str, value: f64 },

    #[error("model not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Unified-curve stitching found a group size not covered by any range.
    #[error("coverage gap: no fitted range covers group size {0}")]
    CoverageGap(u32),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
