//! Error type shared across the pipeline stages.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers that map failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data: unknown codes, malformed rows, schema violations.
    Data,
    /// Numerical failure: rank deficiency, separation, degenerate fits.
    Numerical,
    /// Underlying I/O failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    // --- graph construction ---
    #[error("unknown iso3 code '{0}' (not in the node universe)")]
    UnknownCode(String),
    #[error("self-loop record on '{0}'")]
    SelfLoop(String),
    #[error("duplicate ordered pair ({0}, {1})")]
    DuplicateEdge(String, String),
    #[error("duplicate iso3 code '{0}' in node universe")]
    DuplicateNode(String),
    #[error("negative weight {weight} on edge ({reporter}, {partner})")]
    NegativeWeight {
        reporter: String,
        partner: String,
        weight: f64,
    },

    // --- ingestion ---
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("year {0} not present in the data")]
    YearNotPresent(i32),
    #[error("attribute table has no row for node '{0}'")]
    MissingAttributeRow(String),
    #[error("all attribute columns exceed the missingness threshold; nothing to model")]
    AllColumnsDropped,
    #[error("no eligible donor row for cell (row '{row}', column '{column}')")]
    NoDonor { row: String, column: String },
    #[error("attribute row '{0}' has no observed numeric value")]
    EmptyRow(String),
    #[error("cross-validation needs more than one row")]
    DegenerateTable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // --- statistics ---
    #[error("statistic requires at least {required} nodes, network has {actual}")]
    TooFewNodes { required: usize, actual: usize },

    // --- connectivity ---
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid is not strictly increasing at position {0}")]
    UnsortedGrid(usize),
    #[error("network has no positive edge weight; cannot build a log grid")]
    NoPositiveWeight,

    // --- ERGM ---
    #[error("attribute column '{0}' not found in table")]
    UnknownAttribute(String),
    #[error("attribute '{column}' is missing for node '{row}'; impute before modeling")]
    MissingAttributeValue { column: String, row: String },
    #[error("design matrix is rank deficient; collinear terms: {0}")]
    RankDeficient(String),
    #[error("separation detected (|{term}| diverged past {bound}); consider removing the term")]
    Separation { term: String, bound: f64 },
    #[error("estimation did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("model has no terms")]
    EmptyModel,
    #[error("duplicate term name '{0}' in model")]
    DuplicateTerm(String),

    // --- SBM ---
    #[error("class count {k} must satisfy 1 <= K < n = {n}")]
    InvalidClassCount { k: usize, n: usize },
    #[error("all {restarts} restarts for K={k} aborted with a degenerate class")]
    DegenerateClasses { k: usize, restarts: usize },
    #[error("ELBO decreased by {drop:.3e} at iteration {iteration}")]
    ElboDecreased { iteration: usize, drop: f64 },
    #[error("NaN encountered in {0}")]
    NanInput(&'static str),

    // --- plumbing ---
    #[error("artifact '{artifact}' missing; run the '{stage}' stage first")]
    MissingArtifact { artifact: String, stage: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            RankDeficient(_)
            | Separation { .. }
            | NoConvergence(_)
            | DegenerateClasses { .. }
            | ElboDecreased { .. }
            | NanInput(_) => ErrorClass::Numerical,
            Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
