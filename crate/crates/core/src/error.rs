use std::path::PathBuf;

/// Errors raised anywhere in the estimation and aggregation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: column `{0}` not found")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`: cannot read `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("integrity error: duplicate (firm_id, year) = ({firm_id}, {year})")]
    Duplicate { firm_id: String, year: i32 },
    #[error("no deflator for year {0}")]
    MissingDeflator(i32),
    #[error("dataset is already deflated")]
    AlreadyDeflated,
    #[error("no observations survive cleaning")]
    EmptySample,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("panel too short for dynamic moments")]
    NoLagLinks,
    #[error("industry {0} has no usable elasticity estimates")]
    IndustryMissing(u16),
    #[error("undefined markup: variable cost is zero")]
    UndefinedMarkup,
    #[error("fixed costs exhaust total costs")]
    FixedCostsExhaust,
    #[error("mode mismatch for {mode}: offending firms {firms:?}")]
    ModeMismatch { mode: String, firms: Vec<String> },
    #[error("no prior year for {0}")]
    NoPriorYear(i32),
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("macro series not found: {}", .0.display())]
    MacroNotFound(PathBuf),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("estimation did not converge: {0}")]
    NonConvergence(String),
    #[error("identity check failed: {0}")]
    Verification(String),
    #[error("{stage}: {cause}")]
    Stage { stage: &'static str, cause: Box<Error> },
}

/// Coarse failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    NonConvergence,
    Verification,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(stage: &'static str) -> impl Fn(Error) -> Error {
        move |e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                cause: Box::new(e),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { cause, .. } => cause.class(),
            Error::Config(_) | Error::Parameter(_) => ErrorClass::Config,
            Error::NonConvergence(_) => ErrorClass::NonConvergence,
            Error::Verification(_) => ErrorClass::Verification,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
