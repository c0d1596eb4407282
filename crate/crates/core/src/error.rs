use chrono::NaiveDate;
use thiserror::Error;

/// Errors surfaced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("empty panel: no trading day kept at least {min_obs} returns")]
    EmptyPanel { min_obs: usize },

    #[error("insufficient data for {what}: need {required}, have {available}")]
    InsufficientData {
        what: String,
        required: usize,
        available: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("autocorrelation undefined for a constant series")]
    ConstantSeries,

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (last max change {max_change:e})")]
    NotConverged {
        sweeps: usize,
        max_change: f64,
        last_iterate: Vec<f64>,
    },

    #[error("evaluation error: {reason} (dates: {dates:?})")]
    Evaluation {
        reason: String,
        dates: Vec<NaiveDate>,
    },

    #[error("simulation diverged: {0}")]
    Divergence(String),

    #[error("missing daily component `{0}`")]
    MissingComponent(String),

    #[error("no overlapping dates between forecasts and panel")]
    EmptyJoin,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
