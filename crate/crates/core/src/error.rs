use thiserror::Error;

/// Errors raised by the geometry, groupoid, curve, quotient and geodesic layers.
///
/// Variant names are stable: the CLI prints them verbatim as the module error name.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeoError {
    #[error("OutOfDomain: point {point:?} lies outside the patch domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("DegenerateMetric: smallest eigenvalue {min_eigenvalue:e} at {point:?}")]
    DegenerateMetric { point: Vec<f64>, min_eigenvalue: f64 },

    #[error("DomainExit: trajectory left the domain at t = {time}")]
    DomainExit { time: f64 },

    #[error("StepTooLarge: metric speed drifted by {drift:e} (step {step})")]
    StepTooLarge { drift: f64, step: f64 },

    #[error("Disconnected: no graph path between the query points")]
    Disconnected,

    #[error("SourceMismatch: arrow source {source_point:?} does not match {point:?}")]
    SourceMismatch { source_point: Vec<f64>, point: Vec<f64> },

    #[error("LiftExit: lifted arrow left its validity region at t = {time}")]
    LiftExit { time: f64 },

    #[error("OverlapDisagreement: segment speeds {left} and {right} differ at t = {time}")]
    OverlapDisagreement { time: f64, left: f64, right: f64 },

    #[error("QuadratureFailure: adaptive quadrature exhausted its subdivision cap on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64 },

    #[error("InvalidChain: {0}")]
    InvalidChain(String),

    #[error("BudgetExceeded: {0}")]
    BudgetExceeded(String),

    #[error("NormalityLoss: tangential velocity fraction {fraction:e} at t = {time}")]
    NormalityLoss { time: f64, fraction: f64 },

    #[error("IncompatibleJet: {0}")]
    IncompatibleJet(String),

    #[error("NotRealized: landing error {landing_error} exceeds tolerance {tolerance}")]
    NotRealized { landing_error: f64, tolerance: f64 },

    #[error("EstimationFailed: {0}")]
    EstimationFailed(String),

    #[error("InvalidCocycle: {0}")]
    InvalidCocycle(String),

    #[error("InvalidModel: {0}")]
    InvalidModel(String),

    #[error("InvalidExpression: {0}")]
    InvalidExpression(String),
}

impl GeoError {
    /// Short variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            GeoError::OutOfDomain { .. } => "OutOfDomain",
            GeoError::DegenerateMetric { .. } => "DegenerateMetric",
            GeoError::DomainExit { .. } => "DomainExit",
            GeoError::StepTooLarge { .. } => "StepTooLarge",
            GeoError::Disconnected => "Disconnected",
            GeoError::SourceMismatch { .. } => "SourceMismatch",
            GeoError::LiftExit { .. } => "LiftExit",
            GeoError::OverlapDisagreement { .. } => "OverlapDisagreement",
            GeoError::QuadratureFailure { .. } => "QuadratureFailure",
            GeoError::InvalidChain(_) => "InvalidChain",
            GeoError::BudgetExceeded(_) => "BudgetExceeded",
            GeoError::NormalityLoss { .. } => "NormalityLoss",
            GeoError::IncompatibleJet(_) => "IncompatibleJet",
            GeoError::NotRealized { .. } => "NotRealized",
            GeoError::EstimationFailed(_) => "EstimationFailed",
            GeoError::InvalidCocycle(_) => "InvalidCocycle",
            GeoError::InvalidModel(_) => "InvalidModel",
            GeoError::InvalidExpression(_) => "InvalidExpression",
        }
    }
}

pub type Result<T> = std::result::Result<T, GeoError>;
