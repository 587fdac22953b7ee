use nalgebra::DVector;
use thiserror::Error;

/// Errors shared by the geometry, dynamics and solver layers.
#[derive(Debug, Error)]
pub enum GeoError {
    /// The inverse metric failed to be symmetric positive-definite at `q`.
    #[error("degenerate metric at q = {q:?}")]
    DegenerateMetric { q: Vec<f64> },

    /// A point left the admissible region of the chart.
    #[error("point outside chart domain: q = {q:?}")]
    OutsideDomain { q: Vec<f64> },

    /// Time integration produced a non-finite or inadmissible state.
    #[error("integration blew up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    /// A Newton solve did not converge.
    #[error("Newton iteration failed{}: {reason}", at_time.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    NewtonFailure { at_time: Option<f64>, reason: String },

    /// A transformation was requested on a manifold that does not satisfy
    /// its hypotheses.
    #[error("hypotheses violated: {0}")]
    HypothesisViolation(String),

    /// Nonpositive mass where strict positivity is required.
    #[error("nonpositive density entry at cell {cell}: {value}")]
    NonPositiveDensity { cell: usize, value: f64 },

    /// Bad user-facing configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl GeoError {
    pub(crate) fn outside(q: &DVector<f64>) -> Self {
        GeoError::OutsideDomain { q: q.iter().copied().collect() }
    }

    pub(crate) fn degenerate(q: &DVector<f64>) -> Self {
        GeoError::DegenerateMetric { q: q.iter().copied().collect() }
    }
}

pub type Result<T> = std::result::Result<T, GeoError>;
