use std::fmt;
use std::path::PathBuf;

/// Why a problem instance admits no policy satisfying both constraints.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InfeasibleReason {
    /// `Q > ζ·h·P·T`: even routing all power to harvesting on the linear
    /// branch cannot meet the demand.
    LinearCapacity { q_req: f64, capacity: f64 },
    /// `Q > m·P_s·T`: the demand is above what `m` saturated circuits deliver.
    SaturationCeiling { q_req: f64, ceiling: f64, m: u32 },
    /// The requested EH-only fraction lies below `α_low`.
    AlphaBelowLow { alpha: f64, alpha_low: f64 },
    /// No point of the one-dimensional search produced a valid policy.
    NoValidAlpha,
    /// No circuit count up to `M_max` admits a feasible policy.
    NoCircuitCount { m_max: u32 },
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LinearCapacity { q_req, capacity } => write!(
                f,
                "energy demand exceeds linear-harvest capacity (Q = {q_req} J > ζhPT = {capacity} J)"
            ),
            Self::SaturationCeiling { q_req, ceiling, m } => write!(
                f,
                "energy demand exceeds the saturation ceiling of {m} circuit(s) (Q = {q_req} J > M·Ps·T = {ceiling} J)"
            ),
            Self::AlphaBelowLow { alpha, alpha_low } => {
                write!(f, "alpha = {alpha} is below alpha_low = {alpha_low}")
            }
            Self::NoValidAlpha => write!(f, "no EH-only fraction yields a valid policy"),
            Self::NoCircuitCount { m_max } => {
                write!(f, "no circuit count M <= {m_max} admits a feasible policy")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("infeasible: {0}")]
    Infeasible(InfeasibleReason),

    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
