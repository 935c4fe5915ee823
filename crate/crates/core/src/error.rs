use std::path::PathBuf;

/// Errors produced by the library. The CLI maps [`Error::is_configuration`]
/// to a distinct exit status.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to load mesh {path}: {reason}")]
    MeshLoad { path: PathBuf, reason: String },

    #[error("degenerate triangle {index}: area {area:e} m^2")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("time {t} s outside sequence range [{first}, {last}]")]
    OutOfRange { t: f64, first: f64, last: f64 },

    #[error("zero distance between camera and patch")]
    ZeroDistance,

    #[error("pixel ray does not intersect the ground plane in front of the camera")]
    NoGroundIntersection,

    #[error("fewer than 3 valid correspondences ({found}) at ICP iteration {iteration}")]
    DegenerateCorrespondence { iteration: usize, found: usize },

    #[error("infeasible PPA threshold {c}: must not exceed 1/r_safe = {max}")]
    InfeasibleThreshold { c: f64, max: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs (scenario, files, thresholds)
    /// rather than by a failure while running.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MeshLoad { .. }
                | Error::DegenerateTriangle { .. }
                | Error::InfeasibleThreshold { .. }
                | Error::Argument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
