use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid packet: {0}")]
    InvalidPacket(String),

    #[error("packet leaks outside the grid: density {density:.3e} near the boundary exceeds {threshold:.1e}")]
    PacketLeak { density: f64, threshold: f64 },

    #[error("boundary leak at t = {time:.6e}: edge density {density:.3e} exceeds {threshold:.1e}")]
    BoundaryLeak {
        time: f64,
        density: f64,
        threshold: f64,
    },

    #[error("state has negative-momentum mass {fraction:.3e} (limit {limit:.1e})")]
    NegativeMomentum { fraction: f64, limit: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("invalid measurement schedule: {0}")]
    InvalidSchedule(String),

    #[error("continuous step too large: inner_dt = {inner_dt:.3e} exceeds 1/(20 V0) = {limit:.3e}")]
    StepTooLarge { inner_dt: f64, limit: f64 },

    #[error("nothing detected (detected fraction {0:.3e})")]
    NothingDetected(f64),

    #[error("distributions have disjoint supports")]
    DisjointSupports,

    #[error("no fit possible: {0}")]
    NoFit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BoundaryLeak { .. } => 3,
            Error::InvalidArgument(_) | Error::Scenario(_) => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
