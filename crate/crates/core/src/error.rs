use thiserror::Error;

/// Errors raised by the rate, bound and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("multi-photon bound needs at least 3 photons, got {0}")]
    PhotonCountTooLow(usize),

    #[error("unsupported Fock sampling photon count {0} (expected 1 or 2)")]
    UnsupportedPhotonCount(usize),

    #[error("total click probability is zero (no dark counts and no light)")]
    DegenerateClicks,

    #[error("C-round click probability is zero, key rate undefined")]
    NoCorrectClicks,

    #[error(
        "truncation at j = {j_max} too shallow: tail {tail:.3e} exceeds 1e-9 of value {value:.3e}"
    )]
    TruncationTooShallow { j_max: usize, tail: f64, value: f64 },

    #[error("phase-error variant {given} does not match yields sampled for {expected}")]
    VariantMismatch {
        given: &'static str,
        expected: &'static str,
    },

    #[error("ill-posed decoy dataset: {0}")]
    IllPosedDataset(String),

    #[error("decoy data inconsistent: linear program for {target} is infeasible")]
    InfeasibleLp { target: String },

    #[error("linear program for {target} failed ({status})")]
    LpFailure { target: String, status: String },

    #[error("duality gap {gap:.3e} for {target} exceeds 1e-9")]
    DualityGap { target: String, gap: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is not `Clone`/`PartialEq`; this keeps the kind and message.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind:?}: {message}")]
pub struct IoError {
    pub kind: std::io::ErrorKind,
    pub message: String,
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(IoError {
            kind: err.kind(),
            message: err.to_string(),
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}
