use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("payoff matrix is not antisymmetric (max |A + A^T| = {max_defect:e})")]
    NotAntisymmetric { max_defect: f64 },

    #[error("payoff entry ({row}, {col}) = {value} lies outside [-1, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },

    #[error("bad dimension: {0}")]
    BadDimension(String),

    #[error("cyclic games need an odd number of strategies, got {0}")]
    EvenDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("not a point of the simplex: {0}")]
    NotInSimplex(String),

    #[error("point is not interior to the simplex (min coordinate {min_coord:e})")]
    NotInterior { min_coord: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("state left the simplex at t = {time}: coordinate {coord} = {value:e} (step too large?)")]
    StateLeftSimplex { time: f64, coord: usize, value: f64 },

    #[error("requested range [{t0}, {t1}] is outside the trajectory span [{start}, {end}]")]
    RangeOutOfSpan { t0: f64, t1: f64, start: f64, end: f64 },

    #[error("empty collection")]
    Empty,

    #[error("initial distance between ensembles is zero")]
    DegenerateInitialDistance,

    #[error("game has no interior equilibrium (null space dimension {null_dim})")]
    NoInteriorEquilibrium { null_dim: usize },

    #[error("initial mean strategy coincides with the interior equilibrium")]
    MeanAtNash,

    #[error("ensemble support left the plateau {{prod p_i >= c}} at t = {time} (min product {min_product:e})")]
    SupportLeftPlateau { time: f64, min_product: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
