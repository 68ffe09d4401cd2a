use std::path::PathBuf;

use crate::registry::PlaceLevel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    IoRaw(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid geojson: {0}")]
    GeoJson(String),

    #[error("duplicate place code {code:?} at level {level}")]
    DuplicateCode { code: String, level: PlaceLevel },

    #[error("feature {index}: missing or invalid property {property:?}")]
    MissingProperty { index: usize, property: &'static str },

    #[error("feature {index}: malformed geometry: {reason}")]
    MalformedGeometry { index: usize, reason: String },

    #[error("places {a:?} and {b:?} overlap at level {level}")]
    OverlappingPlaces { a: String, b: String, level: PlaceLevel },

    #[error("place {code:?}: centroid lies outside its geometry")]
    CentroidOutside { code: String },

    #[error("coordinates out of range: lat={lat}, lon={lon}")]
    CoordinateRange { lat: f64, lon: f64 },

    #[error("unknown place level {0:?}")]
    UnknownLevel(String),

    #[error("place {code:?} has no ancestor at level {level}")]
    MissingParent { code: String, level: PlaceLevel },

    #[error("unknown place {0:?}")]
    UnknownPlace(String),

    #[error("place {0:?} has no geometry")]
    MissingGeometry(String),

    #[error("invalid count: shared={shared}, users_i={users_i}, users_j={users_j}")]
    InvalidCounts { shared: u64, users_i: u64, users_j: u64 },

    #[error("need at least {need} observations, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("zero variance in series")]
    ZeroVariance,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("non-positive value {value} cannot be log-transformed")]
    NonPositive { value: f64 },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("k={k} out of range for {n} places")]
    InvalidK { k: usize, n: usize },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
