use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{key} out of range: {reason}")]
    Config { key: &'static str, reason: String },

    #[error("dimension mismatch in domain {domain} sample {index}: expected {expected}, found {found}")]
    SampleDimension {
        domain: usize,
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("camera out of range in domain {domain} sample {index}: camera {camera}, domain has {num_cameras}")]
    CameraOutOfRange {
        domain: usize,
        index: usize,
        camera: usize,
        num_cameras: usize,
    },

    #[error("domain {domain} declares no cameras")]
    NoCameras { domain: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("re-ranking needs n > k1 >= k2 >= 1 (n={n}, k1={k1}, k2={k2})")]
    RerankParams { n: usize, k1: usize, k2: usize },

    #[error("no clusters found")]
    NoClusters,

    #[error("degenerate prototype for cluster {cluster}: member mean is zero")]
    DegeneratePrototype { cluster: usize },

    #[error("label {0} has no prototype")]
    MissingPrototype(usize),

    #[error("prototype index {index} out of range for bank of {len}")]
    PrototypeIndex { index: usize, len: usize },

    #[error("empty sampling pool")]
    EmptyPool,

    #[error("frozen encoder is absent")]
    NoFrozenEncoder,

    #[error("empty gallery")]
    EmptyGallery,

    #[error("every query was skipped (no gallery positive after filtering)")]
    AllQueriesSkipped,

    #[error("sample carries no ground-truth id")]
    MissingGroundTruth,

    #[error("domain {domain} produced no clusters in any epoch")]
    DomainAborted { domain: usize },

    #[error("empty domain stream")]
    EmptyStream,
}
