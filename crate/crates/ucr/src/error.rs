use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("{path}: unsupported version {found} (this build reads version {supported})")]
    UnsupportedVersion { path: PathBuf, found: u32, supported: u32 },

    #[error("{path}: truncated file: needed {needed} bytes at offset {offset}, {available} left")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("no split named {0:?} in the dataset")]
    MissingSplit(String),

    #[error("output directory {0} exists and is not empty")]
    OutputExists(PathBuf),

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] ucr_core::Error),
}

/// Broad failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Io,
    Config,
    Data,
    Training,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Io => 1,
            Failure::Config => 3,
            Failure::Data => 4,
            Failure::Training => 5,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn failure(&self) -> Failure {
        use ucr_core::Error as C;
        match self {
            Error::Io { .. } | Error::OutputExists(_) | Error::Csv { .. } => Failure::Io,
            Error::Config { .. } => Failure::Config,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated { .. }
            | Error::Malformed { .. }
            | Error::MissingSplit(_) => Failure::Data,
            Error::Core(c) => match c {
                C::Config { .. } => Failure::Config,
                C::SampleDimension { .. }
                | C::CameraOutOfRange { .. }
                | C::NoCameras { .. }
                | C::EmptyStream
                | C::EmptyGallery
                | C::AllQueriesSkipped
                | C::MissingGroundTruth => Failure::Data,
                _ => Failure::Training,
            },
        }
    }
}
