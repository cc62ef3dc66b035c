use std::io;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::logic::FeatureId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("literal refers to feature {index} but the model only has {count} features")]
    FeatureOutOfRange { index: u32, count: usize },

    #[error("configuration assigns feature {0} both ways")]
    Inconsistent(FeatureId),

    #[error("invalid feature name {0:?}")]
    InvalidFeatureName(String),

    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),

    #[error("unknown features: {}", .0.join(", "))]
    UnknownFeatures(Vec<String>),

    #[error("clause blow-up while transforming {origin}: more than {cap} intermediate clauses")]
    BlowUp { origin: String, cap: usize },

    #[error("satisfiability query did not finish within {0:?}")]
    Indeterminate(Duration),

    #[error("configuration cannot be extended to a valid one")]
    InvalidConfiguration,

    #[error("feature model is unsatisfiable")]
    UnsatisfiableModel,

    #[error(
        "{count} interactions exceed the cap of {cap}; split the universe with --group file or --group folder"
    )]
    InteractionCap { count: u128, cap: u128 },

    #[error("instance too large for brute-force enumeration: {0}")]
    TooLarge(String),

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("{}:{line}: unbalanced #{directive}", path.display())]
    Unbalanced {
        path: PathBuf,
        line: usize,
        directive: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
