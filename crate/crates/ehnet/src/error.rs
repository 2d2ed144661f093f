use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: unsupported audio: {detail}")]
    UnsupportedAudio { path: PathBuf, detail: String },
    #[error("{what}: {detail}")]
    Parse { what: String, detail: String },
    #[error("{0}")]
    Usage(String),
    #[error("corpus generation aborted: {0}")]
    CorpusAborted(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: ehnet_core::Error,
    },
    #[error(transparent)]
    Core(#[from] ehnet_core::Error),
}

impl Error {
    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl Into<String>) -> Error {
        Error::Parse {
            what: what.into(),
            detail: detail.into(),
        }
    }

    /// The core error underneath, if any.
    pub fn core(&self) -> Option<&ehnet_core::Error> {
        match self {
            Error::Core(e) | Error::Context { source: e, .. } => Some(e),
            _ => None,
        }
    }

    /// True for failures caused by the numbers themselves: divergence,
    /// overflow or non-finite values.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.core(),
            Some(
                ehnet_core::Error::Diverged { .. }
                    | ehnet_core::Error::NumericOverflow
                    | ehnet_core::Error::NonFinite(_)
            )
        )
    }
}

pub(crate) trait ResultExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for std::result::Result<T, ehnet_core::Error> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Context {
            context: context(),
            source,
        })
    }
}
