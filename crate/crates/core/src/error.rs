use std::path::PathBuf;

use crate::pyramid::TileAddress;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { message: String, line: Option<u32> },

    #[error("tile file missing for {0}")]
    TileMissing(TileAddress),

    #[error("address out of bounds: {0}")]
    AddressOutOfBounds(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("illegal action: {0}")]
    IllegalAction(String),

    #[error("episode is over; call reset")]
    EpisodeOver,

    #[error("io error on {path:?}: {source}")]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn format(message: impl Into<String>) -> Self {
        Error::Format {
            message: message.into(),
            line: None,
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }

    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Format { .. } => "FormatError",
            Error::TileMissing(_) => "TileMissing",
            Error::AddressOutOfBounds(_) => "AddressOutOfBounds",
            Error::Config(_) => "ConfigError",
            Error::IllegalAction(_) => "IllegalAction",
            Error::EpisodeOver => "EpisodeOver",
            Error::Io { .. } => "IoError",
            Error::Image(_) => "ImageError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { path: None, source }
    }
}
