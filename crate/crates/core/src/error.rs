use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid image metadata: {0}")]
    InvalidMeta(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// Detections or annotations that point at ids the dataset does not define.
    #[error(
        "referential integrity violated: unknown image ids {image_ids:?}, unknown category ids {category_ids:?}"
    )]
    Referential {
        image_ids: Vec<u64>,
        category_ids: Vec<u64>,
    },

    #[error("failed to parse {}: {message} at byte {offset} (line {line}, column {column})", path.display())]
    Parse {
        path: PathBuf,
        message: String,
        offset: usize,
        line: usize,
        column: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// True for errors caused by bad parameters rather than bad data or I/O.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }

    pub(crate) fn referential(mut image_ids: Vec<u64>, mut category_ids: Vec<u64>) -> Self {
        image_ids.sort_unstable();
        image_ids.dedup();
        category_ids.sort_unstable();
        category_ids.dedup();
        Error::Referential {
            image_ids,
            category_ids,
        }
    }
}
