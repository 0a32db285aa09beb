use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("unsupported dimensionality: dim[0] = {0}")]
    UnsupportedDimensionality(i16),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("spacing must be strictly positive and finite, got {0:?}")]
    NonPositiveSpacing([f32; 3]),

    #[error("offset table bound to spacing {table:?} but volume spacing is {volume:?}")]
    SpacingMismatch { table: [f32; 3], volume: [f32; 3] },

    #[error("mask dims {left:?} do not match {right:?}")]
    DimsMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("mask contains no voxels")]
    EmptyMask,

    #[error("confusion counts are empty")]
    EmptyCounts,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by undecodable input bytes, as opposed to
    /// well-formed inputs that disagree with each other.
    pub fn is_parse_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedHeader(_)
                | Error::TruncatedData { .. }
                | Error::UnsupportedDatatype(_)
                | Error::UnsupportedDimensionality(_)
                | Error::UnsupportedVersion(_)
                | Error::Io(_)
        )
    }
}
