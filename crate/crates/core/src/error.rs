use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid keypoints: {0}")]
    InvalidKeypoints(String),

    #[error("keypoint count mismatch: {left} vs {right}")]
    KeypointCountMismatch { left: usize, right: usize },

    #[error("truncated keypoint payload: expected {expected} bytes, got {actual}")]
    TruncatedKeypoints { expected: usize, actual: usize },

    #[error("coordinate out of range: {0}")]
    CoordinateOutOfRange(f32),

    #[error("pivot encode error: {0}")]
    PivotEncode(String),

    #[error("pivot decode error: {0}")]
    PivotDecode(String),

    #[error("stream without handshake")]
    MissingHandshake,

    #[error("unknown packet kind 0x{0:02x}")]
    UnknownPacketKind(u8),

    #[error("bad stream magic")]
    BadMagic,

    #[error("unexpected end of stream (last good frame index: {})", match .last_good { Some(i) => i.to_string(), None => "none".into() })]
    UnexpectedEof { last_good: Option<u32> },

    #[error("malformed stream: {0}")]
    Malformed(String),

    #[error("flow/frame size mismatch: flow {flow:?}, frame {frame:?}")]
    FlowSizeMismatch { flow: (usize, usize), frame: (usize, usize) },

    #[error("empty sequence")]
    EmptySequence,

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),

    #[error("frame too small for metric: {0}x{1}")]
    FrameTooSmall(usize, usize),

    #[error("backend shape violation: expected {expected:?}, got {actual:?}")]
    BackendShape { expected: (usize, usize), actual: (usize, usize) },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no background pixels")]
    NoBackground,

    #[error("zero displayed frames")]
    ZeroFrames,

    #[error("missing sidecar: {0}")]
    MissingSidecar(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::MissingSidecar(_)
            | Error::InvalidKeypoints(_)
            | Error::KeypointCountMismatch { .. } => 2,
            Error::Io(_) | Error::Image(_) | Error::Json(_) | Error::InvalidFrame(_) => 3,
            Error::MissingHandshake
            | Error::UnknownPacketKind(_)
            | Error::BadMagic
            | Error::UnexpectedEof { .. }
            | Error::Malformed(_)
            | Error::TruncatedKeypoints { .. }
            | Error::CoordinateOutOfRange(_)
            | Error::PivotDecode(_) => 4,
            _ => 1,
        }
    }
}
