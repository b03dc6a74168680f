use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("run lengths sum to {actual}, expected {expected} ({height}x{width})")]
    RleLength {
        height: u32,
        width: u32,
        expected: u64,
        actual: u64,
    },
    #[error("bitmap must be non-empty and rectangular")]
    InvalidBitmap,
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("track lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("detection {detection_id} belongs to video {found}, expected {expected}")]
    VideoMismatch {
        detection_id: String,
        expected: String,
        found: String,
    },
    #[error("detection {0} has no selection flags")]
    SelectionUnset(String),
    #[error("duplicate detection id {detection_id} in video {video_id}")]
    DuplicateDetectionId {
        video_id: String,
        detection_id: String,
    },
    #[error("oracle scorer has no ground truth for video {0}")]
    MissingGroundTruth(String),
    #[error("only {0} eligible frames, need at least 3")]
    TooFewEligibleFrames(usize),
    #[error("no video with at least 3 eligible frames in the {0} pool")]
    NoEligibleVideos(&'static str),
    #[error("{name} = {value} is outside its valid range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("loss must be non-negative, got {0}")]
    NegativeLoss(f64),
    #[error("video {0} missing from ground truth")]
    MissingVideo(String),
}
