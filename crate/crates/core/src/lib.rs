//! Keypoint-driven talking-head video codec.
//!
//! The sender transmits an occasional full pivot frame plus ten normalized
//! keypoints (8 bytes each) per keyed frame. The receiver warps the pivot with
//! a dense flow interpolated from the keypoint displacements, fills in skipped
//! frames between keyed neighbours, and enhances the output patch by patch.
//!
//! Every learned component sits behind a trait ([`WarpBackend`],
//! [`InterpBackend`], [`SrBackend`], [`KeypointDetector`]) and ships with a
//! deterministic reference implementation, so the whole pipeline runs and can
//! be checked bit-for-bit without trained weights.

pub mod bitstream;
pub mod channel;
pub mod error;
pub mod harness;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod pivot;
pub mod sr;
pub mod synthetic;
pub mod warp;

pub use bitstream::{Packet, PacketKind, RateLedger};
pub use channel::{ChannelConfig, ChannelMode, ChannelReport};
pub use error::{Error, Result};
pub use interp::{FrameTag, InterpBackend, ReferenceInterp, Schedule};
pub use metrics::EvalReport;
pub use model::{Frame, KeyPointSet, PivotThresholds, PoseAngles, StreamConfig};
pub use pipeline::{Decoder, EncodedStream, Encoder, KeypointDetector};
pub use pivot::{BackgroundEmbedding, FaceMask, PivotPolicy, PivotState};
pub use sr::{IdentitySr, Patch, SrBackend, UnsharpSr};
pub use warp::{DenseFlow, ReferenceWarp, WarpBackend};
