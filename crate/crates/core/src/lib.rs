//! Audio-visual fusion toolkit for temporal action localization.
//!
//! The crate covers the pieces needed to add an audio stream to a
//! video-only localization pipeline and measure the effect:
//!
//! * [`align`]: equalize audio/video sequence lengths (window-centered
//!   pairing, duplicate-and-trim, average-and-trim).
//! * [`fusion`]: concatenation and a gated residual cross-modal block with
//!   analytic gradients.
//! * [`nms`]: pooled, class-wise NMS over proposals from several modalities.
//! * [`localizer`]: a small per-snippet scorer and run-based proposal
//!   generator standing in for a real proposal network.
//! * [`eval`]: IoU matching, AP/mAP at IoU threshold sweeps, per-class deltas.
//! * [`synth`]: synthetic multimodal episodes with controllable audio
//!   informativeness.
//! * [`io`]: the `MMFS` feature container, JSON-lines proposal/annotation
//!   records and `MMCK` checkpoints.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod align;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod linalg;
pub mod localizer;
pub mod nms;
pub mod pipeline;
pub mod synth;
pub mod types;

pub use align::{avg_trim, dup_trim, pair_by_window_centering, AlignMethod, AlignedPair, AlignmentTrace};
pub use error::{Error, Result};
pub use eval::{average_precision, evaluate, match_predictions, per_class_delta, EvalReport, Preset};
pub use fusion::{concat_fuse, rmattn_backward, rmattn_forward, RMAttnParams};
pub use linalg::Matrix;
pub use nms::{nms, pool_and_nms};
pub use types::{
    snippet_centers, temporal_iou, FeatureSequence, GroundTruth, Modality, Proposal, ProposalSet, Segment,
    SnippetTiming,
};
