//! Anchor overlap analysis for anchor-based face detectors.
//!
//! The crate covers exact box geometry, anchor lattices with stride
//! reduction and shifted sub-lattices, Expected Max Overlapping (EMO)
//! scores by quadrature and Monte Carlo, anchor matching with face shift
//! jittering and hard face compensation, dataset-level overlap statistics,
//! and an exhaustive anchor-design search.

pub mod anchor_layout;
pub mod config;
pub mod dataset;
pub mod emo;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod optimizer;
pub mod report;
pub mod rng;
pub mod stats;

pub use anchor_layout::{Anchor, AnchorId, AnchorLayout, AnchorSpec, LatticeGroup, MaxIou, ShiftCount};
pub use dataset::{Annotations, FaceRecord, ScaleBucketReport};
pub use emo::{EmoEstimate, EmoMethod, EmoQuery};
pub use error::{Error, Result};
pub use geometry::{intersect_area, iou, iou_offset_square, RectBox};
pub use matching::{AnchorLabel, MatchConfig, MatchResult};
pub use optimizer::{ConfigScore, SearchSpace};
