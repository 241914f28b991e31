//! Flow-dynamics toolkit: multi-stride optical flow, power-normalized
//! magnitude correction, flow features, per-video (type, stride, gamma)
//! selection, and a toy feature-hallucination head, all verifiable on
//! seeded synthetic corpora.

pub mod correction;
pub mod corpus;
pub mod error;
pub mod estimator;
pub mod flo;
pub mod flow;
pub mod frames;

pub use error::{Error, Result};
pub use flow::{FlowField, FlowSource, Frame, PolarFlow, VideoClip};
