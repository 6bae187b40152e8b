//! Dysarthric speech severity estimation with weakly supervised contrastive
//! pretraining.
//!
//! A regression model trained on labeled features pseudo-labels unlabeled
//! data (Stage 1); a projector is pretrained with label-driven NT-Xent pairing
//! plus a variance hinge (Stage 2); its frame-level layers initialise the final
//! regressor (Stage 3). Everything runs on precomputed frame features.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
