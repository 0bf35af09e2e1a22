//! Patch-based 3D anatomical landmark localization on facial meshes.
//!
//! The crate covers the whole pipeline: rigid registration of a subject
//! scan to a reference, atlas-based initial landmark estimates, ordered
//! local patch extraction, a point-wise convolutional network with
//! attention pooling, training, surface re-projection and evaluation.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod registration;
pub mod schema;
pub mod synthetic;
pub mod atlas;
pub mod network;
pub mod patching;
pub mod pipeline;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
