//! Point-wise convolutional network with attention pooling.
//!
//! Input patches of shape `m x n x K x 3` are processed by blocks of two
//! shared per-point affine layers (ReLU), each followed by max pooling along
//! the point axis. Before pooling, every block may compute an attention
//! descriptor over all `n * K` points of a subject. The flattened final local
//! features of each landmark are concatenated with the subject's attention
//! descriptors and regressed to 3D coordinates by an MLP.

mod arch;
mod checkpoint;
mod layers;
mod model;
mod params;

pub use arch::{ArchConfig, AttentionBlocks};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader, TensorEntry};
pub use layers::{attention, max_pool, pointwise_conv, topk_attention, Activation, AttentionOut, Pooled};
pub use model::{backward, forward, predict, ForwardTrace, Mode};
pub use params::{init_params, AttentionParams, BlockParams, Dense, ModelParams};

use std::fmt::Debug;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type of the network (f32 for training, f64 for
/// gradient checks).
pub trait Real:
    LinalgScalar + Float + FromPrimitive + NumAssign + ScalarOperand + Debug + Default + Send + Sync + std::iter::Sum + 'static
{
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
