//! Minimal reverse-mode differentiable compute layer.
//!
//! A [`Graph`] is a define-by-run tape over 2-D tensors (time x channels,
//! 32-bit floats in the product path). Layers are either composed from
//! elementwise/matmul primitives or registered as fused tape operations
//! with hand-written backward passes (1-D convolution, the GRU, and the
//! differentiable log-mel front-end). Every operation is generic over
//! [`Real`] so the identical code can be gradient-checked in f64.
//!
//! Parameters live in a [`ParamStore`] (values, gradient accumulators, Adam
//! moments); [`adam_step`] applies the optimizer and [`checkpoint`]
//! serializes the store as a name-indexed little-endian f32 binary guarded
//! by an architecture hash.

pub mod checkpoint;
pub mod gradcheck;
mod layers;
mod graph;
pub mod gru;
mod melop;
mod store;

pub use graph::{Gradients, Graph, NodeId};
pub use gru::{BiGru, GruNodes, GruWeights};
pub use layers::{ConvParams, DenseParams};
pub use melop::MelBasis;
pub use store::{adam_step, learning_rate, AdamConfig, ParamId, ParamStore, Parameter};

use ndarray::ScalarOperand;

/// Scalar type the substrate is generic over; implemented for f32 and f64.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssign
    + ndarray::LinalgScalar
    + ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}
