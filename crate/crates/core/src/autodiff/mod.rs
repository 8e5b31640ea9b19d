//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an ordered list of nodes (dense, 2-D convolution, batch
//! norm, ELU, max/average pooling, LSTM, dropout, softmax), each owning its
//! parameters and gradients. [`Graph::forward`] runs the net on a batch and
//! caches activations; [`Graph::backward`] (or the fused
//! [`Graph::backward_cross_entropy`]) accumulates parameter gradients by
//! reverse traversal.
//!
//! Everything is generic over the scalar type: `f32` for training speed,
//! `f64` for gradient checking and bit-reproducible evaluation.

pub mod checkpoint;
mod gradcheck;
mod graph;
mod ops;
mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Graph, GraphBuilder, Mode, Node, Op, OpKind};
pub use tensor::{Scalar, Tensor};
