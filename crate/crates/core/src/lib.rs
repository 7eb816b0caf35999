//! Probabilistic inverse graphics over hierarchical 3D scene graphs.
//!
//! Objects are voxel shapes placed by a rooted tree of coordinate frames in
//! which an object either floats freely or rests on a face of its parent.
//! Inference recovers object poses and contact structure from depth images
//! with Metropolis–Hastings and involutive MCMC kernels.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;

pub use error::{Error, Result};
pub mod cloud;
pub mod existence;
pub mod harness;
pub mod inference;
pub mod kdtree;
pub mod likelihood;
pub mod renderer;
pub mod scenegraph;
pub mod shape_learning;
pub mod shapes;
