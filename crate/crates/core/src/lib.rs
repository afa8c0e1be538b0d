//! Learnable discrete-exterior-calculus operators on triangle meshes.
//!
//! The pipeline builds a block differential `d` and learnable Hodge stars
//! `star0`, `star1` from per-vertex features, solves the generalized
//! eigenproblem `dᵀ star1 d x = λ star0 x` for its lowest eigenpairs, turns
//! those into sign-agnostic spectral features, and backpropagates through the
//! whole chain in closed form.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, the training
//! driver and the command line live in the `hodgenet` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dec;
pub mod eig;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod linalg;
pub mod math;
pub mod mesh;
pub mod model;
pub mod nn;
pub mod sparse;
pub mod spectral_grad;
pub mod tasks;

pub use error::{Error, Result};
