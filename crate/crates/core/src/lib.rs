//! Depth-image reconstruction from Wi-Fi channel state information.
//!
//! A depth-side variational autoencoder (the teacher) learns a regularized
//! latent space over moving-object depth images together with three auxiliary
//! targets (binary shape mask, center coordinates, average depth). A CSI-side
//! encoder (the student) is then distilled into that latent space at the
//! feature, latent, and ground-truth levels, so that at inference time depth
//! images are produced from CSI alone through the teacher's frozen decoders.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation.
//! File formats, checkpoints, and the command-line driver live in the
//! companion `widepth` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod c64;
pub mod csi;
pub mod data;
pub mod depth;
pub mod dsp;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod rng;
pub mod sim;
pub mod student;
pub mod teacher;
pub mod tensor;

pub use real::Real;
pub use rng::Rng;
pub use tensor::Tensor;
