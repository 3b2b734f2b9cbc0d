//! Riemannian geometry of the latent spaces of small smooth generative models.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure computation:
//! dense linear algebra, feed-forward networks with exact input Jacobians,
//! VAE and swap-disentangling objectives, pullback-metric geometry (geodesics,
//! graph distances, tangent spaces) and the scalar latent-space metrics built
//! on top of them. File formats are encoded to and decoded from byte buffers
//! here; reading and writing files is left to the `latentgeo` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod checkpoint;
pub mod data;
mod error;
pub mod geometry;
pub mod models;
pub mod network;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{Matrix, SeededRng};
