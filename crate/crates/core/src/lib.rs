//! Unsupervised point-cloud completion by energy-based residual transport
//! in a learned latent space.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod geometry;
pub mod gradsuite;
pub mod inference;
pub mod networks;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod train;
pub mod transport;

pub use error::{Error, Result};
