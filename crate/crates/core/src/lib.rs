//! Distributions over implicit neural representations.
//!
//! A hypernetwork maps latent codes to the weights of small coordinate
//! MLPs, and a point-cloud discriminator compares the functions it emits
//! against real data sampled as coordinate/feature sets. The crate also
//! carries the two set-based baselines, checkpointing, and numerical
//! checks of the Lipschitz bounds behind the set discriminator.

pub mod baselines;
pub mod checkpoint;
pub mod data;
mod error;
pub mod formats;
pub mod function_rep;
pub mod hypernet;
pub mod lipschitz;
pub mod mlp;
pub mod optim;
pub mod persist;
pub mod pointconv;
pub mod rff;
pub mod rng;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
