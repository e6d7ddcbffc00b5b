//! Disentangled two-domain representation learning for spoken symptom
//! classification.
//!
//! The crate covers the full pipeline: audio/text preprocessing ([`dataio`]),
//! the two-domain encoder/generator/discriminator model ([`model`]), the
//! training objective ([`losses`]), the alternating min–max loop ([`train`]),
//! evaluation grids ([`eval`]) and a command-line front end ([`cli`]).

pub mod autograd;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
