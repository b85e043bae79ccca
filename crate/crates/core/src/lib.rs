//! Low-bitrate speech coding in the MDCT domain: a convolutional spectral
//! codec with a single-codebook vector quantizer, followed by a
//! flow-matching enhancer that refines the decoded spectrum.

pub mod autodiff;
pub mod bitstream;
pub mod cli;
pub mod codec;
pub mod enhancer;
pub mod error;
pub mod eval;
pub mod layers;
pub mod linalg;
pub mod model;
pub mod quantizer;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
