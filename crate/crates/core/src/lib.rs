//! Promptable polyp segmentation with a bidirectional selective state-space
//! image encoder.
//!
//! The crate is self-contained: a small tape-based autograd engine
//! ([`autograd`]), the selective scan kernels and Mamba block ([`ssm`]), the
//! image encoder, box-prompt encoder and mask decoder ([`encoder`],
//! [`prompt`], [`decoder`]), the Dice + Focal objective ([`loss`]), data
//! generation and loading ([`data`]) and the training loop ([`train`]).

pub mod autograd;
pub mod check;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod loss;
pub mod model;
pub mod nn;
pub mod params;
pub mod prompt;
pub mod rng;
pub mod ssm;
pub mod tensor;
pub mod train;

pub use autograd::{Tape, Var};
pub use error::{Error, LoadError, Result};
pub use rng::Rng;
pub use tensor::{DType, Element, Tensor};
