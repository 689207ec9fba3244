//! Core library for the GFocal neural operator.
//!
//! Everything in this crate is pure computation: a small dense-tensor type
//! with reverse-mode automatic differentiation, the four model blocks
//! (Nystrom global attention, reference-grid position encoder, gated fusion,
//! slice-based focal attention), the assembled model, evaluation metrics,
//! and synthetic problem generators with brute-force oracle solvers.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI, and the
//! training harness live in the companion `gfocal-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod blocks;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
