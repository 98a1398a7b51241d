//! Segmentation of screen-content images into a smooth background layer and a
//! sparse, connected foreground layer.
//!
//! Each N×N block `f` is decomposed as `f = Pα + s`, where `P` holds the
//! first K zig-zag DCT atoms and `s` is penalized by ℓ1 plus an overlapping
//! row/column group norm. The problem is solved with ADMM ([`admm`]);
//! [`segmentation`] turns `s` into a foreground mask and fills the background.

pub mod admm;
pub mod baseline;
pub mod cli;
pub mod dct_basis;
pub mod error;
pub mod eval;
pub mod image_io;
pub mod operators;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
