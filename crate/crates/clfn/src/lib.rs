//! Light field networks with continuous levels of detail.
//!
//! A light field network maps a ray, written in Plücker coordinates, straight
//! to an RGBA color with a single MLP evaluation per pixel. This crate trains
//! such networks so that every hidden-layer width between a minimum and the
//! full width is itself a usable model: a fractional level-of-detail index
//! picks the active width, a blend factor fades the newest neuron in, and a
//! matching image scale supervises it through summed-area-table box filtering.
//! Trained models serialize as a progressive stream (base model plus one
//! small delta per width) so a byte prefix is always renderable.
//!
//! Module map:
//! - [`geometry`]: cameras and Plücker rays
//! - [`sat`]: summed-area tables for arbitrary-scale box filtering
//! - [`lod`]: width/scale/LOD mappings and parameter accounting
//! - [`mlp`]: the variable-width network, backprop, Adam, rendering
//! - [`sampler`]: saliency-weighted ray sampling and filtered targets
//! - [`trainer`]: the dual-loss training loop
//! - [`codec`]: progressive stream encode/decode and streaming simulation
//! - [`metrics`]: PSNR, SSIM, temporal flicker
//! - [`synth`]: procedural multi-camera dataset generation
//! - [`dataset`]: on-disk dataset layout
//! - [`cli`]: the `clfn` command-line front end
//!
//! The `examples/` directory holds one runnable example per capability; see
//! the README for the tour.

pub mod cli;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod lod;
pub mod metrics;
pub mod mlp;
pub mod raster;
pub mod sampler;
pub mod sat;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
