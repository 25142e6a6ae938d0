//! The continuous level-of-detail algebra.
//!
//! A fractional LOD index selects three coupled quantities: the active layer
//! width of the network, the blend factor that fades the newest neuron in,
//! and the image scale the width is meant to represent. Width `w` (as a
//! fraction of the maximum width) and scale `s` are tied by the invertible
//! map `s = 2^(4w - 4)`, so every width sub-network owns a unique scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network shape parameters. The default reproduces a 10-layer network with
/// widths 128..512 covering LODs 1.0..385.0 and scales 1/8..1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Ray input dimensionality (6 Plücker components).
    pub input_dim: usize,
    /// Output dimensionality (RGBA).
    pub output_dim: usize,
    /// Total layer count: hidden layers plus the final output layer.
    pub layers: usize,
    /// Smallest usable hidden width (the base model).
    pub min_width: usize,
    /// Full hidden width.
    pub max_width: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_dim: 6,
            output_dim: 4,
            layers: 10,
            min_width: 128,
            max_width: 512,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.output_dim < 1 {
            return Err(Error::invalid("input_dim and output_dim must be >= 1"));
        }
        if self.layers < 2 {
            return Err(Error::invalid(
                "at least two layers required (one hidden, one output)",
            ));
        }
        if self.min_width < 1 {
            return Err(Error::invalid("min_width must be >= 1"));
        }
        if self.min_width > self.max_width {
            return Err(Error::invalid(format!(
                "min_width {} exceeds max_width {}",
                self.min_width, self.max_width
            )));
        }
        Ok(())
    }

    /// Largest LOD index: every width from `min_width` to `max_width` gets
    /// one integer step, starting at 1.0.
    pub fn max_lod(&self) -> f64 {
        (self.max_width - self.min_width + 1) as f64
    }

    /// Smallest representable scale (the scale of the base width).
    pub fn min_scale(&self) -> f64 {
        width_fraction_to_scale(self.min_width as f64 / self.max_width as f64)
    }
}

/// A fully resolved LOD: index, active width, blend factor, and target scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LodSpec {
    pub lod: f64,
    pub active_width: usize,
    pub alpha: f64,
    pub scale: f64,
}

impl LodSpec {
    pub fn resolve(cfg: &ArchConfig, lod: f64) -> Result<LodSpec> {
        let (active_width, alpha) = width_for_lod(cfg, lod)?;
        let scale = scale_for_lod(cfg, lod)?;
        Ok(LodSpec {
            lod,
            active_width,
            alpha,
            scale,
        })
    }
}

/// Result of mapping a scale back to a LOD; `clamped` flags scales outside
/// the representable range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleToLod {
    pub lod: f64,
    pub clamped: bool,
}

fn check_lod_range(cfg: &ArchConfig, lod: f64) -> Result<()> {
    if !lod.is_finite() || lod < 1.0 || lod > cfg.max_lod() {
        return Err(Error::invalid(format!(
            "lod {lod} outside valid range [1, {}]",
            cfg.max_lod()
        )));
    }
    Ok(())
}

/// Active width and blend factor for a fractional LOD.
///
/// The newest neuron is the ceil(lod)-th one; alpha ramps 0 -> 1 as the
/// fraction crosses the bracket and is exactly 1 at integer LODs, where the
/// active width is fully faded in.
pub fn width_for_lod(cfg: &ArchConfig, lod: f64) -> Result<(usize, f64)> {
    check_lod_range(cfg, lod)?;
    let ceil = lod.ceil();
    let active_width = cfg.min_width - 1 + ceil as usize;
    let alpha = 1.0 - (ceil - lod);
    Ok((active_width, alpha))
}

/// Integer LOD index at which `width` is fully faded in.
pub fn lod_for_width(cfg: &ArchConfig, width: usize) -> Result<f64> {
    if width < cfg.min_width || width > cfg.max_width {
        return Err(Error::invalid(format!(
            "width {width} outside [{}, {}]",
            cfg.min_width, cfg.max_width
        )));
    }
    Ok((width - cfg.min_width + 1) as f64)
}

fn width_fraction_to_scale(w: f64) -> f64 {
    (4.0 * w - 4.0).exp2()
}

/// Image scale represented by a fractional LOD.
///
/// Uses the fractional effective width `(min_width - 1 + lod) / max_width`
/// so the scale is continuous in the LOD index.
pub fn scale_for_lod(cfg: &ArchConfig, lod: f64) -> Result<f64> {
    check_lod_range(cfg, lod)?;
    let w = (cfg.min_width as f64 - 1.0 + lod) / cfg.max_width as f64;
    Ok(width_fraction_to_scale(w))
}

/// Exact inverse of [`scale_for_lod`]; out-of-range scales clamp to the
/// nearest endpoint and set the `clamped` flag.
pub fn lod_for_scale(cfg: &ArchConfig, scale: f64) -> ScaleToLod {
    let min_scale = cfg.min_scale();
    if !(scale >= min_scale) {
        return ScaleToLod {
            lod: 1.0,
            clamped: true,
        };
    }
    if scale > 1.0 {
        return ScaleToLod {
            lod: cfg.max_lod(),
            clamped: true,
        };
    }
    let w = (scale.log2() + 4.0) / 4.0;
    ScaleToLod {
        lod: w * cfg.max_width as f64 - cfg.min_width as f64 + 1.0,
        clamped: false,
    }
}

fn check_width_range(cfg: &ArchConfig, width: usize) -> Result<()> {
    if width < cfg.min_width || width > cfg.max_width {
        return Err(Error::invalid(format!(
            "width {width} outside [{}, {}]",
            cfg.min_width, cfg.max_width
        )));
    }
    Ok(())
}

/// Exact parameter count of the sub-network at `width`: input layer, the
/// square hidden layers, the output layer, and one normalization gain/bias
/// pair per hidden layer.
pub fn param_count(cfg: &ArchConfig, width: usize) -> Result<usize> {
    cfg.validate()?;
    check_width_range(cfg, width)?;
    let w = width;
    let hidden = cfg.layers - 1; // layers carrying normalization
    let middle = cfg.layers - 2; // square W x W layers
    let input_layer = w * cfg.input_dim + w;
    let middle_layers = middle * (w * w + w);
    let output_layer = cfg.output_dim * w + cfg.output_dim;
    let norm = 2 * w * hidden;
    Ok(input_layer + middle_layers + output_layer + norm)
}

/// Serialized size in bytes at `width` (single-precision payload).
pub fn model_bytes(cfg: &ArchConfig, width: usize) -> Result<usize> {
    Ok(param_count(cfg, width)? * 4)
}

/// Parameters added when growing from `width - 1` to `width`.
pub fn delta_param_count(cfg: &ArchConfig, width: usize) -> Result<usize> {
    if width <= cfg.min_width {
        return Err(Error::invalid(format!(
            "delta undefined at or below the base width {}",
            cfg.min_width
        )));
    }
    Ok(param_count(cfg, width)? - param_count(cfg, width - 1)?)
}
