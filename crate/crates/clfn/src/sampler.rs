//! Saliency-weighted importance sampling of training rays.
//!
//! Foreground pixels (alpha above a threshold) are drawn from the density
//! `p(x) = lambda_f + lambda_s * s(x)` built from the saliency map; background
//! pixels are drawn uniformly. Each batch takes 67% of its rays from the
//! foreground and the rest from the background.

use nalgebra::Vector2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{ray_for_pixel, Camera, PluckerRay};
use crate::raster::Image;
use crate::sat::SummedAreaTable;

/// Fraction of each batch drawn from foreground pixels.
pub const FOREGROUND_FRACTION: f64 = 0.67;

/// Default alpha threshold separating foreground from background.
pub const DEFAULT_FG_THRESHOLD: f32 = 0.5;

/// One training image with everything sampling needs: the RGBA pixels, the
/// prebuilt summed-area table, the saliency map, and the camera. The alpha
/// matte is the image's own A channel.
#[derive(Clone, Debug)]
pub struct TrainingView {
    pub image: Image,
    pub sat: SummedAreaTable,
    pub saliency: Image,
    pub camera: Camera,
}

impl TrainingView {
    pub fn new(image: Image, saliency: Image, camera: Camera) -> Result<TrainingView> {
        if image.channels != 4 {
            return Err(Error::invalid("training images must be RGBA"));
        }
        if saliency.channels != 1
            || saliency.width != image.width
            || saliency.height != image.height
        {
            return Err(Error::invalid(
                "saliency map must be single-channel and match the image dimensions",
            ));
        }
        if image
            .data
            .iter()
            .skip(3)
            .step_by(4)
            .any(|&a| !(0.0..=1.0).contains(&a))
        {
            return Err(Error::invalid("alpha matte values must lie in [0, 1]"));
        }
        if (camera.resolution.0 as usize, camera.resolution.1 as usize)
            != (image.width, image.height)
        {
            return Err(Error::invalid(
                "camera resolution must match the image dimensions",
            ));
        }
        let sat = SummedAreaTable::build(&image)?;
        Ok(TrainingView {
            image,
            sat,
            saliency,
            camera,
        })
    }
}

/// Per-view sampling distribution over pixels.
#[derive(Clone, Debug)]
pub struct RayPdf {
    /// Linear pixel indices of foreground pixels.
    fg_indices: Vec<u32>,
    /// Normalized foreground probabilities, parallel to `fg_indices`.
    fg_probs: Vec<f64>,
    /// Cumulative distribution for inverse-CDF draws.
    fg_cdf: Vec<f64>,
    /// Linear pixel indices of background pixels (uniform).
    bg_indices: Vec<u32>,
    pub fg_fraction: f64,
    pub lambda_f: f64,
    pub lambda_s: f64,
    /// Set when the view has no foreground pixels at all.
    pub no_foreground: bool,
}

impl RayPdf {
    pub fn foreground_count(&self) -> usize {
        self.fg_indices.len()
    }

    pub fn background_count(&self) -> usize {
        self.bg_indices.len()
    }

    /// Normalized probability of a foreground pixel by linear index.
    pub fn foreground_prob(&self, pixel_index: u32) -> Option<f64> {
        self.fg_indices
            .binary_search(&pixel_index)
            .ok()
            .map(|i| self.fg_probs[i])
    }

    pub fn draw_foreground(&self, rng: &mut impl Rng) -> u32 {
        let u: f64 = rng.random_range(0.0..1.0);
        let i = self.fg_cdf.partition_point(|&c| c <= u);
        self.fg_indices[i.min(self.fg_indices.len() - 1)]
    }

    pub fn draw_background(&self, rng: &mut impl Rng) -> u32 {
        self.bg_indices[rng.random_range(0..self.bg_indices.len())]
    }
}

/// Builds the sampling density for one view. Foreground pixels carry weight
/// `lambda_f + lambda_s * saliency`, normalized over the foreground; the
/// background is uniform.
pub fn build_ray_pdf(
    view: &TrainingView,
    lambda_f: f64,
    lambda_s: f64,
    fg_threshold: f32,
) -> Result<RayPdf> {
    if lambda_f < 0.0 || lambda_s < 0.0 || (lambda_f == 0.0 && lambda_s == 0.0) {
        return Err(Error::invalid(
            "sampling weights must be nonnegative and not both zero",
        ));
    }
    let n = view.image.width * view.image.height;
    let mut fg_indices = Vec::new();
    let mut weights = Vec::new();
    let mut bg_indices = Vec::new();
    for p in 0..n {
        let alpha = view.image.data[p * 4 + 3];
        if alpha > fg_threshold {
            fg_indices.push(p as u32);
            weights.push(lambda_f + lambda_s * view.saliency.data[p] as f64);
        } else {
            bg_indices.push(p as u32);
        }
    }
    let no_foreground = fg_indices.is_empty();
    let total: f64 = weights.iter().sum();
    let fg_probs: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        // All weights zero (lambda_f = 0 over a zero-saliency foreground):
        // fall back to uniform over the foreground.
        vec![1.0 / fg_indices.len().max(1) as f64; fg_indices.len()]
    };
    let mut fg_cdf = Vec::with_capacity(fg_probs.len());
    let mut acc = 0.0;
    for p in &fg_probs {
        acc += p;
        fg_cdf.push(acc);
    }
    Ok(RayPdf {
        fg_indices,
        fg_probs,
        fg_cdf,
        bg_indices,
        fg_fraction: FOREGROUND_FRACTION,
        lambda_f,
        lambda_s,
        no_foreground,
    })
}

/// One sampled batch: rays plus the pixel coordinates and view indices they
/// came from.
#[derive(Clone, Debug)]
pub struct SampledBatch {
    pub rays: Vec<PluckerRay>,
    pub pixels: Vec<(u32, u32)>,
    pub view_ids: Vec<u32>,
    /// How many leading entries were foreground draws.
    pub foreground_draws: usize,
    /// Draws that had to switch sides because a view class was empty.
    pub redirected: usize,
}

/// Draws `batch_size` rays with replacement: `round(0.67 * batch_size)` from
/// the foreground densities, the remainder uniformly from the background.
/// Views are chosen uniformly among those that have pixels of the requested
/// class; if a class is empty everywhere the draw is redirected (and counted).
pub fn sample_batch(
    views: &[TrainingView],
    pdfs: &[RayPdf],
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<SampledBatch> {
    if views.is_empty() || views.len() != pdfs.len() {
        return Err(Error::invalid(
            "need a nonempty view set with one pdf per view",
        ));
    }
    if batch_size < 1 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let fg_views: Vec<usize> = (0..pdfs.len())
        .filter(|&i| pdfs[i].foreground_count() > 0)
        .collect();
    let bg_views: Vec<usize> = (0..pdfs.len())
        .filter(|&i| pdfs[i].background_count() > 0)
        .collect();
    if fg_views.is_empty() && bg_views.is_empty() {
        return Err(Error::invalid("views contain no pixels to sample"));
    }

    let n_fg = (pdfs[0].fg_fraction * batch_size as f64).round() as usize;
    let n_fg = n_fg.min(batch_size);
    let mut out = SampledBatch {
        rays: Vec::with_capacity(batch_size),
        pixels: Vec::with_capacity(batch_size),
        view_ids: Vec::with_capacity(batch_size),
        foreground_draws: 0,
        redirected: 0,
    };
    for k in 0..batch_size {
        let want_fg = k < n_fg;
        let (from_fg, pool) = match (want_fg, fg_views.is_empty(), bg_views.is_empty()) {
            (true, false, _) => (true, &fg_views),
            (true, true, false) => (false, &bg_views), // redirected to background
            (false, _, false) => (false, &bg_views),
            (false, false, true) => (true, &fg_views), // redirected to foreground
            _ => unreachable!("both pools empty was rejected above"),
        };
        if from_fg != want_fg {
            out.redirected += 1;
        }
        let vid = pool[rng.random_range(0..pool.len())];
        let pix = if from_fg {
            out.foreground_draws += 1;
            pdfs[vid].draw_foreground(rng)
        } else {
            pdfs[vid].draw_background(rng)
        };
        let view = &views[vid];
        let (x, y) = (
            pix as usize % view.image.width,
            pix as usize / view.image.width,
        );
        out.rays.push(ray_for_pixel(
            &view.camera,
            Vector2::new(x as f64 + 0.5, y as f64 + 0.5),
        ));
        out.pixels.push((x as u32, y as u32));
        out.view_ids.push(vid as u32);
    }
    Ok(out)
}

/// SAT-filtered target colors for sampled pixels at the given scale. At
/// scale 1 this returns the raw pixel colors exactly.
pub fn target_colors(
    view: &TrainingView,
    pixels: &[(u32, u32)],
    scale: f64,
) -> Result<Vec<[f32; 4]>> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::invalid(format!(
            "scale must lie in (0, 1], got {scale}"
        )));
    }
    let mut out = Vec::with_capacity(pixels.len());
    let mut buf = [0.0f64; 4];
    for &(x, y) in pixels {
        if scale == 1.0 {
            let px = view.image.pixel(x as usize, y as usize);
            out.push([px[0], px[1], px[2], px[3]]);
        } else {
            view.sat
                .filtered_sample_into((x as f64 + 0.5, y as f64 + 0.5), scale, &mut buf)?;
            out.push([buf[0] as f32, buf[1] as f32, buf[2] as f32, buf[3] as f32]);
        }
    }
    Ok(out)
}
