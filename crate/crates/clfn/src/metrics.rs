//! Image quality and temporal stability metrics: PSNR, SSIM, and a
//! reference-based flicker measure.
//!
//! Flicker looks at how the error against a reference *changes* between
//! consecutive frames: per pair, the difference-of-differences image is
//! Fourier transformed and its magnitudes are summed into a low and a high
//! radial-frequency band; the flicker value is the sum of both bands, so a
//! static error field registers as zero.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::raster::Image;

/// Default boundary between the low and high radial bands, as a fraction of
/// the Nyquist frequency.
pub const DEFAULT_RADIAL_SPLIT: f64 = 0.25;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB over all channels; identical images
/// return the infinity sentinel.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid("psnr inputs must share shape"));
    }
    let mut mse = 0.0f64;
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        let d = (*x - *y) as f64;
        mse += d * d;
    }
    mse /= a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable Gaussian filter, valid region only: output is
/// `(w - 10) x (h - 10)`.
fn gaussian_filter_valid(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0f64; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mu_a = gaussian_filter_valid(a, w, h);
    let mu_b = gaussian_filter_valid(b, w, h);
    let sq_a: Vec<f64> = a.iter().map(|v| v * v).collect();
    let sq_b: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
    let e_sq_a = gaussian_filter_valid(&sq_a, w, h);
    let e_sq_b = gaussian_filter_valid(&sq_b, w, h);
    let e_ab = gaussian_filter_valid(&ab, w, h);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let var_a = e_sq_a[i] - mu_a[i] * mu_a[i];
        let var_b = e_sq_b[i] - mu_b[i] * mu_b[i];
        let cov = e_ab[i] - mu_a[i] * mu_b[i];
        let num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        let den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    total / mu_a.len() as f64
}

/// Mean local structural similarity with an 11x11 Gaussian window
/// (sigma 1.5) and the standard stabilization constants at unit peak.
/// Multi-channel images average the per-channel scores.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid("ssim inputs must share shape"));
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for ssim"
        )));
    }
    let (w, h, c) = (a.width, a.height, a.channels);
    let mut score = 0.0;
    let mut plane_a = vec![0.0f64; w * h];
    let mut plane_b = vec![0.0f64; w * h];
    for ch in 0..c {
        for i in 0..w * h {
            plane_a[i] = a.data[i * c + ch] as f64;
            plane_b[i] = b.data[i * c + ch] as f64;
        }
        score += ssim_plane(&plane_a, &plane_b, w, h);
    }
    Ok(score / c as f64)
}

/// Low- and high-band magnitude sums of the 2D DFT of `plane`, split at
/// `radial_split` times the Nyquist frequency. Unnormalized forward DFT.
fn spectrum_bands(plane: &[f64], w: usize, h: usize, radial_split: f64) -> (f64, f64) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut grid: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in grid.chunks_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    let mut low = 0.0;
    let mut high = 0.0;
    let threshold = radial_split * 0.5;
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        col_fft.process(&mut col);
        let fx = {
            let u = x.min(w - x);
            u as f64 / w as f64
        };
        for (y, v) in col.iter().enumerate() {
            let fy = {
                let u = y.min(h - y);
                u as f64 / h as f64
            };
            let radius = (fx * fx + fy * fy).sqrt();
            if radius < threshold {
                low += v.norm();
            } else {
                high += v.norm();
            }
        }
    }
    (low, high)
}

/// Per-transition `(s_low, s_high)` band sums; [`flicker`] adds the pair.
pub fn flicker_bands(
    processed: &[Image],
    reference: &[Image],
    radial_split: f64,
) -> Result<Vec<(f64, f64)>> {
    if processed.len() != reference.len() {
        return Err(Error::invalid(
            "processed and reference sequences must have equal length",
        ));
    }
    if processed.len() < 2 {
        return Err(Error::invalid("flicker needs at least two frames"));
    }
    if !(0.0..=1.0).contains(&radial_split) {
        return Err(Error::invalid("radial split must lie in [0, 1]"));
    }
    let (w, h) = (processed[0].width, processed[0].height);
    let mut diffs: Vec<Vec<f64>> = Vec::with_capacity(processed.len());
    for (p, r) in processed.iter().zip(reference.iter()) {
        if p.width != w || p.height != h || r.width != w || r.height != h {
            return Err(Error::invalid("all frames must share dimensions"));
        }
        let pl = p.luminance();
        let rl = r.luminance();
        diffs.push(
            pl.data
                .iter()
                .zip(rl.data.iter())
                .map(|(a, b)| (*a - *b) as f64)
                .collect(),
        );
    }
    let mut out = Vec::with_capacity(diffs.len() - 1);
    for n in 1..diffs.len() {
        let c: Vec<f64> = diffs[n]
            .iter()
            .zip(diffs[n - 1].iter())
            .map(|(a, b)| a - b)
            .collect();
        out.push(spectrum_bands(&c, w, h, radial_split));
    }
    Ok(out)
}

/// Per-transition flicker values (one per consecutive frame pair).
pub fn flicker(processed: &[Image], reference: &[Image], radial_split: f64) -> Result<Vec<f64>> {
    Ok(flicker_bands(processed, reference, radial_split)?
        .into_iter()
        .map(|(lo, hi)| lo + hi)
        .collect())
}
