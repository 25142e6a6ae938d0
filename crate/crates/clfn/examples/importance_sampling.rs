//! Builds a saliency-weighted ray density and shows how batches split
//! between foreground and background.
//!
//! ```bash
//! cargo run -p clfn --example importance_sampling
//! ```

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clfn::geometry::Camera;
use clfn::raster::Image;
use clfn::sampler::{build_ray_pdf, sample_batch, TrainingView};

fn main() -> clfn::Result<()> {
    let n = 32usize;
    // Foreground disc in the middle, salient hotspot in its upper half.
    let image = Image::from_fn(n, n, 4, |x, y| {
        let dx = x as f32 - 16.0;
        let dy = y as f32 - 16.0;
        let inside = (dx * dx + dy * dy).sqrt() < 10.0;
        vec![0.6, 0.4, 0.3, if inside { 1.0 } else { 0.0 }]
    });
    let saliency = Image::from_fn(n, n, 1, |x, y| {
        let dx = x as f32 - 16.0;
        let dy = y as f32 - 11.0;
        vec![(-(dx * dx + dy * dy) / 18.0).exp()]
    });
    let camera = Camera::new(
        Vector3::zeros(),
        Matrix3::identity(),
        32.0,
        Vector2::new(16.0, 16.0),
        (32, 32),
    )?;
    let view = TrainingView::new(image, saliency, camera)?;
    let pdf = build_ray_pdf(&view, 0.4, 0.6, 0.5)?;
    println!(
        "{} foreground pixels, {} background pixels",
        pdf.foreground_count(),
        pdf.background_count()
    );

    // Draw one batch and print where the rays went.
    let views = vec![view];
    let pdfs = vec![pdf];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = sample_batch(&views, &pdfs, 8192, &mut rng)?;
    println!(
        "batch of {}: {} foreground ({}%), {} background",
        batch.rays.len(),
        batch.foreground_draws,
        100 * batch.foreground_draws / batch.rays.len(),
        batch.rays.len() - batch.foreground_draws
    );

    // Hit-count map as ASCII art: salient region draws visibly more rays.
    let mut hits = vec![0u32; n * n];
    for &(x, y) in &batch.pixels {
        hits[(y as usize) * n + (x as usize)] += 1;
    }
    let peak = *hits.iter().max().unwrap() as f32;
    let shades = [' ', '.', ':', '+', '*', '#'];
    println!("\nray density over the view (saliency peak sits above center):");
    for y in (0..n).step_by(2) {
        let row: String = (0..n)
            .map(|x| {
                let v = (hits[y * n + x] as f32 + hits[(y + 1) * n + x] as f32) / (2.0 * peak);
                shades[((v * (shades.len() - 1) as f32).round() as usize).min(shades.len() - 1)]
            })
            .collect();
        println!("  {row}");
    }
    Ok(())
}
