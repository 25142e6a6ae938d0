//! Renders one view at a sweep of fractional LODs, both at the LOD's own
//! scale and at a fixed full resolution, and writes the PNGs.
//!
//! ```bash
//! cargo run --release -p clfn --example render_lod_sweep -- [OUT_DIR]
//! ```

use nalgebra::Vector3;

use clfn::lod::{ArchConfig, LodSpec};
use clfn::mlp::{render, VariableWidthMlp};
use clfn::sampler::TrainingView;
use clfn::synth::{generate_rig, render_ground_truth, SceneSpec};
use clfn::trainer::{train, TrainConfig};

fn main() -> clfn::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "clfn_renders".to_string());
    let out = std::path::PathBuf::from(out);
    std::fs::create_dir_all(&out)?;

    let arch = ArchConfig {
        input_dim: 6,
        output_dim: 4,
        layers: 4,
        min_width: 12,
        max_width: 48,
    };
    let scene = SceneSpec::demo();
    let resolution = (64, 64);
    let rig = generate_rig(8, 1, 3.0, Vector3::zeros(), resolution, 45.0)?;
    let views: Vec<TrainingView> = rig
        .into_iter()
        .map(|cam| {
            let (img, sal) = render_ground_truth(&scene, &cam, resolution)?;
            TrainingView::new(img, sal, cam)
        })
        .collect::<clfn::Result<_>>()?;
    let cfg = TrainConfig {
        epochs: 12,
        batch_size: 4096,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut model = VariableWidthMlp::<f32>::init(&arch, cfg.seed)?;
    train(&views, &mut model, &cfg, None)?;

    let camera = &views[0].camera;
    views[0].image.save_png(&out.join("ground_truth.png"))?;
    // Fractional steps across the whole range, including mid-bracket blends.
    for lod_index in [1.0, 9.25, 18.5, 27.75, 37.0] {
        let spec = LodSpec::resolve(&arch, lod_index)?;
        // Native scale: the resolution this LOD is meant to drive.
        let native = (
            ((resolution.0 as f64) * spec.scale).round() as u32,
            ((resolution.1 as f64) * spec.scale).round() as u32,
        );
        let img = render(&model, camera, lod_index, native)?;
        img.save_png(&out.join(format!("lod_{lod_index:05.2}_native.png")))?;
        // Same-scale comparison at full resolution.
        let full = render(&model, camera, lod_index, resolution)?;
        full.save_png(&out.join(format!("lod_{lod_index:05.2}_full.png")))?;
        println!(
            "lod {lod_index:5.2}: width {:2}, alpha {:.2}, scale {:.4} -> {}x{} native",
            spec.active_width, spec.alpha, spec.scale, native.0, native.1
        );
    }
    println!("renders written to {}", out.display());
    Ok(())
}
