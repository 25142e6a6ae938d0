//! Trains a small continuous-LOD light field network in memory and reports
//! per-LOD quality.
//!
//! ```bash
//! cargo run --release -p clfn --example train_small
//! ```

use nalgebra::Vector3;

use clfn::lod::{lod_for_width, ArchConfig};
use clfn::metrics::psnr;
use clfn::mlp::{render, VariableWidthMlp};
use clfn::sampler::TrainingView;
use clfn::synth::{generate_rig, render_ground_truth, SceneSpec};
use clfn::trainer::{train, TrainConfig};

fn main() -> clfn::Result<()> {
    let arch = ArchConfig {
        input_dim: 6,
        output_dim: 4,
        layers: 4,
        min_width: 12,
        max_width: 48,
    };
    let scene = SceneSpec::demo();
    let resolution = (48, 48);
    let rig = generate_rig(10, 2, 3.0, Vector3::zeros(), resolution, 45.0)?;
    let views: Vec<TrainingView> = rig
        .into_iter()
        .map(|cam| {
            let (img, sal) = render_ground_truth(&scene, &cam, resolution)?;
            TrainingView::new(img, sal, cam)
        })
        .collect::<clfn::Result<_>>()?;

    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 4096,
        seed: 7,
        ..TrainConfig::default()
    };
    let mut model = VariableWidthMlp::<f32>::init(&arch, cfg.seed)?;
    println!(
        "training widths {}..{} on {} views ({} parameters at full width)",
        arch.min_width,
        arch.max_width,
        views.len(),
        model.param_count()
    );
    let log = train(&views, &mut model, &cfg, None)?;
    for epoch in [0, 4, 9, 14, 19] {
        let mean: f64 = {
            let steps: Vec<f64> = log
                .steps
                .iter()
                .filter(|s| s.epoch == epoch)
                .map(|s| s.total)
                .collect();
            steps.iter().sum::<f64>() / steps.len() as f64
        };
        println!("epoch {epoch:2}: mean loss {mean:.5}");
    }

    // Quality at the quarter-width LODs, full-resolution comparison.
    for w in [12usize, 24, 36, 48] {
        let l = lod_for_width(&arch, w)?;
        let mut acc = 0.0;
        for view in &views {
            let img = render(&model, &view.camera, l, resolution)?;
            acc += psnr(&img, &view.image, 1.0)?;
        }
        println!(
            "width {w:2} (lod {l:4.1}): mean train-view PSNR {:.2} dB",
            acc / views.len() as f64
        );
    }
    Ok(())
}
