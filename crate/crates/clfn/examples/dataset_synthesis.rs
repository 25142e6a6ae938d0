//! Generates a small synthetic light-field dataset on disk.
//!
//! ```bash
//! cargo run -p clfn --example dataset_synthesis -- [OUT_DIR]
//! ```

use nalgebra::Vector3;

use clfn::dataset::write_synthetic_dataset;
use clfn::synth::{generate_rig, SceneSpec};

fn main() -> clfn::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "clfn_dataset".to_string());
    let out = std::path::PathBuf::from(out);

    let scene = SceneSpec::demo();
    println!(
        "scene: {} spheres, {} marked salient",
        scene.spheres.len(),
        scene.salient.len()
    );

    // A 12 x 2 ring of cameras looking at the origin, 96x96 pixels each.
    let resolution = (96, 96);
    let rig = generate_rig(12, 2, 3.0, Vector3::zeros(), resolution, 45.0)?;
    write_synthetic_dataset(&out, &scene, &rig, resolution)?;

    println!(
        "wrote {} views ({}x{}) to {}",
        rig.len(),
        resolution.0,
        resolution.1,
        out.display()
    );
    println!("layout: cameras.json, images/, saliency/, split.json");
    Ok(())
}
