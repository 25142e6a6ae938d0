//! On-disk dataset layout.
//!
//! ```text
//! dataset/
//!   cameras.json    array of {position, rotation (row-major 9 floats),
//!                   focal, principal_point, resolution}
//!   images/         view_0000.png ... (RGBA, alpha is the matte)
//!   saliency/       view_0000.png ... (grayscale; optional)
//!   split.json      {"train": [...], "val": [...], "test": [...]}
//! ```
//!
//! A missing saliency file falls back to an all-zero map with a warning, so
//! datasets without saliency still train (as plain uniform-foreground
//! sampling).

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::raster::Image;
use crate::sampler::TrainingView;
use crate::synth::{render_ground_truth, SceneSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRecord {
    pub position: [f64; 3],
    /// Row-major world-from-camera rotation.
    pub rotation: [f64; 9],
    pub focal: f64,
    pub principal_point: [f64; 2],
    pub resolution: [u32; 2],
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera) -> CameraRecord {
        let r = &cam.orientation;
        CameraRecord {
            position: [cam.position.x, cam.position.y, cam.position.z],
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            focal: cam.focal,
            principal_point: [cam.principal_point.x, cam.principal_point.y],
            resolution: [cam.resolution.0, cam.resolution.1],
        }
    }

    pub fn to_camera(&self) -> Result<Camera> {
        let r = self.rotation;
        Camera::new(
            Vector3::new(self.position[0], self.position[1], self.position[2]),
            Matrix3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]),
            self.focal,
            Vector2::new(self.principal_point[0], self.principal_point[1]),
            (self.resolution[0], self.resolution[1]),
        )
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic split mirroring a 90/5/5 proportion: every 20th view (offset
/// 0) validates, every 20th (offset 10) tests, the rest train. Small sets
/// keep at least one view in train.
pub fn make_split(n: usize) -> Split {
    let mut split = Split::default();
    for i in 0..n {
        if n >= 20 && i % 20 == 0 {
            split.val.push(i);
        } else if n >= 20 && i % 20 == 10 {
            split.test.push(i);
        } else if n < 20 && n > 2 && i == n - 1 {
            split.test.push(i);
        } else if n < 20 && n > 2 && i == n - 2 {
            split.val.push(i);
        } else {
            split.train.push(i);
        }
    }
    split
}

#[derive(Debug)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub saliency: Vec<Image>,
    pub split: Split,
}

impl Dataset {
    /// Training views for a chosen split selection.
    pub fn views_for(&self, indices: &[usize]) -> Result<Vec<TrainingView>> {
        indices
            .iter()
            .map(|&i| {
                if i >= self.images.len() {
                    return Err(Error::invalid(format!("split index {i} out of range")));
                }
                TrainingView::new(
                    self.images[i].clone(),
                    self.saliency[i].clone(),
                    self.cameras[i].clone(),
                )
            })
            .collect()
    }

    pub fn training_views(&self) -> Result<Vec<TrainingView>> {
        self.views_for(&self.split.train)
    }
}

fn view_name(i: usize) -> String {
    format!("view_{i:04}.png")
}

/// Renders a scene through a camera rig and writes the full dataset layout.
pub fn write_synthetic_dataset(
    dir: &Path,
    scene: &SceneSpec,
    cameras: &[Camera],
    resolution: (u32, u32),
) -> Result<()> {
    if cameras.is_empty() {
        return Err(Error::invalid("dataset needs at least one camera"));
    }
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("saliency"))?;

    let rendered: Vec<(Image, Image)> = cameras
        .par_iter()
        .map(|cam| render_ground_truth(scene, cam, resolution))
        .collect::<Result<_>>()?;
    for (i, (img, sal)) in rendered.iter().enumerate() {
        img.save_png(&dir.join("images").join(view_name(i)))?;
        sal.save_png(&dir.join("saliency").join(view_name(i)))?;
    }

    let records: Vec<CameraRecord> = cameras
        .iter()
        .map(|c| CameraRecord::from_camera(&c.scaled_to(resolution)))
        .collect();
    fs::write(
        dir.join("cameras.json"),
        serde_json::to_string_pretty(&records)?,
    )?;
    fs::write(
        dir.join("split.json"),
        serde_json::to_string_pretty(&make_split(cameras.len()))?,
    )?;
    Ok(())
}

/// Loads a dataset directory written by [`write_synthetic_dataset`] (or by
/// hand, following the same layout).
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let cameras_json = fs::read_to_string(dir.join("cameras.json"))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&cameras_json)?;
    let cameras: Vec<Camera> = records.iter().map(CameraRecord::to_camera).collect::<Result<_>>()?;

    let mut images = Vec::with_capacity(cameras.len());
    let mut saliency = Vec::with_capacity(cameras.len());
    for (i, cam) in cameras.iter().enumerate() {
        let img = Image::load_png(&dir.join("images").join(view_name(i)))?;
        if img.channels != 4 {
            return Err(Error::invalid(format!(
                "image {i} must be RGBA (got {} channels)",
                img.channels
            )));
        }
        let sal_path = dir.join("saliency").join(view_name(i));
        let sal = if sal_path.exists() {
            let s = Image::load_png(&sal_path)?;
            if s.channels == 1 {
                s
            } else {
                s.luminance()
            }
        } else {
            eprintln!(
                "warning: no saliency map for view {i}; using zero saliency"
            );
            Image::new(img.width, img.height, 1)
        };
        if (cam.resolution.0 as usize, cam.resolution.1 as usize) != (img.width, img.height) {
            return Err(Error::invalid(format!(
                "camera {i} resolution does not match its image"
            )));
        }
        images.push(img);
        saliency.push(sal);
    }

    let split_path = dir.join("split.json");
    let split = if split_path.exists() {
        serde_json::from_str(&fs::read_to_string(split_path)?)?
    } else {
        make_split(cameras.len())
    };
    Ok(Dataset {
        cameras,
        images,
        saliency,
        split,
    })
}
