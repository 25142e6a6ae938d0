//! Procedural light-field dataset generation.
//!
//! Analytic sphere scenes stand in for multi-camera captures: a ring rig of
//! pinhole cameras orbits the scene, each view is ray-traced with Lambert
//! shading and a hard alpha matte, and saliency maps are Gaussian splats over
//! the designated salient spheres.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ray_for_pixel, Camera};
use crate::raster::Image;

/// Elevation band (degrees) the rig spans around the equator.
const ELEVATION_BAND_DEG: (f64, f64) = (-10.0, 50.0);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub albedo: [f32; 3],
    /// Emissive spheres output their albedo unshaded.
    pub emissive: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectionalLight {
    /// Direction the light travels (toward the scene).
    pub direction: [f64; 3],
    /// Ambient floor added to the Lambert term.
    pub ambient: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub spheres: Vec<Sphere>,
    pub light: DirectionalLight,
    /// Indices into `spheres` that receive saliency splats.
    pub salient: Vec<usize>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::invalid(format!("sphere {i} has nonpositive radius")));
            }
            if s.albedo.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(format!(
                    "sphere {i} albedo must lie in [0, 1]"
                )));
            }
        }
        if let Some(&bad) = self.salient.iter().find(|&&id| id >= self.spheres.len()) {
            return Err(Error::invalid(format!(
                "salient sphere id {bad} out of range"
            )));
        }
        Ok(())
    }

    /// The default demo scene: a large matte body, a small bright head-like
    /// sphere marked salient, and an emissive accent sphere.
    pub fn demo() -> SceneSpec {
        SceneSpec {
            spheres: vec![
                Sphere {
                    center: [0.0, -0.15, 0.0],
                    radius: 0.55,
                    albedo: [0.2, 0.45, 0.8],
                    emissive: false,
                },
                Sphere {
                    center: [0.0, 0.55, 0.0],
                    radius: 0.3,
                    albedo: [0.9, 0.65, 0.3],
                    emissive: false,
                },
                Sphere {
                    center: [0.45, -0.5, 0.3],
                    radius: 0.22,
                    albedo: [0.85, 0.2, 0.25],
                    emissive: true,
                },
            ],
            light: DirectionalLight {
                direction: [-0.4, -0.8, -0.45],
                ambient: 0.15,
            },
            salient: vec![1],
        }
    }
}

/// Cameras on a sphere section of the given radius around `look_at`, laid
/// out as `count_azimuth` columns over the full circle by `count_elevation`
/// rows in a fixed elevation band. Every camera aims at `look_at`.
pub fn generate_rig(
    count_azimuth: usize,
    count_elevation: usize,
    radius: f64,
    look_at: Vector3<f64>,
    resolution: (u32, u32),
    fov_y_deg: f64,
) -> Result<Vec<Camera>> {
    if count_azimuth < 1 || count_elevation < 1 {
        return Err(Error::invalid("rig counts must be >= 1"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("rig radius must be positive"));
    }
    let focal = resolution.1 as f64 / 2.0 / (fov_y_deg.to_radians() / 2.0).tan();
    let (el_lo, el_hi) = ELEVATION_BAND_DEG;
    let mut cameras = Vec::with_capacity(count_azimuth * count_elevation);
    for e in 0..count_elevation {
        let t = if count_elevation == 1 {
            0.5
        } else {
            e as f64 / (count_elevation - 1) as f64
        };
        let elevation = (el_lo + t * (el_hi - el_lo)).to_radians();
        for a in 0..count_azimuth {
            let azimuth = std::f64::consts::TAU * a as f64 / count_azimuth as f64;
            let position = look_at
                + radius
                    * Vector3::new(
                        elevation.cos() * azimuth.cos(),
                        elevation.sin(),
                        elevation.cos() * azimuth.sin(),
                    );
            cameras.push(Camera::look_at(
                position,
                look_at,
                Vector3::y(),
                focal,
                resolution,
            )?);
        }
    }
    Ok(cameras)
}

fn intersect_sphere(origin: &Vector3<f64>, dir: &Vector3<f64>, sphere: &Sphere) -> Option<f64> {
    let center = Vector3::from(sphere.center);
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - sphere.radius * sphere.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    let t = -b - sqrt_disc;
    if t > 1e-6 {
        Some(t)
    } else {
        let t2 = -b + sqrt_disc;
        (t2 > 1e-6).then_some(t2)
    }
}

/// Ray-traces one view. Returns the RGBA image (alpha 1 on hits, 0 on the
/// transparent background) and the grayscale saliency map (peak-normalized
/// Gaussian splats over salient sphere projections, zero elsewhere).
pub fn render_ground_truth(
    scene: &SceneSpec,
    camera: &Camera,
    resolution: (u32, u32),
) -> Result<(Image, Image)> {
    scene.validate()?;
    if resolution.0 < 8 || resolution.1 < 8 {
        return Err(Error::invalid("ground-truth resolution must be >= 8x8"));
    }
    let cam = camera.scaled_to(resolution);
    let (w, h) = (resolution.0 as usize, resolution.1 as usize);
    let light_dir = -Vector3::from(scene.light.direction).normalize();
    let ambient = scene.light.ambient.clamp(0.0, 1.0);

    let mut image = Image::new(w, h, 4);
    image
        .data
        .par_chunks_mut(w * 4)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let ray = ray_for_pixel(&cam, Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
                let mut best: Option<(f64, usize)> = None;
                for (i, sphere) in scene.spheres.iter().enumerate() {
                    if let Some(t) = intersect_sphere(&cam.position, &ray.direction, sphere) {
                        if best.map_or(true, |(bt, _)| t < bt) {
                            best = Some((t, i));
                        }
                    }
                }
                let px = &mut row[x * 4..x * 4 + 4];
                match best {
                    Some((t, i)) => {
                        let sphere = &scene.spheres[i];
                        if sphere.emissive {
                            px[0] = sphere.albedo[0];
                            px[1] = sphere.albedo[1];
                            px[2] = sphere.albedo[2];
                        } else {
                            let hit = cam.position + t * ray.direction;
                            let normal = (hit - Vector3::from(sphere.center)).normalize();
                            let lambert = normal.dot(&light_dir).max(0.0);
                            let shade = (ambient + (1.0 - ambient) * lambert) as f32;
                            px[0] = sphere.albedo[0] * shade;
                            px[1] = sphere.albedo[1] * shade;
                            px[2] = sphere.albedo[2] * shade;
                        }
                        px[3] = 1.0;
                    }
                    None => {
                        px.fill(0.0);
                    }
                }
            }
        });

    // Saliency: one Gaussian splat per salient sphere, sigma tied to the
    // projected radius, truncated at three sigma and peak-normalized.
    let mut saliency = Image::new(w, h, 1);
    let mut splats: Vec<(f64, f64, f64)> = Vec::new(); // (cx, cy, sigma)
    for &id in &scene.salient {
        let sphere = &scene.spheres[id];
        let center_world = Vector3::from(sphere.center);
        let rel = cam.orientation.transpose() * (center_world - cam.position);
        if rel.z >= -1e-6 {
            continue; // behind the camera
        }
        let depth = -rel.z;
        let cx = cam.principal_point.x + cam.focal * rel.x / depth;
        let cy = cam.principal_point.y - cam.focal * rel.y / depth;
        let projected_radius = cam.focal * sphere.radius / depth;
        splats.push((cx, cy, (projected_radius / 2.0).max(0.5)));
    }
    if !splats.is_empty() {
        for y in 0..h {
            for x in 0..w {
                let mut best = 0.0f64;
                for &(cx, cy, sigma) in &splats {
                    let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                    if d2 <= (3.0 * sigma).powi(2) {
                        best = best.max((-d2 / (2.0 * sigma * sigma)).exp());
                    }
                }
                saliency.pixel_mut(x, y)[0] = best as f32;
            }
        }
        let peak = saliency.data.iter().cloned().fold(0.0f32, f32::max);
        if peak > 0.0 {
            for v in saliency.data.iter_mut() {
                *v /= peak;
            }
        }
    }
    Ok((image, saliency))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rig_counts_multiply_and_lie_on_the_sphere() {
        let look_at = Vector3::new(0.1, -0.2, 0.3);
        let rig = generate_rig(40, 6, 3.0, look_at, (64, 64), 45.0).unwrap();
        assert_eq!(rig.len(), 240);
        for cam in &rig {
            assert!(((cam.position - look_at).norm() - 3.0).abs() < 1e-6);
            cam.validate().unwrap();
        }
    }

    #[test]
    fn single_camera_rig_aims_at_target() {
        let look_at = Vector3::new(0.0, 0.5, 0.0);
        let rig = generate_rig(1, 1, 2.0, look_at, (32, 32), 50.0).unwrap();
        assert_eq!(rig.len(), 1);
        let cam = &rig[0];
        let forward = -cam.orientation.column(2);
        let to_target = (look_at - cam.position).normalize();
        assert!((Vector3::from(forward) - to_target).norm() < 1e-6);
    }

    #[test]
    fn degenerate_rig_is_rejected() {
        assert!(generate_rig(0, 1, 2.0, Vector3::zeros(), (32, 32), 45.0).is_err());
        assert!(generate_rig(4, 1, 0.0, Vector3::zeros(), (32, 32), 45.0).is_err());
    }

    #[test]
    fn empty_scene_renders_transparent_and_unsalient() {
        let scene = SceneSpec {
            spheres: vec![],
            light: DirectionalLight {
                direction: [0.0, -1.0, 0.0],
                ambient: 0.1,
            },
            salient: vec![],
        };
        let cam = generate_rig(1, 1, 2.0, Vector3::zeros(), (16, 16), 45.0).unwrap()[0].clone();
        let (img, sal) = render_ground_truth(&scene, &cam, (16, 16)).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
        assert!(sal.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_sphere_disc_radius_matches_analytic_projection() {
        let scene = SceneSpec {
            spheres: vec![Sphere {
                center: [0.0, 0.0, 0.0],
                radius: 0.5,
                albedo: [1.0, 1.0, 1.0],
                emissive: true,
            }],
            light: DirectionalLight {
                direction: [0.0, -1.0, 0.0],
                ambient: 0.0,
            },
            salient: vec![],
        };
        let res = 128u32;
        let cam = generate_rig(1, 1, 4.0, Vector3::zeros(), (res, res), 30.0).unwrap()[0].clone();
        let (img, _) = render_ground_truth(&scene, &cam, (res, res)).unwrap();
        // Widest alpha row through the disc center.
        let mut max_row_px = 0usize;
        for y in 0..res as usize {
            let count = (0..res as usize)
                .filter(|&x| img.at(x, y, 3) > 0.5)
                .count();
            max_row_px = max_row_px.max(count);
        }
        // The silhouette of a sphere of radius r at distance d has angular
        // radius asin(r/d); project through the focal length.
        let d = 4.0f64;
        let r = 0.5f64;
        let focal = res as f64 / 2.0 / (15.0f64.to_radians()).tan();
        let expected = 2.0 * focal * (r / d).asin().tan();
        assert!(
            (max_row_px as f64 - expected).abs() <= 2.0,
            "disc width {max_row_px}px vs analytic {expected:.2}px"
        );
    }

    #[test]
    fn alpha_matte_is_hard_and_salient_peak_is_one() {
        let scene = SceneSpec::demo();
        let cam = generate_rig(1, 1, 3.0, Vector3::zeros(), (64, 64), 45.0).unwrap()[0].clone();
        let (img, sal) = render_ground_truth(&scene, &cam, (64, 64)).unwrap();
        assert!(img
            .data
            .iter()
            .skip(3)
            .step_by(4)
            .all(|&a| a == 0.0 || a == 1.0));
        let peak = sal.data.iter().cloned().fold(0.0f32, f32::max);
        assert_eq!(peak, 1.0);
        assert!(sal.data.iter().any(|&v| v == 0.0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = SceneSpec::demo();
        let cam = generate_rig(3, 2, 3.0, Vector3::zeros(), (32, 32), 45.0).unwrap()[4].clone();
        let (a, sa) = render_ground_truth(&scene, &cam, (32, 32)).unwrap();
        let (b, sb) = render_ground_truth(&scene, &cam, (32, 32)).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(sa.data, sb.data);
    }
}
