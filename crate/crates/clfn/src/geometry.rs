//! Cameras, rays, and the Plücker parameterization fed to the network.
//!
//! Conventions: right-handed world coordinates; the camera looks down its
//! local −z axis with +x right and +y up; image x grows right, image y grows
//! down; pixel centers sit at integer + 0.5 (callers apply the offset).

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Pinhole camera with a world-from-camera rotation.
#[derive(Clone, Debug)]
pub struct Camera {
    /// Optical center in world units.
    pub position: Vector3<f64>,
    /// World-from-camera rotation; columns are the camera axes in world space.
    pub orientation: Matrix3<f64>,
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point in pixels.
    pub principal_point: Vector2<f64>,
    /// Sensor size in pixels (width, height).
    pub resolution: (u32, u32),
}

impl Camera {
    pub fn new(
        position: Vector3<f64>,
        orientation: Matrix3<f64>,
        focal: f64,
        principal_point: Vector2<f64>,
        resolution: (u32, u32),
    ) -> Result<Self> {
        let cam = Camera {
            position,
            orientation,
            focal,
            principal_point,
            resolution,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let rtr = self.orientation.transpose() * self.orientation;
        let dev = (rtr - Matrix3::identity()).abs().max();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "camera rotation is not orthonormal (max deviation {dev:.2e})"
            )));
        }
        let det = self.orientation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "camera rotation must have determinant +1, got {det}"
            )));
        }
        if !(self.focal > 0.0) {
            return Err(Error::invalid(format!(
                "focal length must be positive, got {}",
                self.focal
            )));
        }
        if self.resolution.0 < 1 || self.resolution.1 < 1 {
            return Err(Error::invalid("camera resolution components must be >= 1"));
        }
        Ok(())
    }

    /// Camera at `position` aimed so that `target` sits on the −z axis.
    pub fn look_at(
        position: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        resolution: (u32, u32),
    ) -> Result<Self> {
        let forward = (target - position)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("look_at target coincides with camera position"))?;
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            // Degenerate up direction; pick any axis not parallel to forward.
            let alt = if forward.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let z_axis = -forward;
        let y_axis = z_axis.cross(&right);
        let orientation = Matrix3::from_columns(&[right, y_axis, z_axis]);
        let principal = Vector2::new(resolution.0 as f64 / 2.0, resolution.1 as f64 / 2.0);
        Camera::new(position, orientation, focal, principal, resolution)
    }

    /// Rescales the intrinsics so the same field of view maps onto a new
    /// pixel grid. Used to render at reduced output resolutions.
    pub fn scaled_to(&self, resolution: (u32, u32)) -> Camera {
        let sx = resolution.0 as f64 / self.resolution.0 as f64;
        let sy = resolution.1 as f64 / self.resolution.1 as f64;
        Camera {
            position: self.position,
            orientation: self.orientation,
            // Square-pixel model: use the x scale for focal, which matches
            // aspect-preserving resizes (the only kind the pipeline emits).
            focal: self.focal * sx,
            principal_point: Vector2::new(
                self.principal_point.x * sx,
                self.principal_point.y * sy,
            ),
            resolution,
        }
    }
}

/// A ray in Plücker coordinates: unit direction plus moment `origin × direction`.
///
/// The moment is invariant to sliding the origin along the ray, which is why
/// the pair is a well-defined network input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PluckerRay {
    pub direction: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl PluckerRay {
    /// The six network input components: direction then moment.
    pub fn components(&self) -> [f64; 6] {
        [
            self.direction.x,
            self.direction.y,
            self.direction.z,
            self.moment.x,
            self.moment.y,
            self.moment.z,
        ]
    }
}

/// Builds the Plücker coordinates of the ray through `origin` along
/// `direction`. The direction is normalized before the moment is formed, so
/// any positive rescaling of `direction` yields the same ray.
pub fn plucker(origin: Vector3<f64>, direction: Vector3<f64>) -> Result<PluckerRay> {
    let dir = direction
        .try_normalize(1e-12)
        .ok_or_else(|| Error::invalid("ray direction must have nonzero length"))?;
    Ok(PluckerRay {
        direction: dir,
        moment: origin.cross(&dir),
    })
}

/// Ray through continuous pixel coordinates `px` (origin at the camera
/// center). Callers pass pixel centers as integer + 0.5.
pub fn ray_for_pixel(camera: &Camera, px: Vector2<f64>) -> PluckerRay {
    let x = (px.x - camera.principal_point.x) / camera.focal;
    // Image y grows down while camera y grows up.
    let y = (camera.principal_point.y - px.y) / camera.focal;
    let dir_cam = Vector3::new(x, y, -1.0);
    let dir_world = (camera.orientation * dir_cam).normalize();
    PluckerRay {
        direction: dir_world,
        moment: camera.position.cross(&dir_world),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_camera() -> Camera {
        Camera::new(
            Vector3::zeros(),
            Matrix3::identity(),
            64.0,
            Vector2::new(32.0, 32.0),
            (64, 64),
        )
        .unwrap()
    }

    #[test]
    fn principal_point_ray_looks_down_minus_z() {
        let cam = test_camera();
        let ray = ray_for_pixel(&cam, Vector2::new(32.0, 32.0));
        assert_relative_eq!(ray.direction, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        assert_relative_eq!(ray.moment, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn plucker_analytic_cross_product() {
        let r = plucker(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(r.direction, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(r.moment, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);

        let r = plucker(Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(r.direction, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(r.moment, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn zero_origin_gives_zero_moment() {
        let r = plucker(Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(r.direction, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(r.moment, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn sliding_origin_along_ray_is_invariant() {
        let d = Vector3::new(0.0, 1.0, 0.0);
        let o = Vector3::new(1.0, 0.0, 0.0);
        let a = plucker(o, d).unwrap();
        let b = plucker(o + 7.3 * d, d).unwrap();
        assert_relative_eq!(a.direction, b.direction, epsilon = 1e-6);
        assert_relative_eq!(a.moment, b.moment, epsilon = 1e-6);
    }

    #[test]
    fn zero_direction_is_rejected() {
        assert!(plucker(Vector3::zeros(), Vector3::zeros()).is_err());
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.5;
        assert!(Camera::new(
            Vector3::zeros(),
            m,
            64.0,
            Vector2::new(32.0, 32.0),
            (64, 64)
        )
        .is_err());
    }

    #[test]
    fn reflection_rotation_is_rejected() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Camera::new(
            Vector3::zeros(),
            m,
            64.0,
            Vector2::new(32.0, 32.0),
            (64, 64)
        )
        .is_err());
    }

    #[test]
    fn look_at_points_forward_axis_through_target() {
        let target = Vector3::new(0.5, -0.25, 2.0);
        let cam = Camera::look_at(
            Vector3::new(3.0, 1.0, -4.0),
            target,
            Vector3::y(),
            64.0,
            (64, 64),
        )
        .unwrap();
        cam.validate().unwrap();
        let forward = -cam.orientation.column(2);
        let to_target = (target - cam.position).normalize();
        assert_relative_eq!(Vector3::from(forward), to_target, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn moment_is_orthogonal_to_direction(
            ox in -10.0f64..10.0, oy in -10.0f64..10.0, oz in -10.0f64..10.0,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0,
        ) {
            prop_assume!(dx * dx + dy * dy + dz * dz > 1e-6);
            let r = plucker(Vector3::new(ox, oy, oz), Vector3::new(dx, dy, dz)).unwrap();
            prop_assert!((r.direction.norm() - 1.0).abs() < 1e-6);
            prop_assert!(r.moment.dot(&r.direction).abs() < 1e-6);
        }

        #[test]
        fn origin_slide_and_direction_scale_invariance(
            ox in -10.0f64..10.0, oy in -10.0f64..10.0, oz in -10.0f64..10.0,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0,
            t in -20.0f64..20.0, k in 0.01f64..50.0,
        ) {
            prop_assume!(dx * dx + dy * dy + dz * dz > 1e-6);
            let o = Vector3::new(ox, oy, oz);
            let d = Vector3::new(dx, dy, dz);
            let a = plucker(o, d).unwrap();
            let b = plucker(o + t * d, d * k).unwrap();
            prop_assert!((a.direction - b.direction).norm() < 1e-6 * (1.0 + t.abs()));
            prop_assert!((a.moment - b.moment).norm() < 1e-6 * (1.0 + t.abs() + o.norm()));
        }

        #[test]
        fn ray_for_pixel_is_continuous(
            px in 0.0f64..64.0, py in 0.0f64..64.0,
            eps in 1e-6f64..1e-3,
        ) {
            let cam = test_camera();
            let a = ray_for_pixel(&cam, Vector2::new(px, py));
            let b = ray_for_pixel(&cam, Vector2::new(px + eps, py - eps));
            // Lipschitz bound: direction changes at most ~|dpx|/focal, moment
            // scales with the camera offset (zero here).
            prop_assert!((a.direction - b.direction).norm() < 4.0 * eps / cam.focal + 1e-12);
            prop_assert!((a.moment - b.moment).norm() < 1e-12);
        }
    }
}
