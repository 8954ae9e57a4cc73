//! Rigid transforms and pinhole camera model.
//!
//! Poses are stored as an explicit rotation matrix plus translation so the
//! orthonormality of the rotation can be checked and restored after long
//! chains of compositions.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A 6D pose in SE(3): maps points from the body frame into the map frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6D {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose6D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6D {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        if pose.orthonormality_error() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (error {:.3e})",
                pose.orthonormality_error()
            )));
        }
        if (rotation.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose("rotation determinant is not 1".into()));
        }
        Ok(pose)
    }

    /// Pose from Z-Y-X Tait-Bryan angles: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        let rotation = Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        );
        Self {
            rotation,
            translation,
        }
    }

    /// Planar pose at height `z` with the given heading.
    pub fn planar(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::from_rpy(0.0, 0.0, yaw, Vector3::new(x, y, z))
    }

    /// Roll, pitch and yaw of the rotation (Z-Y-X convention).
    pub fn roll_pitch_yaw(&self) -> (f64, f64, f64) {
        let r = &self.rotation;
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        (roll, pitch, yaw)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.translation
    }

    /// Body x axis expressed in the map frame.
    pub fn x_axis(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn y_axis(&self) -> Vector3<f64> {
        self.rotation.column(1).into_owned()
    }

    pub fn z_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Heading of the body x axis projected onto the map xy plane.
    pub fn heading(&self) -> f64 {
        let x = self.x_axis();
        x.y.atan2(x.x)
    }

    /// `self * other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose6D) -> Pose6D {
        Pose6D {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose6D {
        let rt = self.rotation.transpose();
        Pose6D {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a map-frame point into the body frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Restores orthonormality with a Gram-Schmidt pass over the columns,
    /// keeping the z axis direction fixed.
    pub fn reorthonormalize(&mut self) {
        let z = self.z_axis().normalize();
        let x = self.x_axis();
        let x = (x - z * z.dot(&x)).normalize();
        let y = z.cross(&x);
        self.rotation = Matrix3::from_columns(&[x, y, z]);
    }

    /// Builds a frame from a z axis (normal) and a heading vector that is
    /// not parallel to it. Returns `None` when the heading is degenerate.
    pub fn from_normal_and_heading(
        normal: &Vector3<f64>,
        heading: &Vector3<f64>,
        translation: Vector3<f64>,
    ) -> Option<Pose6D> {
        let z = normal.try_normalize(1e-12)?;
        let x = (heading - z * z.dot(heading)).try_normalize(1e-9)?;
        let y = z.cross(&x);
        Some(Pose6D {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation,
        })
    }
}

/// Pinhole intrinsics. Pixel centres sit at integer coordinates, `u` grows
/// to the right (column index) and `v` downwards (row index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidParameter(
                "intrinsics need positive focal lengths".into(),
            ));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Square-pixel intrinsics for a `width × height` image with the given
    /// horizontal field of view, principal point at the image centre.
    pub fn from_fov(width: usize, height: usize, hfov: f64) -> Self {
        let fx = (width as f64 / 2.0) / (hfov / 2.0).tan();
        Self {
            fx,
            fy: fx,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point. Returns `(u, v, depth)`; the caller is
    /// responsible for rejecting non-positive depths.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64, f64) {
        let z = p.z;
        (self.fx * p.x / z + self.cx, self.fy * p.y / z + self.cy, z)
    }
}

/// Optical frame of a camera rigidly mounted on the robot: optical axis
/// along the robot's forward axis, tilted down by `pitch_down`, mounted
/// `height` metres above the body origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub height: f64,
    pub pitch_down: f64,
}

impl Default for CameraMount {
    fn default() -> Self {
        Self {
            height: 2.0,
            pitch_down: 0.6,
        }
    }
}

impl CameraMount {
    /// Transform from the optical frame (x right, y down, z forward) to the
    /// robot body frame (x forward, y left, z up).
    pub fn body_from_camera(&self) -> Pose6D {
        let (s, c) = self.pitch_down.sin_cos();
        // optical axes expressed in the body frame before tilting
        let forward = Vector3::new(c, 0.0, -s);
        let right = Vector3::new(0.0, -1.0, 0.0);
        let down = forward.cross(&right);
        Pose6D {
            rotation: Matrix3::from_columns(&[right, down, forward]),
            translation: Vector3::new(0.0, 0.0, self.height),
        }
    }

    /// Camera pose in the map frame for a robot standing at `robot`.
    pub fn camera_pose(&self, robot: &Pose6D) -> Pose6D {
        robot.compose(&self.body_from_camera())
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rpy_round_trip() {
        let p = Pose6D::from_rpy(0.1, -0.2, 2.5, Vector3::new(1.0, 2.0, 3.0));
        let (r, pi, y) = p.roll_pitch_yaw();
        assert_close!(r, 0.1, 1e-12);
        assert_close!(pi, -0.2, 1e-12);
        assert_close!(y, 2.5, 1e-12);
        assert!(Pose6D::new(p.rotation, p.translation).is_ok());
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose6D::from_rpy(0.3, 0.1, -1.0, Vector3::new(-4.0, 2.0, 0.5));
        let id = p.compose(&p.inverse());
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        let q = Vector3::new(0.3, -0.7, 2.0);
        let back = p.inverse_transform_point(&p.transform_point(&q));
        assert!((back - q).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(Pose6D::new(m, Vector3::zeros()).is_err());
        let m = Matrix3::identity() * 1.01;
        assert!(Pose6D::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn mounted_camera_looks_forward_and_down() {
        let mount = CameraMount {
            height: 1.5,
            pitch_down: 0.3,
        };
        let robot = Pose6D::planar(2.0, 0.0, 0.0, 0.0);
        let cam = mount.camera_pose(&robot);
        assert!(Pose6D::new(cam.rotation, cam.translation).is_ok());
        let optical = cam.z_axis();
        assert!(optical.x > 0.9 && optical.z < 0.0);
        // image "down" has a negative world z component
        assert!(cam.y_axis().z < 0.0);
        // image "right" points to the robot's right (−y)
        assert_close!(cam.x_axis().y, -1.0, 1e-12);
        assert_close!(cam.translation.z, 1.5, 1e-12);
    }

    #[test]
    fn projection_of_optical_axis_hits_principal_point() {
        let k = Intrinsics::from_fov(64, 48, 1.2);
        let (u, v, d) = k.project(&Vector3::new(0.0, 0.0, 3.0));
        assert_close!(u, k.cx, 1e-12);
        assert_close!(v, k.cy, 1e-12);
        assert_close!(d, 3.0, 0.0);
    }

    #[test]
    fn wraps_angles() {
        assert_close!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, 1e-12);
        assert_close!(wrap_angle(-0.5), -0.5, 1e-15);
        assert_close!(wrap_angle(7.0), 7.0 - std::f64::consts::TAU, 1e-12);
    }
}
