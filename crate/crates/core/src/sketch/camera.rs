use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Points at or closer than this depth (metres) are culled.
pub const Z_NEAR: f64 = 1e-6;

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

fn scaled(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Pinhole projection of a camera-frame point (x right, y up, z forward).
pub fn pinhole<T: Scalar>(p_cam: [T; 3], focal_px: T, principal: [T; 2]) -> Option<[T; 2]> {
    let [x, y, z] = p_cam;
    if z <= T::lit(Z_NEAR) {
        return None;
    }
    Some([principal[0] + focal_px * x / z, principal[1] - focal_px * y / z])
}

/// Look-at pinhole camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub focal_px: f64,
    pub principal_point: [f64; 2],
    pub image_size: (u32, u32),
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::oblique()
    }
}

/// Orthonormal camera axes in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraBasis {
    pub right: V3,
    pub up: V3,
    pub forward: V3,
}

impl CameraModel {
    /// Front-above view of the table.
    pub fn oblique() -> Self {
        Self {
            position: [0.0, -1.8, 1.2],
            look_at: [0.0, 0.0, 0.0],
            up: [0.0, 0.0, 1.0],
            focal_px: 75.0,
            principal_point: [64.0, 64.0],
            image_size: (128, 128),
        }
    }

    pub fn top_down() -> Self {
        Self {
            position: [0.0, 0.0, 3.0],
            look_at: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            focal_px: 180.0,
            principal_point: [64.0, 64.0],
            image_size: (128, 128),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.position.iter().chain(&self.look_at).chain(&self.up).chain(&self.principal_point);
        if !all.into_iter().all(|v| v.is_finite()) || !self.focal_px.is_finite() {
            return Err(Error::Config("camera parameters must be finite".into()));
        }
        if self.focal_px <= 0.0 {
            return Err(Error::Config("focal_px must be positive".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::Config("camera image_size must be positive".into()));
        }
        let axis = sub(self.look_at, self.position);
        if norm(axis) < 1e-12 {
            return Err(Error::Config("camera position equals look_at".into()));
        }
        let c = cross(axis, self.up);
        if norm(c) <= 1e-9 * norm(axis) * norm(self.up) {
            return Err(Error::Config("camera up is parallel to the view axis".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> CameraBasis {
        let f = sub(self.look_at, self.position);
        let forward = scaled(f, 1.0 / norm(f));
        let r = cross(forward, self.up);
        let right = scaled(r, 1.0 / norm(r));
        let up = cross(right, forward);
        CameraBasis { right, up, forward }
    }

    pub fn to_camera_frame(&self, p_world: [f64; 3]) -> [f64; 3] {
        let b = self.basis();
        let d = sub(p_world, self.position);
        [dot(d, b.right), dot(d, b.up), dot(d, b.forward)]
    }

    /// Pixel coordinates, or `None` when the point is not in front of the camera.
    pub fn project_point(&self, p_world: [f64; 3]) -> Option<[f64; 2]> {
        pinhole(self.to_camera_frame(p_world), self.focal_px, self.principal_point)
    }

    pub fn project_with_depth(&self, p_world: [f64; 3]) -> Option<([f64; 2], f64)> {
        let pc = self.to_camera_frame(p_world);
        pinhole(pc, self.focal_px, self.principal_point).map(|px| (px, pc[2]))
    }

    pub fn project_trajectory(&self, points: &[[f64; 3]]) -> Vec<Option<[f64; 2]>> {
        let b = self.basis();
        points
            .iter()
            .map(|&p| {
                let d = sub(p, self.position);
                pinhole([dot(d, b.right), dot(d, b.up), dot(d, b.forward)], self.focal_px, self.principal_point)
            })
            .collect()
    }

    /// Where the ray through pixel `(u, v)` meets the `z = 0` plane.
    pub fn ground_point(&self, u: f64, v: f64) -> Option<[f64; 2]> {
        let b = self.basis();
        let x = (u - self.principal_point[0]) / self.focal_px;
        let y = -(v - self.principal_point[1]) / self.focal_px;
        let dir = [
            b.right[0] * x + b.up[0] * y + b.forward[0],
            b.right[1] * x + b.up[1] * y + b.forward[1],
            b.right[2] * x + b.up[2] * y + b.forward[2],
        ];
        if dir[2].abs() < 1e-12 {
            return None;
        }
        let t = -self.position[2] / dir[2];
        if t <= 0.0 {
            return None;
        }
        Some([self.position[0] + t * dir[0], self.position[1] + t * dir[1]])
    }
}
