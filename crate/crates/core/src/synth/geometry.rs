use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::data::{View, Zone};

/// World frame: `x` to the thrower's right, `y` up, `z` from the thrower
/// toward the target. The thrower stands at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Distance from the thrower to the target plane, metres.
    pub target_plane_distance: f64,
    /// Distance from the thrower to the 45 and 90 degree cameras, metres.
    pub side_camera_distance: f64,
    pub zone_edge: f64,
    pub grid_center_height: f64,
    pub gravity: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            target_plane_distance: 4.0,
            side_camera_distance: 2.75,
            zone_edge: 0.4,
            grid_center_height: 1.5,
            gravity: 9.81,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("target_plane_distance", self.target_plane_distance),
            ("side_camera_distance", self.side_camera_distance),
            ("zone_edge", self.zone_edge),
            ("grid_center_height", self.grid_center_height),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SynthError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Centre of a zone on the target plane, `(x, y)`.
    pub fn zone_center(&self, zone: Zone) -> [f64; 2] {
        let (row, col) = (zone.row().expect("hit zone"), zone.col().expect("hit zone"));
        [
            (col as f64 - 1.0) * self.zone_edge,
            self.grid_center_height + (1.0 - row as f64) * self.zone_edge,
        ]
    }

    /// The zone containing a point of the target plane. Zones are closed on
    /// their left and upper edges; anything outside the grid is a miss.
    pub fn zone_at(&self, x: f64, y: f64) -> Zone {
        let half = 1.5 * self.zone_edge;
        let col = ((x + half) / self.zone_edge).floor();
        let row = ((self.grid_center_height + half - y) / self.zone_edge).floor();
        if (0.0..3.0).contains(&col) && (0.0..3.0).contains(&row) {
            Zone::from_row_col(row as usize, col as usize)
        } else {
            Zone::MISS
        }
    }
}

/// A pinhole camera with square pixels along each axis, no roll and the
/// principal point at the image centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: [f64; 3],
    /// Heading of the optical axis in the horizontal plane; 0 looks along
    /// `+z`, 90 along `+x`.
    pub yaw_deg: f64,
    /// Elevation of the optical axis.
    #[serde(default)]
    pub pitch_deg: f64,
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

/// Shared optics of every camera unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraOptics {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Mounting height of every camera, metres.
    pub mount_height: f64,
}

impl Default for CameraOptics {
    fn default() -> Self {
        CameraOptics {
            hfov_deg: 64.0,
            vfov_deg: 41.0,
            width: 848,
            height: 480,
            fps: 30.0,
            mount_height: 1.2,
        }
    }
}

impl CameraOptics {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.hfov_deg > 0.0
            && self.hfov_deg < 180.0
            && self.vfov_deg > 0.0
            && self.vfov_deg < 180.0
            && self.width > 0
            && self.height > 0
            && self.fps > 0.0
            && self.mount_height.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SynthError::Config("camera optics must be positive".into()))
        }
    }

    /// The camera unit for `view`: under the target for 0 degrees, on the
    /// thrower's right at the side distance for 45 and 90 degrees, all
    /// looking back at the thrower.
    pub fn camera(&self, view: View, world: &WorldConfig) -> CameraModel {
        let h = self.mount_height;
        let d = world.side_camera_distance;
        let (position, yaw_deg) = match view {
            View::Deg0 => ([0.0, h, world.target_plane_distance], 180.0),
            View::Deg45 => {
                let s = std::f64::consts::FRAC_1_SQRT_2 * d;
                ([s, h, s], -135.0)
            }
            View::Deg90 => ([d, h, 0.0], -90.0),
        };
        CameraModel {
            position,
            yaw_deg,
            pitch_deg: 0.0,
            hfov_deg: self.hfov_deg,
            vfov_deg: self.vfov_deg,
            width: self.width,
            height: self.height,
            fps: self.fps,
        }
    }
}

/// Where a 3D point lands in the image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Distance along the optical axis.
    pub depth: f64,
    pub visible: bool,
}

impl CameraModel {
    pub fn fx(&self) -> f64 {
        self.width as f64 / 2.0 / (self.hfov_deg.to_radians() / 2.0).tan()
    }

    pub fn fy(&self) -> f64 {
        self.height as f64 / 2.0 / (self.vfov_deg.to_radians() / 2.0).tan()
    }

    pub fn principal_point(&self) -> [f64; 2] {
        [self.width as f64 / 2.0, self.height as f64 / 2.0]
    }

    /// Camera axes in world coordinates: right, down, forward.
    pub fn axes(&self) -> [[f64; 3]; 3] {
        let (sy, cy) = self.yaw_deg.to_radians().sin_cos();
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        let forward = [sy * cp, sp, cy * cp];
        let right = [cy, 0.0, -sy];
        // down = right x forward
        let down = [
            right[1] * forward[2] - right[2] * forward[1],
            right[2] * forward[0] - right[0] * forward[2],
            right[0] * forward[1] - right[1] * forward[0],
        ];
        [right, down, forward]
    }

    pub fn project(&self, p: [f64; 3]) -> Projection {
        let d = [p[0] - self.position[0], p[1] - self.position[1], p[2] - self.position[2]];
        let [r, dn, f] = self.axes();
        let dot = |a: [f64; 3]| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
        let (x, y, z) = (dot(r), dot(dn), dot(f));
        let [cx, cy] = self.principal_point();
        let u = cx + self.fx() * x / z;
        let v = cy + self.fy() * y / z;
        let visible = z > 0.0 && u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64;
        Projection { u, v, depth: z, visible }
    }

    /// The world point at `depth` along the ray through pixel `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        let [cx, cy] = self.principal_point();
        let x = (u - cx) / self.fx() * depth;
        let y = (v - cy) / self.fy() * depth;
        let [r, dn, f] = self.axes();
        std::array::from_fn(|i| self.position[i] + r[i] * x + dn[i] * y + f[i] * depth)
    }

    /// Pixel radius of a sphere of `radius` metres at `depth`.
    pub fn apparent_radius(&self, radius: f64, depth: f64) -> f64 {
        self.fx() * radius / depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Matrix3x4, Vector4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frontal() -> CameraModel {
        CameraOptics::default().camera(View::Deg0, &WorldConfig::default())
    }

    #[test]
    fn optical_axis_hits_the_image_centre() {
        let cam = frontal();
        let p = cam.project([0.0, 1.2, 1.0]);
        assert!((p.u - 424.0).abs() < 1e-9 && (p.v - 240.0).abs() < 1e-9);
        assert!((p.depth - 3.0).abs() < 1e-12);
    }

    #[test]
    fn thrower_right_appears_on_image_left_from_the_front() {
        let cam = frontal();
        assert!(cam.project([0.5, 1.2, 0.0]).u < 424.0);
        assert!(cam.project([0.0, 2.0, 0.0]).v < 240.0);
        let side = CameraOptics::default().camera(View::Deg90, &WorldConfig::default());
        assert!(side.project([0.0, 1.2, 0.5]).u > 424.0);
        let diag = CameraOptics::default().camera(View::Deg45, &WorldConfig::default());
        assert!(diag.project([0.0, 1.2, 0.5]).u > diag.project([0.0, 1.2, 0.0]).u);
    }

    /// Homogeneous `K [R | -R c]` projection assembled with nalgebra.
    fn matrix_projection(cam: &CameraModel, p: [f64; 3]) -> [f64; 2] {
        let [r, d, f] = cam.axes();
        let rot = Matrix3::new(r[0], r[1], r[2], d[0], d[1], d[2], f[0], f[1], f[2]);
        let c = nalgebra::Vector3::from(cam.position);
        let t = -(rot * c);
        let k = Matrix3::new(cam.fx(), 0.0, 424.0, 0.0, cam.fy(), 240.0, 0.0, 0.0, 1.0);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        rt.set_column(3, &t);
        let h = k * rt * Vector4::new(p[0], p[1], p[2], 1.0);
        [h[0] / h[2], h[1] / h[2]]
    }

    #[test]
    fn projection_matches_the_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for view in View::ALL {
            let mut cam = CameraOptics::default().camera(view, &WorldConfig::default());
            cam.pitch_deg = 7.0;
            for _ in 0..100 {
                let p = [rng.random_range(-1.0..1.0), rng.random_range(0.0..2.5), rng.random_range(-0.5..1.5)];
                let a = cam.project(p);
                let b = matrix_projection(&cam, p);
                assert!((a.u - b[0]).abs() < 1e-9 && (a.v - b[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn back_projection_inverts_projection() {
        let cam = frontal();
        let p = [0.3, 1.9, 0.4];
        let q = cam.project(p);
        let back = cam.back_project(q.u, q.v, q.depth);
        for i in 0..3 {
            assert!((back[i] - p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zones_tile_the_grid() {
        let w = WorldConfig::default();
        for z in Zone::all() {
            let [x, y] = w.zone_center(z);
            assert_eq!(w.zone_at(x, y), z);
        }
        assert_eq!(w.zone_at(-0.59, 2.09), Zone::new(1).unwrap());
        assert_eq!(w.zone_at(0.59, 0.91), Zone::new(9).unwrap());
        assert_eq!(w.zone_at(0.61, 1.5), Zone::MISS);
        assert_eq!(w.zone_at(0.0, 2.11), Zone::MISS);
    }
}
