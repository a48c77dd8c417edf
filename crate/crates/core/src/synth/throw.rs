use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::WorldConfig;
use super::SynthError;
use crate::data::Zone;

/// How one simulated person throws and reacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub id: String,
    /// Wrist position at release, metres.
    pub release_point: [f64; 3],
    pub release_speed_mean: f64,
    pub release_speed_std: f64,
    /// Aim error standard deviations `(horizontal, vertical)`, radians.
    pub aim_noise: [f64; 2],
    pub reaction_intensity: f64,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.aim_noise.iter().any(|s| !(*s >= 0.0)) || !(self.release_speed_std >= 0.0) {
            return Err(SynthError::Config(format!("{}: noise levels must be non-negative", self.id)));
        }
        if !(self.release_speed_mean > 0.0) {
            return Err(SynthError::Config(format!("{}: release speed must be positive", self.id)));
        }
        if !(0.0..=1.0).contains(&self.reaction_intensity) {
            return Err(SynthError::Config(format!("{}: reaction intensity must lie in [0, 1]", self.id)));
        }
        if self.release_point.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::Config(format!("{}: release point must be finite", self.id)));
        }
        Ok(())
    }
}

/// Ballistic flight from the release point, no drag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub release: [f64; 3],
    pub velocity: [f64; 3],
    pub gravity: f64,
    /// Time to reach the target plane, seconds.
    pub flight_time: f64,
}

impl Trajectory {
    pub fn position(&self, t: f64) -> [f64; 3] {
        [
            self.release[0] + self.velocity[0] * t,
            self.release[1] + self.velocity[1] * t - 0.5 * self.gravity * t * t,
            self.release[2] + self.velocity[2] * t,
        ]
    }

    pub fn impact(&self) -> [f64; 3] {
        self.position(self.flight_time)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThrowResult {
    pub intent: Zone,
    pub outcome: Zone,
    pub congruence: bool,
    pub trajectory: Trajectory,
    /// Impact on the target plane, `(x, y)`.
    pub impact: [f64; 2],
}

/// Azimuth and elevation (radians) of the flatter launch that carries a
/// ball released at `from` with `speed` through `to`.
pub fn aim_angles(from: [f64; 3], to: [f64; 3], speed: f64, gravity: f64) -> Result<(f64, f64), SynthError> {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let dz = to[2] - from[2];
    let range = dx.hypot(dz);
    if range <= 0.0 {
        return Err(SynthError::Unreachable { speed });
    }
    // With T = tan(elevation): a T^2 - range T + (a + dy) = 0.
    let a = gravity * range * range / (2.0 * speed * speed);
    let disc = range * range - 4.0 * a * (a + dy);
    if disc < 0.0 {
        return Err(SynthError::Unreachable { speed });
    }
    let t = (range - disc.sqrt()) / (2.0 * a);
    Ok((dx.atan2(dz), t.atan()))
}

pub fn launch_velocity(speed: f64, azimuth: f64, elevation: f64) -> [f64; 3] {
    let horizontal = speed * elevation.cos();
    [horizontal * azimuth.sin(), speed * elevation.sin(), horizontal * azimuth.cos()]
}

/// Flight to the target plane for a given launch.
pub fn fly(world: &WorldConfig, release: [f64; 3], velocity: [f64; 3]) -> Result<Trajectory, SynthError> {
    let distance = world.target_plane_distance - release[2];
    if velocity[2] <= 0.0 || distance <= 0.0 {
        return Err(SynthError::Unreachable { speed: norm(velocity) });
    }
    Ok(Trajectory {
        release,
        velocity,
        gravity: world.gravity,
        flight_time: distance / velocity[2],
    })
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Aims at the centre of `intent` for the subject's mean speed, then throws
/// with perturbed direction and speed.
pub fn simulate_throw<R: Rng + ?Sized>(
    world: &WorldConfig,
    subject: &SubjectProfile,
    intent: Zone,
    rng: &mut R,
) -> Result<ThrowResult, SynthError> {
    if intent.is_miss() {
        return Err(SynthError::Config("intent must be a zone".into()));
    }
    let [tx, ty] = world.zone_center(intent);
    let target = [tx, ty, world.target_plane_distance];
    let (azimuth, elevation) = aim_angles(subject.release_point, target, subject.release_speed_mean, world.gravity)?;
    let gauss = |rng: &mut R, sd: f64| {
        if sd > 0.0 {
            Normal::new(0.0, sd).expect("finite sd").sample(rng)
        } else {
            0.0
        }
    };
    let d_az = gauss(rng, subject.aim_noise[0]);
    let d_el = gauss(rng, subject.aim_noise[1]);
    let speed = subject.release_speed_mean + gauss(rng, subject.release_speed_std);
    if speed <= 0.0 {
        return Err(SynthError::Unreachable { speed });
    }
    let trajectory = fly(world, subject.release_point, launch_velocity(speed, azimuth + d_az, elevation + d_el))?;
    let [ix, iy, _] = trajectory.impact();
    let outcome = world.zone_at(ix, iy);
    Ok(ThrowResult {
        intent,
        outcome,
        congruence: outcome == intent,
        trajectory,
        impact: [ix, iy],
    })
}
