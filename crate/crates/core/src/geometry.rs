//! Quaternion and pose algebra, trajectory interpolation and head-pose
//! prediction.
//!
//! Conventions: Hamilton quaternions, scalar first, right-handed frames.
//! The room frame has its origin at the floor center with +z up. A device
//! frame has its boresight along +x and +z up at identity orientation.

use std::ops::Mul;

use crate::error::{Error, Result};

/// Plain 3-vector in meters or unitless, depending on context.
pub type Vec3 = [f64; 3];

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Angle between two (not necessarily unit) vectors, in radians.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors
    norm3(cross3(a, b)).atan2(dot3(a, b))
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a unit quaternion from raw components.
    ///
    /// Fails when the components are not finite or have (near) zero norm.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        Quaternion { w, x, y, z }.try_normalized()
    }

    /// Raw constructor; the caller guarantees unit norm.
    pub const fn from_components(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm3(axis);
        if n < 1e-300 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / n;
        Quaternion {
            w: c,
            x: axis[0] * k,
            y: axis[1] * k,
            z: axis[2] * k,
        }
    }

    /// Rotation vector (axis scaled by angle) to quaternion.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        Self::from_axis_angle(v, norm3(v))
    }

    /// Intrinsic z-y-x rotation: yaw about +z, then pitch about the new +y,
    /// then roll about the new +x. Angles in radians.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], yaw)
            * Self::from_axis_angle([0.0, 1.0, 0.0], pitch)
            * Self::from_axis_angle([1.0, 0.0, 0.0], roll)
    }

    pub fn yaw(angle_rad: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], angle_rad)
    }

    /// Returns (unit axis, angle in [0, π]) of the shortest equivalent rotation.
    pub fn to_axis_angle(&self) -> (Vec3, f64) {
        let q = self.canonicalize();
        let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if s < 1e-300 {
            return ([1.0, 0.0, 0.0], 0.0);
        }
        let angle = 2.0 * s.atan2(q.w);
        ([q.x / s, q.y / s, q.z / s], angle)
    }

    /// Rotation vector (axis * angle) of the shortest equivalent rotation.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let (axis, angle) = self.to_axis_angle();
        scale3(axis, angle)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn try_normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::Degenerate(format!(
                "quaternion ({}, {}, {}, {}) cannot be normalized",
                self.w, self.x, self.y, self.z
            )));
        }
        Ok(Quaternion {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        })
    }

    /// Picks the representative with `w >= 0` from the double cover.
    pub fn canonicalize(&self) -> Self {
        if self.w < 0.0 {
            -*self
        } else {
            *self
        }
    }

    pub fn conjugate(&self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Inverse of a unit quaternion.
    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Rotates `v` from the local frame into the parent frame.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u x v) + 2 u x (u x v)
        let u = [self.x, self.y, self.z];
        let t = scale3(cross3(u, v), 2.0);
        add3(add3(v, scale3(t, self.w)), cross3(u, t))
    }

    /// Geodesic angle between two orientations, radians in [0, π].
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        (self.inverse() * *other).to_axis_angle().1
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            x: self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            y: self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            z: self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        }
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// Spherical linear interpolation on the shortest arc.
///
/// Falls back to normalized linear interpolation when the two rotations are
/// closer than 1e-7 rad.
pub fn slerp(q0: Quaternion, q1: Quaternion, s: f64) -> Quaternion {
    if q0 == q1 || s == 0.0 {
        return q0;
    }
    let mut q1 = q1;
    let mut d = q0.dot(&q1);
    if d < 0.0 {
        q1 = -q1;
        d = -d;
    }
    if s == 1.0 {
        return q1;
    }
    let d = d.min(1.0);
    let half = d.acos();
    if 2.0 * half < 1e-7 {
        let lerp = Quaternion {
            w: q0.w + s * (q1.w - q0.w),
            x: q0.x + s * (q1.x - q0.x),
            y: q0.y + s * (q1.y - q0.y),
            z: q0.z + s * (q1.z - q0.z),
        };
        return lerp.try_normalized().unwrap_or(q0);
    }
    let sin_half = half.sin();
    let a = ((1.0 - s) * half).sin() / sin_half;
    let b = (s * half).sin() / sin_half;
    Quaternion {
        w: a * q0.w + b * q1.w,
        x: a * q0.x + b * q1.x,
        y: a * q0.y + b * q1.y,
        z: a * q0.z + b * q1.z,
    }
}

/// Azimuth/elevation pair in degrees.
///
/// Azimuth is measured from +x towards +y, elevation from the x-y plane
/// towards +z. At the poles azimuth is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Direction { azimuth, elevation }
    }

    pub fn to_unit_vector(&self) -> Vec3 {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        [ce * ca, ce * sa, se]
    }

    /// Converts a nonzero vector to a direction.
    pub fn from_vector(v: Vec3) -> Result<Self> {
        let n = norm3(v);
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::Degenerate("zero-length direction vector".into()));
        }
        Ok(Self::from_unit_vector(scale3(v, 1.0 / n)))
    }

    /// Converts a unit vector to a direction.
    pub fn from_unit_vector(u: Vec3) -> Self {
        let horizontal = u[0].hypot(u[1]);
        let elevation = u[2].atan2(horizontal).to_degrees();
        if horizontal < 1e-15 {
            return Direction {
                azimuth: 0.0,
                elevation: if u[2] > 0.0 { 90.0 } else { -90.0 },
            };
        }
        let mut azimuth = u[1].atan2(u[0]).to_degrees();
        if azimuth <= -180.0 {
            azimuth += 360.0;
        }
        Direction { azimuth, elevation }
    }

    /// Great-circle angle to another direction, degrees.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        angle_between(self.to_unit_vector(), other.to_unit_vector()).to_degrees()
    }
}

/// Timestamped 6DoF pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Seconds.
    pub t: f64,
    /// Meters, room frame.
    pub position: Vec3,
    pub orientation: Quaternion,
}

impl Pose {
    pub fn new(t: f64, position: Vec3, orientation: Quaternion) -> Self {
        Pose {
            t,
            position,
            orientation,
        }
    }
}

/// Unit vector from `pose` towards `target`, expressed in the pose's local frame.
pub fn local_unit_vector_to(pose: &Pose, target: Vec3) -> Result<Vec3> {
    let v = sub3(target, pose.position);
    let n = norm3(v);
    if !n.is_finite() || n < 1e-9 {
        return Err(Error::Degenerate(
            "target coincides with the device position".into(),
        ));
    }
    Ok(pose.orientation.inverse().rotate(scale3(v, 1.0 / n)))
}

/// Direction of the access point as seen from the HMD's local frame.
pub fn ap_direction_in_hmd_frame(pose: &Pose, ap_position: Vec3) -> Result<Direction> {
    Ok(Direction::from_unit_vector(local_unit_vector_to(
        pose,
        ap_position,
    )?))
}

/// A prediction recorded by the headset alongside the measured pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevicePrediction {
    /// Time at which the prediction was polled.
    pub t: f64,
    pub orientation: Quaternion,
    /// How far ahead the device predicted, seconds.
    pub horizon: f64,
}

/// Anything that can report the user's pose at an arbitrary time.
pub trait PoseSource {
    fn pose_at(&self, t: f64) -> Pose;

    /// Latest device-side prediction polled at or before `t`, when recorded.
    fn device_prediction(&self, _t: f64) -> Option<DevicePrediction> {
        None
    }
}

/// Head-pose predictor used ahead of proactive beamforming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    /// Angular velocity from the last two samples, applied forward.
    ConstantVelocity,
    /// The headset's own recorded prediction. With `rescale`, the recorded
    /// rotation increment is scaled to the requested horizon.
    Device { rescale: bool },
    /// Looks ahead in the ground-truth motion.
    Oracle,
}

fn extrapolate_position(history: &[Pose], horizon: f64) -> Vec3 {
    let now = history[history.len() - 1];
    if history.len() < 2 {
        return now.position;
    }
    let prev = history[history.len() - 2];
    let dt = now.t - prev.t;
    if dt <= 0.0 {
        return now.position;
    }
    let v = scale3(sub3(now.position, prev.position), 1.0 / dt);
    add3(now.position, scale3(v, horizon))
}

/// Predicts the pose `horizon` seconds after the last history sample.
pub fn predict_pose(
    history: &[Pose],
    horizon: f64,
    predictor: Predictor,
    source: Option<&dyn PoseSource>,
) -> Result<Pose> {
    let now = *history
        .last()
        .ok_or_else(|| Error::InvalidInput("empty pose history".into()))?;
    let target_t = now.t + horizon;
    match predictor {
        Predictor::ConstantVelocity => {
            if history.len() < 2 {
                return Ok(now);
            }
            let prev = history[history.len() - 2];
            let dt = now.t - prev.t;
            if dt <= 0.0 {
                return Ok(now);
            }
            let delta = (prev.orientation.inverse() * now.orientation).canonicalize();
            let (axis, angle) = delta.to_axis_angle();
            let step = Quaternion::from_axis_angle(axis, angle / dt * horizon);
            Ok(Pose::new(
                target_t,
                extrapolate_position(history, horizon),
                (now.orientation * step).try_normalized()?,
            ))
        }
        Predictor::Device { rescale } => {
            let source = source.ok_or_else(|| {
                Error::InvalidInput("device prediction requires a motion trace".into())
            })?;
            let p = source.device_prediction(now.t).ok_or_else(|| {
                Error::InvalidInput("trace carries no device-prediction columns".into())
            })?;
            let orientation = if rescale && p.horizon > 0.0 && p.horizon != horizon {
                let delta = (now.orientation.inverse() * p.orientation).canonicalize();
                let (axis, angle) = delta.to_axis_angle();
                now.orientation * Quaternion::from_axis_angle(axis, angle * horizon / p.horizon)
            } else {
                p.orientation
            };
            Ok(Pose::new(
                target_t,
                extrapolate_position(history, horizon),
                orientation,
            ))
        }
        Predictor::Oracle => {
            let source = source.ok_or_else(|| {
                Error::InvalidInput("oracle prediction requires the full trace".into())
            })?;
            let mut p = source.pose_at(target_t);
            p.t = target_t;
            Ok(p)
        }
    }
}
