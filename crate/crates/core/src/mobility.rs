//! User motion: rotation traces (recorded or synthetic), a random-cardinal
//! walk with wall steering, and their combination into a pose stream.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{slerp, DevicePrediction, Pose, PoseSource, Quaternion, Vec3};

/// Eye height of the HMD above the floor.
pub const HMD_HEIGHT: f64 = 1.7;

/// Relative deviation from unit norm that is silently renormalized.
const NORM_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub orientation: Quaternion,
    /// On-device prediction and its horizon in seconds.
    pub device_predicted: Option<(Quaternion, f64)>,
    pub position: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceLabel {
    Low,
    High,
    Synthetic,
    Recorded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub samples: Vec<TraceSample>,
    pub label: TraceLabel,
}

impl TraceSet {
    pub fn new(samples: Vec<TraceSample>, label: TraceLabel) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("a trace needs at least 2 samples".into()));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidInput(format!(
                    "trace time not increasing at sample {}",
                    i + 1
                )));
            }
        }
        Ok(TraceSet { samples, label })
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.start()
    }

    pub fn has_device_prediction(&self) -> bool {
        self.samples.iter().all(|s| s.device_predicted.is_some())
    }

    pub fn has_positions(&self) -> bool {
        self.samples.iter().all(|s| s.position.is_some())
    }

    /// Maps `t` into the trace, looping past its end.
    fn wrap(&self, t: f64) -> f64 {
        if t <= self.start() + self.duration() {
            return t.max(self.start());
        }
        self.start() + (t - self.start()).rem_euclid(self.duration())
    }

    /// Index `i` with `samples[i].t <= t < samples[i + 1].t` for a wrapped `t`.
    fn bracket(&self, t: f64) -> usize {
        let i = self.samples.partition_point(|s| s.t <= t);
        i.saturating_sub(1).min(self.samples.len() - 2)
    }

    pub fn orientation_at(&self, t: f64) -> Quaternion {
        let t = self.wrap(t);
        let i = self.bracket(t);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        slerp(a.orientation, b.orientation, (t - a.t) / (b.t - a.t))
    }

    pub fn position_at(&self, t: f64) -> Option<Vec3> {
        let t = self.wrap(t);
        let i = self.bracket(t);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let (pa, pb) = (a.position?, b.position?);
        let s = (t - a.t) / (b.t - a.t);
        Some([0, 1, 2].map(|k| pa[k] + s * (pb[k] - pa[k])))
    }

    /// Device prediction of the latest sample at or before `t`.
    pub fn device_prediction_at(&self, t: f64) -> Option<DevicePrediction> {
        let t_wrapped = self.wrap(t);
        let latest = self.samples.partition_point(|s| s.t <= t_wrapped).saturating_sub(1);
        let sample = &self.samples[latest];
        let (orientation, horizon) = sample.device_predicted?;
        Some(DevicePrediction {
            t: t - (t_wrapped - sample.t),
            orientation,
            horizon,
        })
    }

    /// Times in `(0, sim_time]` where the looped trace restarts.
    pub fn seam_times(&self, sim_time: f64) -> Vec<f64> {
        let d = self.duration();
        (1..)
            .map(|k| self.start() + k as f64 * d)
            .take_while(|&t| t <= sim_time)
            .collect()
    }

    /// Angular speed over a sliding window, in deg/s, at each sample time
    /// whose window fits inside the trace.
    pub fn angular_speed_series(&self, window: f64) -> Vec<(f64, f64)> {
        let end = self.samples[self.samples.len() - 1].t;
        self.samples
            .iter()
            .take_while(|s| s.t + window <= end + 1e-12)
            .map(|s| {
                let q1 = self.orientation_at(s.t + window);
                (s.t, s.orientation.angle_to(&q1).to_degrees() / window)
            })
            .collect()
    }

    /// Largest angular speed between consecutive samples, deg/s.
    pub fn max_sample_angular_speed(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[0].orientation.angle_to(&w[1].orientation).to_degrees() / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }
}

const REQUIRED_COLUMNS: [&str; 5] = ["t", "qw", "qx", "qy", "qz"];
const POSITION_COLUMNS: [&str; 4] = ["pw", "px", "py", "pz"];
const DEVICE_COLUMNS: [&str; 5] = ["ph_qw", "ph_qx", "ph_qy", "ph_qz", "ph_h"];

fn checked_quaternion(v: [f64; 4], line: usize) -> Result<Quaternion> {
    let q = Quaternion::from_components(v[0], v[1], v[2], v[3]);
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Parse {
            line,
            message: format!("quaternion norm {n} is not within 1% of 1"),
        });
    }
    q.try_normalized()
}

/// Reads a trace CSV. Columns are matched by header name; position and
/// device-prediction groups are optional but must be complete when present.
/// A position is used for rows whose `pw` is nonzero.
pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let group = |names: &[&str]| -> Result<Option<Vec<usize>>> {
        let found: Vec<Option<usize>> = names.iter().map(|n| col(n)).collect();
        match found.iter().filter(|c| c.is_some()).count() {
            0 => Ok(None),
            n if n == names.len() => Ok(Some(found.into_iter().flatten().collect())),
            _ => Err(Error::Parse {
                line: 1,
                message: format!("incomplete column group {}", names.join(",")),
            }),
        }
    };
    let required = group(&REQUIRED_COLUMNS)?.ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing columns {}", REQUIRED_COLUMNS.join(",")),
    })?;
    let position = group(&POSITION_COLUMNS)?;
    let device = group(&DEVICE_COLUMNS)?;

    let mut samples: Vec<TraceSample> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            let text = record.get(i).unwrap_or("");
            text.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("bad number {text:?} in column {}", &headers[i]),
            })
        };
        let t = num(required[0])?;
        if let Some(prev) = samples.last() {
            if !(t > prev.t) {
                return Err(Error::Parse {
                    line,
                    message: format!("time {t} does not increase past {}", prev.t),
                });
            }
        }
        let orientation = checked_quaternion(
            [num(required[1])?, num(required[2])?, num(required[3])?, num(required[4])?],
            line,
        )?;
        let position = match &position {
            Some(c) if num(c[0])? != 0.0 => Some([num(c[1])?, num(c[2])?, num(c[3])?]),
            _ => None,
        };
        let device_predicted = match &device {
            Some(c) => {
                let q = checked_quaternion([num(c[0])?, num(c[1])?, num(c[2])?, num(c[3])?], line)?;
                Some((q, num(c[4])?))
            }
            None => None,
        };
        samples.push(TraceSample {
            t,
            orientation,
            device_predicted,
            position,
        });
    }
    TraceSet::new(samples, TraceLabel::Recorded)
}

/// Writes a trace CSV readable by [`load_trace`].
pub fn write_trace(trace: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let positions = trace.samples.iter().any(|s| s.position.is_some());
    let device = trace.has_device_prediction();
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    if positions {
        header.extend(POSITION_COLUMNS);
    }
    if device {
        header.extend(DEVICE_COLUMNS);
    }
    w.write_record(&header)?;
    for s in &trace.samples {
        let q = s.orientation;
        let mut row = vec![s.t, q.w, q.x, q.y, q.z];
        if positions {
            match s.position {
                Some(p) => row.extend([1.0, p[0], p[1], p[2]]),
                None => row.extend([0.0; 4]),
            }
        }
        if let Some((p, h)) = s.device_predicted.filter(|_| device) {
            row.extend([p.w, p.x, p.y, p.z, h]);
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sinusoid {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct AngleSignal(Vec<Sinusoid>);

impl AngleSignal {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        AngleSignal(
            (0..3)
                .map(|_| Sinusoid {
                    amplitude: rng.gen_range(0.5..1.0),
                    omega: 2.0 * PI * rng.gen_range(0.1..0.6),
                    phase: rng.gen_range(0.0..2.0 * PI),
                })
                .collect(),
        )
    }

    /// Value, first and second derivative at `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        self.0.iter().fold((0.0, 0.0, 0.0), |(v, d, dd), s| {
            let arg = s.omega * t + s.phase;
            (
                v + s.amplitude * arg.sin(),
                d + s.amplitude * s.omega * arg.cos(),
                dd - s.amplitude * s.omega * s.omega * arg.sin(),
            )
        })
    }

    fn peak(&self) -> f64 {
        self.0.iter().map(|s| s.amplitude).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationTraceParams {
    /// Target maximum angular speed between consecutive samples, deg/s.
    pub peak_velocity: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub seed: u64,
    /// Horizon of the emitted on-device prediction, seconds.
    pub device_horizon: f64,
    /// Largest pitch excursion, degrees.
    pub max_pitch: f64,
}

impl Default for RotationTraceParams {
    fn default() -> Self {
        RotationTraceParams {
            peak_velocity: 300.0,
            duration: 20.0,
            sample_rate: 1000.0,
            seed: 1,
            device_horizon: 0.1,
            max_pitch: 60.0,
        }
    }
}

pub const LOW_PEAK_VELOCITY: f64 = 60.0;
pub const HIGH_PEAK_VELOCITY: f64 = 300.0;

fn rotation_samples(
    yaw: &AngleSignal,
    pitch: &AngleSignal,
    yaw_scale: f64,
    pitch_scale: f64,
    params: &RotationTraceParams,
) -> Vec<TraceSample> {
    let n = (params.duration * params.sample_rate).round() as usize + 1;
    let h = params.device_horizon;
    (0..n)
        .map(|i| {
            let t = i as f64 / params.sample_rate;
            let (y, yd, ydd) = yaw.eval(t);
            let (p, pd, pdd) = pitch.eval(t);
            let orientation = Quaternion::from_yaw_pitch_roll(yaw_scale * y, pitch_scale * p, 0.0);
            // constant-acceleration extrapolation, as a headset runtime would do
            let yp = yaw_scale * (y + yd * h + 0.5 * ydd * h * h);
            let pp = (pitch_scale * (p + pd * h + 0.5 * pdd * h * h)).clamp(-FRAC_PI_2, FRAC_PI_2);
            TraceSample {
                t,
                orientation,
                device_predicted: Some((Quaternion::from_yaw_pitch_roll(yp, pp, 0.0), h)),
                position: None,
            }
        })
        .collect()
}

/// Synthetic head rotation: yaw and pitch are each a sum of three random
/// sinusoids, scaled so the largest sample-to-sample angular speed equals
/// `peak_velocity`. Pitch never exceeds `max_pitch`.
pub fn generate_rotation_trace(params: &RotationTraceParams) -> Result<TraceSet> {
    if !(params.peak_velocity > 0.0) || !params.peak_velocity.is_finite() {
        return Err(Error::InvalidInput("peak velocity must be positive".into()));
    }
    if !(params.duration > 0.0) || !(params.sample_rate > 0.0) || params.duration * params.sample_rate < 1.0 {
        return Err(Error::InvalidInput("trace needs a positive duration and rate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let yaw = AngleSignal::random(&mut rng);
    let pitch = AngleSignal::random(&mut rng);
    let pitch_cap = params.max_pitch.to_radians() / pitch.peak();
    let build = |scale: f64| {
        let samples = rotation_samples(&yaw, &pitch, scale, scale.min(pitch_cap), params);
        TraceSet { samples, label: TraceLabel::Synthetic }
    };

    let (mut lo, mut hi) = (0.0, 1e-6);
    while build(hi).max_sample_angular_speed() < params.peak_velocity {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidInput("peak velocity unreachable at this sample rate".into()));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if build(mid).max_sample_angular_speed() < params.peak_velocity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut trace = build(hi);
    trace.label = match params.peak_velocity {
        v if v == LOW_PEAK_VELOCITY => TraceLabel::Low,
        v if v == HIGH_PEAK_VELOCITY => TraceLabel::High,
        _ => TraceLabel::Synthetic,
    };
    Ok(trace)
}

/// Axis-aligned floor area, meters, in room coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Room {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Room {
    /// The 20 × 10 m floor centred on the origin.
    pub const DEFAULT: Room = Room {
        x_min: -10.0,
        x_max: 10.0,
        y_min: -5.0,
        y_max: 5.0,
    };

    pub fn centered(width: f64, depth: f64) -> Self {
        Room {
            x_min: -width / 2.0,
            x_max: width / 2.0,
            y_min: -depth / 2.0,
            y_max: depth / 2.0,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0]
    }

    pub fn wall_distance(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.x_min)
            .min(self.x_max - p[0])
            .min(p[1] - self.y_min)
            .min(self.y_max - p[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub room: Room,
    pub speed: f64,
    pub step_interval: f64,
    pub duration: f64,
    pub seed: u64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            room: Room::DEFAULT,
            speed: 1.0,
            step_interval: 0.5,
            duration: 20.0,
            seed: 1,
        }
    }
}

/// Piecewise-linear floor path with one vertex per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub step_interval: f64,
    pub points: Vec<[f64; 2]>,
}

impl Walk {
    pub fn stationary(at: [f64; 2]) -> Self {
        Walk {
            step_interval: 1.0,
            points: vec![at],
        }
    }

    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let x = (t / self.step_interval).max(0.0);
        let i = x.floor() as usize;
        if i + 1 >= self.points.len() {
            return self.points[self.points.len() - 1];
        }
        let s = x - i as f64;
        let (a, b) = (self.points[i], self.points[i + 1]);
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }
}

/// Minimum clearance kept between the walker and any wall.
const WALL_CLEARANCE: f64 = 0.1;
const STEERING_ZONE: f64 = 1.0;
const MAX_STEERING: f64 = PI / 6.0;

/// Random-cardinal walk from the room centre. Near a wall the chosen heading
/// is turned towards the room interior by at most 30° per step, and steps are
/// shortened so the path never reaches a wall.
pub fn generate_walk(params: &WalkParams) -> Result<Walk> {
    let room = params.room;
    if room.x_max - room.x_min < 2.0 || room.y_max - room.y_min < 2.0 {
        return Err(Error::InvalidInput("room must be at least 2 × 2 m".into()));
    }
    if !(params.step_interval > 0.0) || params.speed < 0.0 || params.duration < 0.0 {
        return Err(Error::InvalidInput("walk needs speed ≥ 0 and a positive step interval".into()));
    }
    let steps = (params.duration / params.step_interval).ceil() as usize;
    let step_len = params.speed * params.step_interval;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut p = room.center();
    let mut points = Vec::with_capacity(steps + 1);
    points.push(p);
    for _ in 0..steps {
        let mut heading = rng.gen_range(0..4) as f64 * FRAC_PI_2;
        // push direction: sum of inward normals of walls within the steering zone
        let mut push = [0.0f64, 0.0];
        if p[0] - room.x_min < STEERING_ZONE {
            push[0] += 1.0;
        }
        if room.x_max - p[0] < STEERING_ZONE {
            push[0] -= 1.0;
        }
        if p[1] - room.y_min < STEERING_ZONE {
            push[1] += 1.0;
        }
        if room.y_max - p[1] < STEERING_ZONE {
            push[1] -= 1.0;
        }
        if push != [0.0, 0.0] {
            let away = push[1].atan2(push[0]);
            let diff = (away - heading + PI).rem_euclid(2.0 * PI) - PI;
            heading += diff.clamp(-MAX_STEERING, MAX_STEERING);
        }
        let dir = [heading.cos(), heading.sin()];
        // longest fraction of the step that keeps the clearance
        let mut len = step_len;
        for (k, (lo, hi)) in [(room.x_min, room.x_max), (room.y_min, room.y_max)].into_iter().enumerate() {
            if dir[k] > 1e-12 {
                len = len.min((hi - WALL_CLEARANCE - p[k]) / dir[k]);
            } else if dir[k] < -1e-12 {
                len = len.min((lo + WALL_CLEARANCE - p[k]) / dir[k]);
            }
        }
        let len = len.max(0.0);
        p = [p[0] + len * dir[0], p[1] + len * dir[1]];
        points.push(p);
    }
    Ok(Walk {
        step_interval: params.step_interval,
        points,
    })
}

/// Combined 6DoF motion: orientation from a trace, position from a walk, a
/// trace's own positions, or a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub trace: TraceSet,
    pub walk: Option<Walk>,
    pub fixed_position: [f64; 2],
    pub hmd_height: f64,
}

impl Motion {
    pub fn new(trace: TraceSet, walk: Option<Walk>) -> Self {
        Motion {
            trace,
            walk,
            fixed_position: Room::DEFAULT.center(),
            hmd_height: HMD_HEIGHT,
        }
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        if let Some(walk) = &self.walk {
            let p = walk.position_at(t);
            return [p[0], p[1], self.hmd_height];
        }
        if self.trace.has_positions() {
            if let Some(p) = self.trace.position_at(t) {
                return p;
            }
        }
        [self.fixed_position[0], self.fixed_position[1], self.hmd_height]
    }
}

impl PoseSource for Motion {
    fn pose_at(&self, t: f64) -> Pose {
        Pose::new(t, self.position_at(t), self.trace.orientation_at(t))
    }

    fn device_prediction(&self, t: f64) -> Option<DevicePrediction> {
        self.trace.device_prediction_at(t)
    }
}

/// Orientation at `t` for a trace; convenience over [`TraceSet::orientation_at`].
pub fn pose_at(trace: &TraceSet, walk: Option<&Walk>, t: f64) -> Pose {
    Motion::new(trace.clone(), walk.cloned()).pose_at(t)
}

/// A trace that holds one orientation for `duration` seconds.
pub fn static_trace(orientation: Quaternion, duration: f64) -> TraceSet {
    let sample = |t| TraceSample {
        t,
        orientation,
        device_predicted: Some((orientation, 0.1)),
        position: None,
    };
    TraceSet {
        samples: vec![sample(0.0), sample(duration.max(1e-3))],
        label: TraceLabel::Synthetic,
    }
}
