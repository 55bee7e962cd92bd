//! CoVRage: proactive HMD-side beam covering the access point's predicted
//! trajectory through the headset's field of view.
//!
//! The array is split into contiguous strips (columns or rows). Strip `i`
//! steers a sub-beam at the trajectory point `s_i = (i + 0.5) / k` and gets
//! a scalar phase offset that lines its field up with the strips before it
//! at the crossover point `s = i / k`.

use std::ops::Range;

use num_complex::Complex64;

use crate::array::{ArrayGeometry, Awv};
use crate::error::{Error, Result};
use crate::geometry::{
    angle_between, local_unit_vector_to, norm3, scale3, slerp, sub3, Direction, Pose, Quaternion,
    Vec3,
};

/// Half-power beamwidth factor of a uniform aperture, `0.886 λ / (N d)`.
const BEAMWIDTH_FACTOR: f64 = 0.886;

/// Below this magnitude a partial field is treated as a perfect null (-300 dB).
const NULL_FIELD: f64 = 1e-15;

/// Rotational path of the AP direction, in the HMD frame, between the
/// current and the predicted orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub q_now: Quaternion,
    pub q_pred: Quaternion,
    /// Unit vector from the HMD towards the AP, room frame.
    pub d_world: Vec3,
    /// Angle between the AP directions at s = 0 and s = 1, degrees.
    pub span_deg: f64,
}

impl Trajectory {
    pub fn new(q_now: Quaternion, q_pred: Quaternion, d_world: Vec3) -> Result<Self> {
        let n = norm3(d_world);
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::Degenerate("zero-length AP direction".into()));
        }
        let mut t = Trajectory {
            q_now,
            q_pred,
            d_world: scale3(d_world, 1.0 / n),
            span_deg: 0.0,
        };
        t.span_deg = angle_between(t.local_vector_at(0.0), t.local_vector_at(1.0)).to_degrees();
        Ok(t)
    }

    /// From two poses and the AP position; the HMD position of `now` is used.
    pub fn from_poses(now: &Pose, pred: &Pose, ap_position: Vec3) -> Result<Self> {
        let v = sub3(ap_position, now.position);
        let n = norm3(v);
        if !n.is_finite() || n < 1e-9 {
            return Err(Error::Degenerate("AP coincides with the HMD".into()));
        }
        Self::new(now.orientation, pred.orientation, scale3(v, 1.0 / n))
    }

    /// Unit vector towards the AP in the HMD frame at trajectory point `s`.
    pub fn local_vector_at(&self, s: f64) -> Vec3 {
        slerp(self.q_now, self.q_pred, s).inverse().rotate(self.d_world)
    }

    pub fn direction_at(&self, s: f64) -> Direction {
        Direction::from_unit_vector(self.local_vector_at(s))
    }
}

/// Which element lines the array is cut along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripAxis {
    /// Vertical strips of whole columns; sub-beams fan out along y.
    Columns,
    /// Horizontal strips of whole rows; sub-beams fan out along z.
    Rows,
}

/// How the strip axis is chosen for a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisPolicy {
    Fixed(StripAxis),
    /// Cut across the direction-cosine axis along which the trajectory
    /// travels furthest.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovrageParams {
    pub k_max: usize,
    pub axis: AxisPolicy,
}

impl Default for CovrageParams {
    fn default() -> Self {
        CovrageParams {
            k_max: 8,
            axis: AxisPolicy::Fixed(StripAxis::Columns),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubArrayPlan {
    pub k: usize,
    pub axis: StripAxis,
    /// Contiguous line ranges (columns or rows per `axis`) partitioning the array.
    pub blocks: Vec<Range<usize>>,
    /// Sub-beam aim of each block, HMD frame.
    pub targets: Vec<Direction>,
    /// Trajectory point between block `i - 1` and block `i`, for `i >= 1`.
    pub crossovers: Vec<Direction>,
    /// Per-block scalar phase, radians; the first is always zero.
    pub offsets: Vec<f64>,
}

impl SubArrayPlan {
    fn line_count(geometry: &ArrayGeometry, axis: StripAxis) -> usize {
        match axis {
            StripAxis::Columns => geometry.cols,
            StripAxis::Rows => geometry.rows,
        }
    }

    /// Block index of element (row, col).
    pub fn block_of(&self, row: usize, col: usize) -> usize {
        let line = match self.axis {
            StripAxis::Columns => col,
            StripAxis::Rows => row,
        };
        self.blocks
            .iter()
            .position(|b| b.contains(&line))
            .expect("blocks partition every line")
    }
}

/// Beamwidth (degrees) of a strip that is `lines` elements wide.
pub fn strip_beamwidth_deg(lines: usize, spacing: f64) -> f64 {
    (BEAMWIDTH_FACTOR / (lines as f64 * spacing)).to_degrees()
}

/// Number of sub-arrays for a trajectory span.
///
/// Starting from k = 1, recompute `k = ceil(span / beamwidth(lines / k))`
/// until it repeats or hits `k_max`. When the update cycles without
/// settling, the largest k in the cycle is used.
pub fn select_k(lines: usize, spacing: f64, span_deg: f64, k_max: usize) -> usize {
    let k_max = k_max.clamp(1, lines.max(1));
    let next = |k: usize| {
        let per_block = (lines / k).max(1);
        let raw = (span_deg / strip_beamwidth_deg(per_block, spacing)).ceil();
        (raw.max(1.0) as usize).min(k_max)
    };
    let mut seen = vec![1usize];
    let mut k = 1;
    loop {
        let k_new = next(k);
        if k_new == k || k_new == k_max {
            return k_new;
        }
        if let Some(pos) = seen.iter().position(|&s| s == k_new) {
            return seen[pos..].iter().copied().max().unwrap_or(k_new);
        }
        seen.push(k_new);
        k = k_new;
    }
}

fn choose_axis(trajectory: &Trajectory, policy: AxisPolicy) -> StripAxis {
    match policy {
        AxisPolicy::Fixed(axis) => axis,
        AxisPolicy::Auto => {
            let (mut y_lo, mut y_hi, mut z_lo, mut z_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for i in 0..=16 {
                let u = trajectory.local_vector_at(i as f64 / 16.0);
                y_lo = y_lo.min(u[1]);
                y_hi = y_hi.max(u[1]);
                z_lo = z_lo.min(u[2]);
                z_hi = z_hi.max(u[2]);
            }
            if z_hi - z_lo > y_hi - y_lo {
                StripAxis::Rows
            } else {
                StripAxis::Columns
            }
        }
    }
}

/// Sum over a set of lines of `exp(j 2π offset(line) * delta)`.
fn line_sum(geometry: &ArrayGeometry, axis: StripAxis, lines: Range<usize>, delta: f64) -> Complex64 {
    lines
        .map(|l| {
            let off = match axis {
                StripAxis::Columns => geometry.col_offset(l),
                StripAxis::Rows => geometry.row_offset(l),
            };
            Complex64::cis(2.0 * std::f64::consts::PI * off * delta)
        })
        .sum()
}

/// Far field at `u` of one block steered to `target` (no block offset).
fn block_field(
    geometry: &ArrayGeometry,
    axis: StripAxis,
    block: &Range<usize>,
    target: Vec3,
    u: Vec3,
) -> Complex64 {
    let a = 1.0 / (geometry.element_count() as f64).sqrt();
    let (dy, dz) = (u[1] - target[1], u[2] - target[2]);
    let (cols, rows) = match axis {
        StripAxis::Columns => (block.clone(), 0..geometry.rows),
        StripAxis::Rows => (0..geometry.cols, block.clone()),
    };
    a * line_sum(geometry, StripAxis::Columns, cols, dy) * line_sum(geometry, StripAxis::Rows, rows, dz)
}

/// Plan with a given number of blocks along a given axis.
pub fn plan_with_k(
    geometry: &ArrayGeometry,
    trajectory: &Trajectory,
    k: usize,
    axis: StripAxis,
) -> Result<SubArrayPlan> {
    geometry.validate()?;
    let lines = SubArrayPlan::line_count(geometry, axis);
    if k == 0 || k > lines {
        return Err(Error::InvalidInput(format!(
            "cannot cut {lines} lines into {k} blocks"
        )));
    }
    let per_block = lines / k;
    let blocks: Vec<Range<usize>> = (0..k)
        .map(|i| {
            let end = if i + 1 == k { lines } else { (i + 1) * per_block };
            i * per_block..end
        })
        .collect();
    let target_vecs: Vec<Vec3> = (0..k)
        .map(|i| trajectory.local_vector_at((i as f64 + 0.5) / k as f64))
        .collect();
    let cross_vecs: Vec<Vec3> = (1..k)
        .map(|i| trajectory.local_vector_at(i as f64 / k as f64))
        .collect();

    let mut offsets = vec![0.0; k];
    for i in 1..k {
        let u = cross_vecs[i - 1];
        let accumulated: Complex64 = (0..i)
            .map(|j| {
                block_field(geometry, axis, &blocks[j], target_vecs[j], u) * Complex64::cis(offsets[j])
            })
            .sum();
        let own = block_field(geometry, axis, &blocks[i], target_vecs[i], u);
        offsets[i] = if own.norm() < NULL_FIELD || accumulated.norm() < NULL_FIELD {
            0.0
        } else {
            accumulated.arg() - own.arg()
        };
    }

    Ok(SubArrayPlan {
        k,
        axis,
        blocks,
        targets: target_vecs.iter().map(|&v| Direction::from_unit_vector(v)).collect(),
        crossovers: cross_vecs.iter().map(|&v| Direction::from_unit_vector(v)).collect(),
        offsets,
    })
}

/// Plans column strips with the k-selection rule.
pub fn plan_subarrays(geometry: &ArrayGeometry, trajectory: &Trajectory, k_max: usize) -> Result<SubArrayPlan> {
    plan_subarrays_with(
        geometry,
        trajectory,
        &CovrageParams {
            k_max,
            axis: AxisPolicy::Fixed(StripAxis::Columns),
        },
    )
}

pub fn plan_subarrays_with(
    geometry: &ArrayGeometry,
    trajectory: &Trajectory,
    params: &CovrageParams,
) -> Result<SubArrayPlan> {
    let axis = choose_axis(trajectory, params.axis);
    let lines = SubArrayPlan::line_count(geometry, axis);
    let k = select_k(lines, geometry.spacing, trajectory.span_deg, params.k_max);
    plan_with_k(geometry, trajectory, k, axis)
}

/// Element phases for a plan: steering towards each block's target plus the
/// block offset.
pub fn synthesize_awv(geometry: &ArrayGeometry, plan: &SubArrayPlan) -> Result<Awv> {
    if plan.k != plan.blocks.len() || plan.k != plan.targets.len() || plan.k != plan.offsets.len() {
        return Err(Error::Structure("sub-array plan lists disagree in length".into()));
    }
    let targets: Vec<Vec3> = plan.targets.iter().map(|d| d.to_unit_vector()).collect();
    let mut phases = Vec::with_capacity(geometry.element_count());
    for r in 0..geometry.rows {
        for c in 0..geometry.cols {
            let b = plan.block_of(r, c);
            phases.push(-geometry.path_phase(r, c, targets[b]) + plan.offsets[b]);
        }
    }
    Ok(Awv { phases })
}

/// Full CoVRage step: trajectory from the two poses, plan, AWV.
pub fn covrage_beam(
    geometry: &ArrayGeometry,
    pose_now: &Pose,
    pose_pred: &Pose,
    ap_position: Vec3,
    params: &CovrageParams,
) -> Result<Awv> {
    // same arithmetic path as ap_direction_in_hmd_frame so the static case is exact
    local_unit_vector_to(pose_now, ap_position)?;
    let trajectory = Trajectory::from_poses(pose_now, pose_pred, ap_position)?;
    let plan = plan_subarrays_with(geometry, &trajectory, params)?;
    synthesize_awv(geometry, &plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{steering_phases, ArrayResponse};
    use crate::geometry::ap_direction_in_hmd_frame;
    use approx::assert_abs_diff_eq;

    fn yaw_trajectory(from_deg: f64, to_deg: f64) -> Trajectory {
        Trajectory::new(
            Quaternion::yaw(from_deg.to_radians()),
            Quaternion::yaw(to_deg.to_radians()),
            [1.0, 0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn zero_span_gives_single_block() {
        let g = ArrayGeometry::new(64, 64);
        let t = yaw_trajectory(15.0, 15.0);
        assert_eq!(t.span_deg, 0.0);
        let plan = plan_subarrays(&g, &t, 8).unwrap();
        assert_eq!(plan.k, 1);
        assert_eq!(plan.blocks, vec![0..64]);
        assert_eq!(plan.offsets, vec![0.0]);
        assert_abs_diff_eq!(plan.targets[0].azimuth, -15.0, epsilon = 1e-9);
    }

    #[test]
    fn forty_degree_span_saturates() {
        let g = ArrayGeometry::new(64, 64);
        assert_abs_diff_eq!(strip_beamwidth_deg(16, 0.5), 6.346, epsilon = 1e-3);
        assert_abs_diff_eq!(strip_beamwidth_deg(64, 0.5), 1.586, epsilon = 1e-3);
        let t = yaw_trajectory(-20.0, 20.0);
        assert_abs_diff_eq!(t.span_deg, 40.0, epsilon = 1e-9);
        assert_eq!(plan_subarrays(&g, &t, 8).unwrap().k, 8);
    }

    #[test]
    fn k_rule_hand_iterations() {
        // 64 lines: beamwidth 1.586 deg at k = 1, 12.69 deg at k = 8
        assert_eq!(select_k(64, 0.5, 0.0, 8), 1);
        assert_eq!(select_k(64, 0.5, 1.5, 8), 1);
        // 3 deg: 1 -> 2 -> ceil(3 / 3.17) = 1 -> cycle {1, 2} -> 2
        assert_eq!(select_k(64, 0.5, 3.0, 8), 2);
        assert_eq!(select_k(64, 0.5, 100.0, 8), 8);
        assert_eq!(select_k(4, 0.5, 100.0, 8), 4);
    }

    #[test]
    fn four_blocks_use_midpoints() {
        let g = ArrayGeometry::new(64, 64);
        let t = yaw_trajectory(-20.0, 20.0);
        let plan = plan_with_k(&g, &t, 4, StripAxis::Columns).unwrap();
        assert_eq!(plan.blocks, vec![0..16, 16..32, 32..48, 48..64]);
        for (i, s) in [0.125, 0.375, 0.625, 0.875].iter().enumerate() {
            assert!(plan.targets[i].angle_to(&t.direction_at(*s)) < 1e-6);
        }
        let uneven = plan_with_k(&g, &t, 3, StripAxis::Columns).unwrap();
        assert_eq!(uneven.blocks, vec![0..21, 21..42, 42..64]);
    }

    #[test]
    fn single_block_equals_steering() {
        let g = ArrayGeometry::new(16, 16);
        let t = yaw_trajectory(5.0, 5.5);
        let plan = plan_with_k(&g, &t, 1, StripAxis::Columns).unwrap();
        let awv = synthesize_awv(&g, &plan).unwrap();
        assert_eq!(awv, steering_phases(&g, plan.targets[0]));
    }

    #[test]
    fn static_pose_is_full_array_steering() {
        let g = ArrayGeometry::new(64, 64);
        let pose = Pose::new(0.0, [0.0, 0.0, 1.7], Quaternion::IDENTITY);
        let ap = [5.0, 0.0, 1.7];
        let awv = covrage_beam(&g, &pose, &pose, ap, &CovrageParams::default()).unwrap();
        let resp = ArrayResponse::new(&g, &awv).unwrap();
        assert_abs_diff_eq!(resp.gain_db(Direction::new(0.0, 0.0)), 36.123_599_5, epsilon = 1e-6);

        let tilted = Pose::new(0.0, [1.0, -2.0, 1.7], Quaternion::from_yaw_pitch_roll(0.3, -0.7, 0.2));
        let ap = [0.0, 0.0, 10.0];
        let awv = covrage_beam(&g, &tilted, &tilted, ap, &CovrageParams::default()).unwrap();
        let dir = ap_direction_in_hmd_frame(&tilted, ap).unwrap();
        assert_eq!(awv, steering_phases(&g, dir));
    }

    #[test]
    fn symmetric_pair_has_equal_target_gains() {
        let g = ArrayGeometry::new(64, 64);
        let t = yaw_trajectory(20.0, -20.0);
        let plan = plan_with_k(&g, &t, 2, StripAxis::Columns).unwrap();
        assert_abs_diff_eq!(plan.targets[0].azimuth, -10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(plan.targets[1].azimuth, 10.0, epsilon = 1e-9);
        let resp = ArrayResponse::new(&g, &synthesize_awv(&g, &plan).unwrap()).unwrap();
        let (a, b) = (resp.gain_db(plan.targets[0]), resp.gain_db(plan.targets[1]));
        assert!((a - b).abs() <= 0.1, "{a} vs {b}");
    }

    #[test]
    fn wider_coverage_costs_peak_gain() {
        let g = ArrayGeometry::new(64, 64);
        let t = yaw_trajectory(-20.0, 20.0);
        let peaks: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&k| {
                let plan = plan_with_k(&g, &t, k, StripAxis::Columns).unwrap();
                let resp = ArrayResponse::new(&g, &synthesize_awv(&g, &plan).unwrap()).unwrap();
                (0..=200)
                    .map(|i| resp.gain_db(t.direction_at(i as f64 / 200.0)))
                    .fold(f64::MIN, f64::max)
            })
            .collect();
        for w in peaks.windows(2) {
            assert!(w[1] < w[0], "{peaks:?}");
        }
    }

    #[test]
    fn wide_beam_beats_static_beam_over_the_trajectory() {
        let g = ArrayGeometry::new(64, 64);
        let t = yaw_trajectory(-15.0, 15.0);
        let plan = plan_subarrays(&g, &t, 8).unwrap();
        let cov = ArrayResponse::new(&g, &synthesize_awv(&g, &plan).unwrap()).unwrap();
        let fixed = ArrayResponse::new(&g, &steering_phases(&g, t.direction_at(0.0))).unwrap();
        let samples: Vec<Direction> = (0..33).map(|i| t.direction_at(i as f64 / 32.0)).collect();
        let min_cov = samples.iter().map(|d| cov.gain_db(*d)).fold(f64::MAX, f64::min);
        let min_fixed = samples.iter().map(|d| fixed.gain_db(*d)).fold(f64::MAX, f64::min);
        assert!(min_cov >= min_fixed, "{min_cov} < {min_fixed}");
    }

    #[test]
    fn auto_axis_follows_the_motion() {
        // pitching moves the AP along z in the HMD frame
        let pitch = Trajectory::new(
            Quaternion::from_yaw_pitch_roll(0.0, 0.2, 0.0),
            Quaternion::from_yaw_pitch_roll(0.0, -0.2, 0.0),
            [1.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(choose_axis(&pitch, AxisPolicy::Auto), StripAxis::Rows);
        assert_eq!(choose_axis(&yaw_trajectory(-10.0, 10.0), AxisPolicy::Auto), StripAxis::Columns);
        assert_eq!(
            choose_axis(&pitch, AxisPolicy::Fixed(StripAxis::Columns)),
            StripAxis::Columns
        );
    }

    #[test]
    fn malformed_plans_are_rejected() {
        let g = ArrayGeometry::new(8, 8);
        let t = yaw_trajectory(0.0, 10.0);
        assert!(plan_with_k(&g, &t, 0, StripAxis::Columns).is_err());
        assert!(plan_with_k(&g, &t, 9, StripAxis::Columns).is_err());
        let mut plan = plan_with_k(&g, &t, 2, StripAxis::Columns).unwrap();
        plan.offsets.pop();
        assert!(synthesize_awv(&g, &plan).is_err());
        assert!(Trajectory::new(Quaternion::IDENTITY, Quaternion::IDENTITY, [0.0; 3]).is_err());
    }
}
