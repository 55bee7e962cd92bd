use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

use mmxr::array::{sample_directions, steering_phases, ArrayGeometry, ArrayResponse, Awv};
use mmxr::channel::{snr, Endpoint, LinkBudgetConfig, McsEntry};
use mmxr::codebook::{
    generate_sector_codebook, quasi_omni_range, synthesize_quasi_omni, QuasiOmniParams, DEFAULT_SECTOR_ANGLES,
};
use mmxr::covrage::{plan_subarrays_with, plan_with_k, synthesize_awv, AxisPolicy, CovrageParams, StripAxis, Trajectory};
use mmxr::geometry::{
    ap_direction_in_hmd_frame, predict_pose, slerp, Direction, Pose, PoseSource, Predictor, Quaternion, Vec3,
};
use mmxr::macsim::{candidate_responses, select_sector, to_seconds, AccessPoint, FrameRecord};
use mmxr::metrics::summarize;
use mmxr::mobility::{generate_rotation_trace, generate_walk, Motion, Room, RotationTraceParams, WalkParams};

fn quaternion() -> impl Strategy<Value = Quaternion> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Quaternion::from_rotation_vector([x, y, z]))
}

fn position(extent: f64) -> impl Strategy<Value = Vec3> {
    (-extent..extent, -extent..extent, -extent..extent).prop_map(|(x, y, z)| [x, y, z])
}

fn q_angle(a: Quaternion, b: Quaternion) -> f64 {
    a.angle_to(&b)
}

/// Rotation matrix of a unit quaternion, written out element by element.
fn rotation_matrix(q: Quaternion) -> [[f64; 3]; 3] {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn mat_vec(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn mat_t_vec(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [0, 1, 2].map(|i| m[0][i] * v[0] + m[1][i] * v[1] + m[2][i] * v[2])
}

fn direction_of(v: Vec3) -> Direction {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    Direction::new(v[1].atan2(v[0]).to_degrees(), (v[2] / n).asin().to_degrees())
}

/// Gain by summing every element's phasor, positions in meters.
fn direct_gain_db(g: &ArrayGeometry, awv: &Awv, u: Vec3) -> f64 {
    let lambda = 299_792_458.0 / g.carrier_frequency;
    let d = g.spacing * lambda;
    let (yc, zc) = ((g.cols as f64 - 1.0) / 2.0, (g.rows as f64 - 1.0) / 2.0);
    let a = 1.0 / (g.element_count() as f64).sqrt();
    let mut sum = Complex64::new(0.0, 0.0);
    for r in 0..g.rows {
        for c in 0..g.cols {
            let (y, z) = ((c as f64 - yc) * d, (r as f64 - zc) * d);
            let path = 2.0 * PI * (y * u[1] + z * u[2]) / lambda;
            sum += Complex64::from_polar(a, awv.phases[r * g.cols + c] + path);
        }
    }
    20.0 * sum.norm().max(1e-15).log10()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quaternion_inverse_and_rotation(q in quaternion(), v in position(5.0)) {
        let id = q * q.inverse();
        prop_assert!(q_angle(id, Quaternion::IDENTITY) < 1e-9);
        let r = q.rotate(v);
        let n = |a: Vec3| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        prop_assert!((n(r) - n(v)).abs() < 1e-9);
        let back = q.inverse().rotate(r);
        for i in 0..3 {
            prop_assert!((back[i] - v[i]).abs() < 1e-9);
        }
        let m = mat_vec(&rotation_matrix(q), v);
        for i in 0..3 {
            prop_assert!((m[i] - r[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn slerp_endpoints_and_constant_speed(q0 in quaternion(), q1 in quaternion(), s in 0.0..0.9f64) {
        prop_assert!(q_angle(slerp(q0, q1, 0.0), q0) < 1e-7);
        prop_assert!(q_angle(slerp(q0, q1, 1.0), q1) < 1e-7);
        prop_assert!(q_angle(slerp(q0, q0, s), q0) < 1e-7);
        let delta = 0.1;
        let first = q_angle(slerp(q0, q1, 0.0), slerp(q0, q1, delta));
        let here = q_angle(slerp(q0, q1, s), slerp(q0, q1, s + delta));
        prop_assert!((first - here).abs() < 1e-6);
        prop_assert!((q_angle(q0, q1) * delta - here).abs() < 1e-6);
    }

    #[test]
    fn ap_direction_matches_rotation_matrix(q in quaternion(), hmd in position(5.0), ap in position(10.0), r in quaternion()) {
        prop_assume!((0..3).map(|i| (ap[i] - hmd[i]).powi(2)).sum::<f64>() > 0.01);
        let pose = Pose::new(0.0, hmd, q);
        let got = ap_direction_in_hmd_frame(&pose, ap).unwrap();
        let m = rotation_matrix(q);
        let want = direction_of(mat_t_vec(&m, [ap[0] - hmd[0], ap[1] - hmd[1], ap[2] - hmd[2]]));
        prop_assert!(got.angle_to(&want) < 1e-6);

        // rotating both the world and the headset leaves the local direction alone
        let both = Pose::new(0.0, r.rotate(hmd), r * q);
        let same = ap_direction_in_hmd_frame(&both, r.rotate(ap)).unwrap();
        prop_assert!(same.angle_to(&got) < 1e-6);

        // rotating only the headset rotates the local direction by the inverse
        let turned = Pose::new(0.0, hmd, q * r);
        let moved = ap_direction_in_hmd_frame(&turned, ap).unwrap();
        let expect = direction_of(r.inverse().rotate(got.to_unit_vector()));
        prop_assert!(moved.angle_to(&expect) < 1e-6);
    }

    #[test]
    fn gain_never_exceeds_coherent_sum(
        rows in 1usize..9,
        cols in 1usize..9,
        seed in any::<u64>(),
        az in -180.0..180.0f64,
        el in -90.0..90.0f64,
    ) {
        let g = ArrayGeometry::new(rows, cols);
        let n = g.element_count();
        let phases: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 7) >> 11) as f64 * 1e-3) % (2.0 * PI)).collect();
        let awv = Awv::new(phases).unwrap();
        let d = Direction::new(az, el);
        let resp = ArrayResponse::new(&g, &awv).unwrap();
        let bound = 10.0 * (n as f64).log10();
        prop_assert!(resp.gain_db(d) <= bound + 1e-9);
        prop_assert!((resp.gain_db(d) - direct_gain_db(&g, &awv, d.to_unit_vector())).abs() < 1e-6);
        let steered = ArrayResponse::new(&g, &steering_phases(&g, d)).unwrap();
        prop_assert!((steered.gain_db(d) - bound).abs() < 1e-9);
    }

    #[test]
    fn global_phase_leaves_gain_unchanged(
        seed in any::<u64>(),
        shift in -10.0..10.0f64,
        az in -180.0..180.0f64,
        el in -90.0..90.0f64,
    ) {
        let g = ArrayGeometry::new(8, 8);
        let phases: Vec<f64> = (0..64).map(|i| ((seed >> (i % 48)) & 0xffff) as f64 * 1e-4).collect();
        let a = ArrayResponse::new(&g, &Awv::new(phases.clone()).unwrap()).unwrap();
        let b = ArrayResponse::new(&g, &Awv::new(phases.iter().map(|p| p + shift).collect()).unwrap()).unwrap();
        let d = Direction::new(az, el);
        let (ga, gb) = (a.gain_db(d), b.gain_db(d));
        prop_assume!(ga > -100.0);
        prop_assert!((ga - gb).abs() <= 1e-9);
    }

    #[test]
    fn perfect_alignment_clears_the_threshold(d in 0.3..10.0f64, q in quaternion()) {
        let g = ArrayGeometry::new(64, 64);
        let ap = Pose::new(0.0, [0.0, 0.0, 3.0], AccessPoint::facing_down());
        let hmd = Pose::new(0.0, [d, 0.0, 3.0 - d.min(2.0)], q);
        let ap_dir = ap_direction_in_hmd_frame(&ap, hmd.position).unwrap();
        let hmd_dir = ap_direction_in_hmd_frame(&hmd, ap.position).unwrap();
        let ap_beam = ArrayResponse::new(&ArrayGeometry::new(8, 8), &steering_phases(&ArrayGeometry::new(8, 8), ap_dir)).unwrap();
        let hmd_beam = ArrayResponse::new(&g, &steering_phases(&g, hmd_dir)).unwrap();
        let value = snr(
            &LinkBudgetConfig::default(),
            Endpoint { pose: &ap, beam: &ap_beam },
            Endpoint { pose: &hmd, beam: &hmd_beam },
        ).unwrap();
        prop_assert!(value >= McsEntry::MCS21.snr_threshold);
    }
}

#[test]
fn steered_maximum_lies_on_the_grid_cell() {
    for (rows, cols, az, el) in [(8, 8, 23.4, -11.7), (8, 16, -41.2, 30.3), (16, 16, 5.5, 5.5), (12, 8, -70.1, 2.2)] {
        let g = ArrayGeometry::new(rows, cols);
        let resp = ArrayResponse::new(&g, &steering_phases(&g, Direction::new(az, el))).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for a in -90..=90 {
            for e in -89..=89 {
                let v = resp.gain_db(Direction::new(a as f64, e as f64));
                if v > best.0 {
                    best = (v, a as f64, e as f64);
                }
            }
        }
        assert!((best.1 - az).abs() <= 1.0 && (best.2 - el).abs() <= 1.0, "{rows}x{cols}: {best:?}");
    }
}

#[test]
fn oracle_prediction_reproduces_the_trace() {
    let trace = generate_rotation_trace(&RotationTraceParams { duration: 3.0, ..RotationTraceParams::default() }).unwrap();
    let motion = Motion::new(trace.clone(), None);
    for sample in trace.samples.iter().step_by(97).filter(|s| s.t + 0.1 <= 3.0) {
        let now = motion.pose_at(sample.t);
        let got = predict_pose(&[now], 0.1, Predictor::Oracle, Some(&motion)).unwrap();
        let want = motion.pose_at(sample.t + 0.1);
        assert!(q_angle(got.orientation, want.orientation) < 1e-12);
        assert_eq!(got.position, want.position);
        let here = predict_pose(&[now], 0.0, Predictor::Oracle, Some(&motion)).unwrap();
        assert!(q_angle(here.orientation, sample.orientation) < 1e-9);
    }
}

/// Random AP mounts and headset positions: the sweep winner is the candidate
/// that maximizes the full link SNR towards a quasi-omni listener, with the
/// gains summed element by element.
#[test]
fn sector_sweep_matches_brute_force() {
    let g = ArrayGeometry::new(8, 8);
    let qo = synthesize_quasi_omni(&g, &QuasiOmniParams::default()).unwrap();
    let cb = generate_sector_codebook(&g, &DEFAULT_SECTOR_ANGLES, &DEFAULT_SECTOR_ANGLES, qo.clone()).unwrap();
    assert_eq!(cb.candidate_count(), 37);
    let responses = candidate_responses(&cb).unwrap();
    let listen = ArrayResponse::new(&g, &qo).unwrap();
    let cfg = LinkBudgetConfig::default();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (quaternion(), position(4.0), quaternion());
    for _ in 0..100 {
        let (ap_q, hmd_p, hmd_q) = strategy.new_tree(&mut runner).unwrap().current();
        let ap = Pose::new(0.0, [0.0, 0.0, 5.0], ap_q);
        let hmd = Pose::new(0.0, hmd_p, hmd_q);
        let towards = mmxr::geometry::local_unit_vector_to(&ap, hmd.position).unwrap();
        let chosen = select_sector(&responses, towards);

        let mut best = (0, f64::NEG_INFINITY);
        for (id, resp) in responses.iter().enumerate() {
            let value = snr(&cfg, Endpoint { pose: &ap, beam: resp }, Endpoint { pose: &hmd, beam: &listen }).unwrap();
            if value > best.1 {
                best = (id, value);
            }
        }
        assert_eq!(chosen, best.0);
        let direct: Vec<f64> = (0..37).map(|id| direct_gain_db(&g, cb.candidate(id).unwrap(), towards)).collect();
        let top = direct.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(top - direct[chosen] < 1e-9);
    }
}

#[test]
fn quasi_omni_beats_zero_phase_across_seeds() {
    let g = ArrayGeometry::new(4, 4);
    for seed in 1..=10 {
        let params = QuasiOmniParams { seed, ..QuasiOmniParams::default() };
        let awv = synthesize_quasi_omni(&g, &params).unwrap();
        let optimized = quasi_omni_range(&g, &awv, &params).unwrap();
        let zero = quasi_omni_range(&g, &Awv::zeros(16), &params).unwrap();
        assert!(optimized < zero, "seed {seed}: {optimized} vs {zero}");
    }
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    (quaternion(), (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 0.0..1.0f64, position(1.0))
        .prop_filter_map("degenerate", |(q, axis, angle, d)| {
            let n = (axis.0 * axis.0 + axis.1 * axis.1 + axis.2 * axis.2).sqrt();
            if n < 1e-3 {
                return None;
            }
            let step = Quaternion::from_axis_angle([axis.0 / n, axis.1 / n, axis.2 / n], angle);
            // AP somewhere in front of the headset
            let forward = q.rotate([1.0, d[1] * 0.5, d[2] * 0.5]);
            Trajectory::new(q, q * step, forward).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn single_block_is_full_steering(t in trajectory()) {
        let g = ArrayGeometry::new(32, 32);
        for axis in [StripAxis::Columns, StripAxis::Rows] {
            let plan = plan_with_k(&g, &t, 1, axis).unwrap();
            prop_assert_eq!(synthesize_awv(&g, &plan).unwrap(), steering_phases(&g, plan.targets[0]));
        }
    }

    #[test]
    fn crossover_alignment_never_loses_gain(t in trajectory()) {
        let g = ArrayGeometry::new(64, 64);
        let plan = plan_with_k(&g, &t, 2, StripAxis::Columns).unwrap();
        let aligned = ArrayResponse::new(&g, &synthesize_awv(&g, &plan).unwrap()).unwrap();
        let mut unaligned_plan = plan.clone();
        unaligned_plan.offsets[1] = 0.0;
        let unaligned = ArrayResponse::new(&g, &synthesize_awv(&g, &unaligned_plan).unwrap()).unwrap();
        let cross = plan.crossovers[0];
        prop_assert!(aligned.gain_db(cross) >= unaligned.gain_db(cross) - 1e-9);
    }

    #[test]
    fn targets_lie_on_the_rotation_arc(t in trajectory(), k in 1usize..9) {
        let g = ArrayGeometry::new(64, 64);
        let plan = plan_with_k(&g, &t, k, StripAxis::Columns).unwrap();
        let ap = t.d_world;
        for (i, target) in plan.targets.iter().enumerate() {
            let s = (i as f64 + 0.5) / k as f64;
            let pose = Pose::new(0.0, [0.0; 3], slerp(t.q_now, t.q_pred, s));
            let on_arc = ap_direction_in_hmd_frame(&pose, ap).unwrap();
            prop_assert!(target.angle_to(&on_arc) < 1e-6);
        }
    }

    #[test]
    fn walks_stay_strictly_inside(seed in any::<u64>(), speed in 0.1..3.0f64, w in 2.0..30.0f64, d in 2.0..30.0f64) {
        let room = Room::centered(w, d);
        let walk = generate_walk(&WalkParams { room, speed, step_interval: 0.5, duration: 60.0, seed }).unwrap();
        for i in 0..=1200 {
            let p = walk.position_at(i as f64 * 0.05);
            prop_assert!(p[0] > room.x_min && p[0] < room.x_max && p[1] > room.y_min && p[1] < room.y_max);
        }
    }
}

/// Mean power gain of a pattern over the directions it was synthesized on.
fn mean_gain_db(g: &ArrayGeometry, awv: &Awv, params: &QuasiOmniParams) -> f64 {
    let resp = ArrayResponse::new(g, awv).unwrap();
    let dirs = sample_directions(params.n_samples, params.seed, params.sphere_uniform);
    let mean = dirs.iter().map(|d| 10f64.powf(resp.gain_db(*d) / 10.0)).sum::<f64>() / dirs.len() as f64;
    10.0 * mean.log10()
}

#[test]
fn coverage_clears_quasi_omni_level_by_ten_db() {
    let g = ArrayGeometry::new(64, 64);
    let params = QuasiOmniParams { max_iters: 1, ..QuasiOmniParams::default() };
    let qo = synthesize_quasi_omni(&g, &params).unwrap();
    let level = mean_gain_db(&g, &qo, &params);
    assert!(level.abs() < 3.0, "{level}");
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let cases = (-60.0..60.0f64, -30.0..30.0f64, -60.0..60.0f64, any::<bool>());
    for _ in 0..40 {
        let (el, az, turn, pitch) = cases.new_tree(&mut runner).unwrap().current();
        // headset turns about one of its own array axes, so the path runs along the strips
        let (ap, step) = if pitch {
            (Direction::new(el, az), Quaternion::from_axis_angle([0.0, 1.0, 0.0], turn.to_radians()))
        } else {
            (Direction::new(az, el), Quaternion::yaw(turn.to_radians()))
        };
        let t = Trajectory::new(Quaternion::IDENTITY, step, ap.to_unit_vector()).unwrap();
        assert!(t.span_deg <= 60.0 + 1e-9);
        let params = CovrageParams { k_max: 8, axis: AxisPolicy::Auto };
        let plan = plan_subarrays_with(&g, &t, &params).unwrap();
        let beam = ArrayResponse::new(&g, &synthesize_awv(&g, &plan).unwrap()).unwrap();
        let worst = (0..=50)
            .map(|i| beam.gain_db_unit(t.local_vector_at(i as f64 / 50.0)))
            .fold(f64::INFINITY, f64::min);
        assert!(worst >= level + 10.0, "span {:.1} k {}: {worst:.2} dB vs level {level:.2} dB", t.span_deg, plan.k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn merged_reliability_is_weighted(
        a in prop::collection::vec((0u32..40_000, any::<bool>()), 1..60),
        b in prop::collection::vec((0u32..40_000, any::<bool>()), 1..60),
    ) {
        let deadline = 0.020;
        let build = |items: &[(u32, bool)], base: u64| -> Vec<FrameRecord> {
            items.iter().enumerate().map(|(i, &(lat_us, done))| {
                let created_ns = (base + i as u64) as i64 * 10_000_000;
                let completed = done.then(|| to_seconds(created_ns + lat_us as i64 * 1000));
                let created = to_seconds(created_ns);
                FrameRecord {
                    frame_id: base + i as u64,
                    created,
                    completed,
                    delivered: done && lat_us as f64 * 1e-6 <= deadline,
                }
            }).collect()
        };
        let (ra, rb) = (build(&a, 0), build(&b, 1000));
        let (sa, sb) = (summarize(&ra).unwrap(), summarize(&rb).unwrap());
        let merged: Vec<FrameRecord> = ra.iter().chain(&rb).cloned().collect();
        let sm = summarize(&merged).unwrap();
        let weighted = (sa.reliability * ra.len() as f64 + sb.reliability * rb.len() as f64) / merged.len() as f64;
        prop_assert!((sm.reliability - weighted).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&sm.reliability));
        prop_assert!((sm.cdf_at(deadline) - sm.reliability).abs() < 1e-12);
        prop_assert!(sm.latency_cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }
}
