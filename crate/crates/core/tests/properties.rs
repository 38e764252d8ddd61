use std::collections::BTreeMap;

use nalgebra::{Point2, Vector3};
use proptest::prelude::*;

use ibvs_grasp::camera::{camera_matrix, project, solve_xy, CameraModel};
use ibvs_grasp::features::{detect, robust_match, MatchConfig, NoiseConfig};
use ibvs_grasp::geometry::{exp_twist, velocity_transform, Pose, RpyPose, SpatialVelocity};
use ibvs_grasp::servo::{continuity_filter, ibvs_step, mean_pixel_error, FilterConfig, GainConfig, IbvsGoal};
use ibvs_grasp::sim::{initial_world, planar_pose, stream_rng, ObjectConfig, Scenario, SceneObject, Sensor};

fn pose() -> impl Strategy<Value = Pose> {
    (
        -3.0..3.0f64,
        -1.4..1.4f64,
        -3.0..3.0f64,
        prop::array::uniform3(-1.0..1.0f64),
    )
        .prop_map(|(r, p, y, t)| {
            RpyPose {
                x: t[0],
                y: t[1],
                z: t[2],
                roll: r,
                pitch: p,
                yaw: y,
            }
            .to_pose()
        })
}

fn twist(scale: f64) -> impl Strategy<Value = SpatialVelocity> {
    prop::array::uniform6(-scale..scale)
        .prop_map(|a| SpatialVelocity::new(Vector3::new(a[0], a[1], a[2]), Vector3::new(a[3], a[4], a[5])))
}

fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
    (a.to_homogeneous() - b.to_homogeneous()).amax() < tol
}

proptest! {
    #[test]
    fn compose_is_associative(a in pose(), b in pose(), c in pose()) {
        prop_assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-12));
    }

    #[test]
    fn inverse_cancels(a in pose()) {
        prop_assert!(close(&a.compose(&a.inverse()), &Pose::identity(), 1e-12));
    }

    #[test]
    fn rpy_round_trip(a in pose()) {
        prop_assert!(close(&RpyPose::from_pose(&a).to_pose(), &a, 1e-9));
    }

    #[test]
    fn exp_of_negated_twist_inverts(t in twist(2.0), dt in 0.0..1.0f64) {
        let neg = SpatialVelocity::from_vector(&-t.to_vector());
        prop_assert!(close(&exp_twist(&t, dt).compose(&exp_twist(&neg, dt)), &Pose::identity(), 1e-12));
    }

    #[test]
    fn velocity_transform_composes(a in pose(), b in pose(), t in twist(1.0)) {
        let lhs = velocity_transform(&a.compose(&b), &t).to_vector();
        let rhs = velocity_transform(&a, &velocity_transform(&b, &t)).to_vector();
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn back_projection_inverts_projection(
        yaw in -3.1..3.1f64,
        tilt in -0.4..0.4f64,
        h in 0.2..1.0f64,
        x in -0.1..0.1f64,
        y in -0.1..0.1f64,
        z in 0.0..0.1f64,
    ) {
        let cam = CameraModel::default();
        let mut p = Pose::rot_z(yaw).compose(&Pose::rot_x(std::f64::consts::PI + tilt));
        p.translation = Vector3::new(0.0, 0.0, h + 0.1);
        let point = Vector3::new(x, y, z);
        let px = project(&cam, &p, &point).unwrap().pixel;
        let xy = solve_xy(&camera_matrix(&cam, &p), &px, z).unwrap();
        prop_assert!((xy.x - x).abs() < 1e-9 && (xy.y - y).abs() < 1e-9);
    }

    #[test]
    fn filter_step_is_slew_bounded(prev in twist(1.0), raw in twist(5.0), tau in 0.0..1.0f64, accel in 0.1..5.0f64) {
        let cfg = FilterConfig { tau, max_accel: accel };
        let dt = 1.0 / 30.0;
        let out = continuity_filter(&prev, &raw, dt, &cfg).to_vector();
        let p = prev.to_vector();
        let r = raw.to_vector();
        for i in 0..6 {
            prop_assert!((out[i] - p[i]).abs() <= accel * dt * (1.0 + 1e-12));
            // Never overshoots the raw command.
            prop_assert!((out[i] - p[i]) * (r[i] - p[i]) >= 0.0);
            prop_assert!((out[i] - p[i]).abs() <= (r[i] - p[i]).abs() + 1e-15);
        }
    }

    #[test]
    fn ibvs_is_zero_at_goal_and_linear_in_gain(
        pts in prop::collection::vec((20.0..620.0f64, 20.0..460.0f64), 4..12),
        shift in (-20.0..20.0f64, -20.0..20.0f64),
        lambda in 0.1..3.0f64,
    ) {
        let cam = CameraModel::default();
        let goal = IbvsGoal {
            pixels: pts.iter().enumerate().map(|(i, &(u, v))| (i as u32, Point2::new(u, v))).collect(),
            fixed_depth: 0.05,
            points: BTreeMap::new(),
        };
        let he = Pose::identity();
        let gains = GainConfig { lambda_i: lambda, ..Default::default() };
        if let Ok(v) = ibvs_step(&goal.pixels, &goal, &gains, &he, &cam) {
            prop_assert!(v.to_vector().amax() < 1e-9);
        }
        let cur: BTreeMap<u32, Point2<f64>> =
            goal.pixels.iter().map(|(k, p)| (*k, Point2::new(p.x + shift.0, p.y + shift.1))).collect();
        let unit = GainConfig { lambda_i: 1.0, ..Default::default() };
        if let (Ok(a), Ok(b)) = (ibvs_step(&cur, &goal, &gains, &he, &cam), ibvs_step(&cur, &goal, &unit, &he, &cam)) {
            prop_assert!((a.to_vector() - b.to_vector() * lambda).amax() < 1e-9 * (1.0 + b.to_vector().amax()));
        }
        let e = mean_pixel_error(&cur, &goal).unwrap();
        prop_assert!((e - shift.0.hypot(shift.1)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matching_is_one_to_one_and_one_per_cell(seed in 0u64..10_000, dz in 0.0..0.1f64, yaw in -0.2..0.2f64) {
        let sc = Scenario::experiment2_static();
        let world = initial_world(&sc, seed);
        let mut rng = stream_rng(seed, 2);
        let cam = sc.camera;
        let pose = world.camera_pose();
        let reference = detect(&world.object, &cam, &pose, &sc.noise, true, 0, &mut rng);
        let moved = pose.compose(&Pose::rot_z(yaw)).compose(&Pose::from_translation(0.0, 0.0, dz));
        let current = detect(&world.object, &cam, &moved, &sc.noise, false, 1, &mut rng);
        let cfg = MatchConfig::default();
        if let Ok(out) = robust_match(&reference, &current, &cfg) {
            let m = out.matches();
            prop_assert!(m.is_one_to_one());
            let mut cells = std::collections::BTreeSet::new();
            for x in m.iter() {
                let p = current.features[x.cur_idx].p;
                let c = ((p.x * 20.0 / 640.0) as usize).min(19);
                let r = ((p.y * 20.0 / 480.0) as usize).min(19);
                prop_assert!(cells.insert((c, r)));
            }
            let counts = out.counts();
            prop_assert!(counts.ratio >= counts.dedup && counts.dedup >= counts.loop_check);
            prop_assert!(counts.loop_check >= counts.ransac && counts.ransac >= counts.grid);
        }
    }

    #[test]
    fn world_steps_are_deterministic(seed in 0u64..10_000, cmds in prop::collection::vec(twist(0.2), 1..40)) {
        let sc = Scenario::experiment2_dynamic();
        let run = || {
            let mut w = initial_world(&sc, seed);
            for c in &cmds {
                w.step(c, 1.0 / 30.0);
            }
            w
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn sensed_depth_respects_minimum_range(h in 0.02..0.6f64, x in -0.1..0.1f64, seed in 0u64..1000) {
        let cam = CameraModel::default();
        let mut rng = stream_rng(seed, 0);
        let obj = SceneObject::generate(&ObjectConfig::default(), planar_pose(0.0, 0.0, 0.0), &mut rng);
        let mut p = Pose::rot_x(std::f64::consts::PI);
        p.translation = Vector3::new(x, 0.0, obj.height + h);
        let mut w = initial_world(&Scenario::default(), seed);
        w.object = obj;
        w.ee_pose = p.compose(&w.hand_eye.inverse());
        let mut sensor = Sensor::new(cam, NoiseConfig::default(), Default::default(), stream_rng(seed, 2));
        let obs = sensor.observe(&w, true);
        let depth = obs.depth.unwrap();
        prop_assert!(depth.values().iter().flatten().all(|&z| z >= cam.depth_min));
        prop_assert!(obs.features.features.iter().filter_map(|f| f.z).all(|z| z >= cam.depth_min));
        prop_assert!(obs.distance.is_none_or(|d| d >= cam.depth_min));
    }
}
