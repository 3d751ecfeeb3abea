mod common;

use std::collections::VecDeque;

use proptest::prelude::*;
use teleop_core::executor::{
    execute_task, grasp_service, release_service, tool_pose, EeController, ExecutorConfig, MoveOutcome, MoveRequest,
    Phase, TargetQueue, TaskRequest,
};
use teleop_core::kinematics::{forward_kinematics, ik_solve, top_down_pose, IkParams, JointState};
use teleop_core::settle::settle;
use teleop_core::{ObjectInstance, ObjectModel, Pose, SceneState, Vec3};

fn catalog() -> Vec<ObjectModel> {
    vec![
        ObjectModel::new("cube", Vec3::new(0.03, 0.03, 0.03), 0.1, 0.06).unwrap(),
        ObjectModel::new("slab", Vec3::new(0.06, 0.025, 0.05), 0.3, 0.05).unwrap(),
    ]
}

fn ready(objects: Vec<ObjectInstance>) -> (SceneState, ExecutorConfig) {
    let config = ExecutorConfig::default();
    let mut scene = common::scene(catalog(), objects);
    scene.joints = JointState::at_rest(common::ready_joints(&config.chain), 0.0);
    (scene, config)
}

fn mv(scene: &SceneState, id: &str, target: Pose) -> MoveRequest {
    MoveRequest { instance_id: id.into(), initial_pose: scene.instance(id).unwrap().actual_pose, target_pose: target }
}

fn three_boxes() -> Vec<ObjectInstance> {
    vec![
        ObjectInstance::new("a", "cube", Pose::from_xyz_yaw(0.40, -0.20, 0.03, 0.2)),
        ObjectInstance::new("b", "slab", Pose::from_xyz_yaw(0.55, 0.00, 0.05, -0.5)),
        ObjectInstance::new("c", "cube", Pose::from_xyz_yaw(0.45, 0.20, 0.03, 1.0)),
    ]
}

fn rearrange(scene: &SceneState) -> TaskRequest {
    TaskRequest {
        moves: vec![
            mv(scene, "a", Pose::from_xyz_yaw(0.35, 0.05, 0.03, 0.0)),
            mv(scene, "c", Pose::from_xyz_yaw(0.60, -0.20, 0.03, -0.7)),
            mv(scene, "b", Pose::from_xyz_yaw(0.50, 0.25, 0.05, 0.4)),
        ],
    }
}

#[test]
fn held_object_is_rigid_at_every_sample() {
    let (mut scene, config) = ready(three_boxes());
    let req = rearrange(&scene);
    let mut held_samples = 0;
    let mut grasp: Option<(String, Pose)> = None;
    let mut obs = |s: &SceneState| {
        let held = s.objects.iter().find(|o| o.held);
        match (held, &grasp) {
            (Some(o), None) => grasp = Some((o.instance_id.clone(), s.grasp_offset.unwrap())),
            (Some(o), Some((id, offset))) => {
                assert_eq!(&o.instance_id, id);
                assert_eq!(s.grasp_offset.as_ref(), Some(offset), "grasp transform changed");
                let tool = forward_kinematics(&config.chain, &s.joints.angles);
                let want = tool.compose(offset);
                assert!(o.actual_pose.position.distance(want.position) < 1e-12);
                assert!(o.actual_pose.orientation.angle_to(want.orientation) < 1e-9);
                held_samples += 1;
            }
            (None, _) => grasp = None,
        }
    };
    let report = execute_task(&mut scene, &config, &req, &mut obs).unwrap();
    assert!(report.success, "{report:?}");
    assert!(held_samples > 100);
}

#[test]
fn execution_is_deterministic() {
    let run = || {
        let (mut scene, config) = ready(three_boxes());
        let req = rearrange(&scene);
        let mut times = Vec::new();
        let report = execute_task(&mut scene, &config, &req, &mut |s: &SceneState| times.push(s.sim_time)).unwrap();
        (report, scene, times)
    };
    let (r1, s1, t1) = run();
    let (r2, s2, t2) = run();
    assert_eq!(r1, r2);
    assert_eq!(s1, s2);
    assert_eq!(t1.iter().map(|t| t.to_bits()).collect::<Vec<_>>(), t2.iter().map(|t| t.to_bits()).collect::<Vec<_>>());
}

#[test]
fn joint_states_are_published_at_fifty_hertz() {
    let (mut scene, config) = ready(three_boxes());
    let req = TaskRequest { moves: vec![mv(&scene, "a", Pose::from_xyz_yaw(0.35, 0.05, 0.03, 0.0))] };
    let mut stamps = Vec::new();
    let mut obs = |s: &SceneState| {
        if stamps.last() != Some(&s.joints.timestamp) {
            stamps.push(s.joints.timestamp);
        }
    };
    let report = execute_task(&mut scene, &config, &req, &mut obs).unwrap();
    assert!(report.success);
    // gaps only come from the gripper, which moves no joints
    let mut regular = 0;
    for w in stamps.windows(2) {
        let dt = w[1] - w[0];
        assert!(dt > 0.0);
        if (dt - 0.02).abs() < 1e-9 {
            regular += 1;
        }
    }
    assert!(regular as f64 > 0.95 * (stamps.len() - 1) as f64, "{regular} of {}", stamps.len());
}

#[test]
fn moved_objects_rest_where_settle_puts_their_targets() {
    let (mut scene, config) = ready(three_boxes());
    let before = scene.clone();
    let req = rearrange(&scene);
    let report = execute_task(&mut scene, &config, &req, &mut ()).unwrap();
    assert!(report.success, "{report:?}");
    let mut oracle = before;
    for m in &req.moves {
        // each target settles among the objects as they stand before that move
        let want = settle(&oracle, &m.instance_id, &m.target_pose, &config.settle).unwrap();
        oracle.instance_mut(&m.instance_id).unwrap().actual_pose = want.final_pose;
        let got = scene.instance(&m.instance_id).unwrap();
        assert!(got.actual_pose.position.distance(want.final_pose.position) < 1e-6, "{}", m.instance_id);
        assert!(got.actual_pose.orientation.angle_to(want.final_pose.orientation) < 1e-6);
        assert_eq!(got.ghost_pose, got.actual_pose);
    }
}

#[test]
fn stacking_lands_on_the_lower_box() {
    let (mut scene, config) = ready(vec![
        ObjectInstance::new("a", "cube", Pose::from_xyz_yaw(0.40, -0.20, 0.03, 0.3)),
        ObjectInstance::new("b", "slab", Pose::from_xyz_yaw(0.55, 0.10, 0.05, 0.0)),
    ]);
    let before = scene.clone();
    let target = Pose::from_xyz_yaw(0.55, 0.10, 0.13, 0.0);
    let req = TaskRequest { moves: vec![mv(&scene, "a", target)] };
    let report = execute_task(&mut scene, &config, &req, &mut ()).unwrap();
    assert!(report.success, "{report:?}");
    let want = settle(&before, "a", &target, &config.settle).unwrap();
    assert_eq!(report.moves[0].support, Some(want.support.clone()));
    assert!(scene.instance("a").unwrap().actual_pose.position.distance(want.final_pose.position) < 1e-6);
    let z = scene.instance("a").unwrap().actual_pose.position.z;
    assert!((z - 0.13).abs() < 1e-6, "{z}");
}

#[test]
fn grasp_happens_two_centimetres_below_the_top() {
    // box 0.10 tall: tool at 0.08 when the gripper starts closing
    let (mut scene, config) = ready(vec![ObjectInstance::new("b", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0))]);
    let req = TaskRequest { moves: vec![mv(&scene, "b", Pose::from_xyz_yaw(0.5, 0.2, 0.05, 0.0))] };
    let mut at_close = None;
    let mut obs = |s: &SceneState| {
        if at_close.is_none() && s.gripper_aperture < 0.085 {
            at_close = Some(forward_kinematics(&config.chain, &s.joints.angles).position);
        }
    };
    let report = execute_task(&mut scene, &config, &req, &mut obs).unwrap();
    assert!(report.success);
    let p = at_close.unwrap();
    assert!((p.z - 0.08).abs() < 1e-6, "{p:?}");
    assert!((p.x - 0.5).abs() < 1e-6 && p.y.abs() < 1e-6);
}

#[test]
fn empty_request_is_immediate_success() {
    let (mut scene, config) = ready(three_boxes());
    let before = scene.clone();
    let mut samples = 0;
    let report = execute_task(&mut scene, &config, &TaskRequest::default(), &mut |_: &SceneState| samples += 1).unwrap();
    assert!(report.success);
    assert!(report.moves.is_empty());
    assert_eq!(report.start_time, report.end_time);
    assert_eq!(scene, before);
    assert_eq!(samples, 0);
}

#[test]
fn collision_stops_the_task_at_a_safe_hover() {
    let (mut scene, config) = ready(three_boxes());
    let req = TaskRequest {
        moves: vec![
            // half inside b
            mv(&scene, "a", Pose::from_xyz_yaw(0.55, 0.06, 0.03, 0.0)),
            mv(&scene, "c", Pose::from_xyz_yaw(0.30, 0.20, 0.03, 0.0)),
        ],
    };
    let report = execute_task(&mut scene, &config, &req, &mut ()).unwrap();
    assert!(!report.success);
    assert_eq!(report.moves.len(), 1);
    assert_eq!(report.moves[0].outcome, MoveOutcome::Collision);
    let tool = tool_pose(&scene, &config.chain);
    // hover above the target, still holding the box
    assert!((tool.position.x - 0.55).abs() < 1e-3 && (tool.position.y - 0.06).abs() < 1e-3, "{tool:?}");
    assert!(tool.position.z > 0.15);
    assert!(scene.instance("a").unwrap().held);
    assert!(scene.joints.velocities.iter().all(|v| *v == 0.0));
    assert!(teleop_core::executor::collision_check(&scene, &config, None).is_none());
}

#[test]
fn phases_come_in_order_with_nondecreasing_stamps() {
    let (mut scene, config) = ready(three_boxes());
    let req = rearrange(&scene);
    let report = execute_task(&mut scene, &config, &req, &mut ()).unwrap();
    let order = [
        Phase::ApproachHover,
        Phase::DescendGrasp,
        Phase::Grasp,
        Phase::AscendFromGrasp,
        Phase::Transit,
        Phase::DescendPlace,
        Phase::Release,
        Phase::AscendFromPlace,
    ];
    let mut last = report.start_time;
    for m in &report.moves {
        assert_eq!(m.phases.iter().map(|p| p.phase).collect::<Vec<_>>(), order);
        for p in &m.phases {
            assert!(p.start >= last && p.end >= p.start);
            last = p.end;
        }
    }
    assert_eq!(last, report.end_time);
}

// streamed control

fn tick_for(ctl: &mut EeController, scene: &mut SceneState, config: &ExecutorConfig, q: &mut TargetQueue, seconds: f64) {
    let n = (seconds * config.joint_rate).round() as usize;
    for _ in 0..n {
        ctl.tick(scene, config, q);
    }
}

#[test]
fn single_target_converges() {
    let (mut scene, config) = ready(Vec::new());
    let target = top_down_pose(&Pose::from_xyz_yaw(0.55, 0.12, 0.0, 0.6), 0.0, 0.2);
    let mut q = TargetQueue::default();
    q.push(target);
    let mut ctl = EeController::new();
    tick_for(&mut ctl, &mut scene, &config, &mut q, 10.0);
    assert!(ctl.is_idle());
    let tool = tool_pose(&scene, &config.chain);
    assert!(tool.position.distance(target.position) < 1e-3);
    assert!(tool.orientation.angle_to(target.orientation) < 1e-2);
}

#[test]
fn no_pushes_hold_the_joints() {
    let (mut scene, config) = ready(Vec::new());
    let q0 = scene.joints.angles;
    let mut ctl = EeController::new();
    let mut q = TargetQueue::default();
    tick_for(&mut ctl, &mut scene, &config, &mut q, 3.0);
    assert_eq!(scene.joints.angles, q0);
    assert!((scene.sim_time - 3.0).abs() < 1e-9);
}

#[test]
fn tracks_a_line_within_two_centimetres() {
    let (mut scene, config) = ready(Vec::new());
    let mut ctl = EeController::new();
    let mut q = TargetQueue::default();
    let at = |s: f64| top_down_pose(&Pose::from_xyz_yaw(0.45, -0.15 + s, 0.0, 0.0), 0.0, 0.25);
    // settle on the start of the line
    q.push(at(0.0));
    tick_for(&mut ctl, &mut scene, &config, &mut q, 4.0);

    // 0.1 m/s, one pose per end-effector period, as a headset would stream
    let speed = 0.1;
    let dt = 1.0 / config.joint_rate;
    let per_push = (config.joint_rate / config.ee_rate).round() as usize;
    let mut worst: f64 = 0.0;
    let mut latest = at(0.0);
    for k in 0..(3.0 / dt) as usize {
        if k % per_push == 0 {
            latest = at(speed * k as f64 * dt);
            q.push(latest);
        }
        ctl.tick(&mut scene, &config, &mut q);
        if k as f64 * dt > 0.5 {
            worst = worst.max(tool_pose(&scene, &config.chain).position.distance(latest.position));
        }
    }
    assert_eq!(ctl.collisions, 0);
    assert_eq!(ctl.ik_failures, 0);
    assert!(worst < 0.02, "tracking error {worst}");
}

// gripper

fn at_grasp_depth(id: &str, model: &str, pose: Pose, config: &ExecutorConfig) -> SceneState {
    let mut scene = common::scene(catalog(), vec![ObjectInstance::new(id, model, pose)]);
    let half = scene.model(model).unwrap().half_extents;
    let tool = top_down_pose(&pose, half.z, 0.0);
    let q = ik_solve(&config.chain, &tool, &common::HOME, &IkParams::default()).unwrap().angles;
    scene.joints = JointState::at_rest(q, 0.0);
    scene
}

#[test]
fn threshold_met_on_a_step_boundary_counts() {
    let mut config = ExecutorConfig::default();
    // 0.12 A at exactly 20 steps of squeeze
    let mut scene = at_grasp_depth("s", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0), &config);
    let r = grasp_service(&mut scene, &config, &mut ());
    assert!(r.success);
    assert!((r.final_aperture - 0.048).abs() < 1e-9);
    assert!((r.squeeze - 0.002).abs() < 1e-9);

    // a hair above the boundary costs one more step
    config.gripper.current_threshold = 0.12 + 1e-9;
    let mut scene = at_grasp_depth("s", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0), &config);
    let r = grasp_service(&mut scene, &config, &mut ());
    assert!(r.success);
    assert!((r.final_aperture - 0.0479).abs() < 1e-9);
}

#[test]
fn closure_speed_and_monotone_current() {
    let config = ExecutorConfig::default();
    let mut scene = at_grasp_depth("s", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.7), &config);
    let r = grasp_service(&mut scene, &config, &mut ());
    assert!(r.success);
    assert_eq!(r.instance_id.as_deref(), Some("s"));
    for w in r.trace.windows(2) {
        assert!(w[1].current >= w[0].current);
        let v = (w[0].aperture - w[1].aperture) / (w[1].time - w[0].time);
        assert!((v - 0.1).abs() < 1e-6, "closing at {v} m/s");
    }
    let total = (0.085 - r.final_aperture) / r.duration;
    assert!((total - 0.1).abs() <= 0.1 * config.gripper.step_dt / r.duration + 1e-9);
    assert!(scene.instance("s").unwrap().held);
    let rel = release_service(&mut scene, &config, &mut ());
    assert_eq!(rel.instance_id.as_deref(), Some("s"));
    assert_eq!(scene.gripper_aperture, 0.085);
    let s = scene.instance("s").unwrap();
    assert!(!s.held && (s.actual_pose.position.z - 0.05).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn queue_matches_a_bounded_deque(cap in 1usize..12, ops in prop::collection::vec(0u8..4, 0..200)) {
        let mut q = TargetQueue::new(cap);
        let mut model: VecDeque<Pose> = VecDeque::new();
        for (i, op) in ops.iter().enumerate() {
            let p = Pose::from_xyz_yaw(i as f64, 0.0, 0.0, 0.0);
            match op {
                0 | 1 => {
                    let evicted = q.push(p);
                    let want = if model.len() == cap { model.pop_front() } else { None };
                    model.push_back(p);
                    prop_assert_eq!(evicted, want);
                }
                2 => prop_assert_eq!(q.pop(), model.pop_front()),
                _ => {
                    let want = model.back().copied();
                    model.clear();
                    prop_assert_eq!(q.pop_newest(), want);
                }
            }
            prop_assert!(q.len() <= cap);
            prop_assert_eq!(q.len(), model.len());
            prop_assert!(q.iter().eq(model.iter()));
        }
    }

    #[test]
    fn current_never_decreases_while_closing(width in 0.01f64..0.08, gain in 10.0f64..200.0) {
        let mut config = ExecutorConfig::default();
        config.gripper.current_gain = gain;
        let mut scene = at_grasp_depth("s", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0), &config);
        scene.catalog[1].grasp_width = width;
        let r = grasp_service(&mut scene, &config, &mut ());
        prop_assert!(r.success);
        for w in r.trace.windows(2) {
            prop_assert!(w[1].current >= w[0].current);
        }
        // the stop lands within one step of the nominal squeeze
        let step = config.gripper.close_speed * config.gripper.step_dt;
        prop_assert!(r.squeeze >= config.gripper.nominal_squeeze() - 1e-9);
        prop_assert!(r.squeeze < config.gripper.nominal_squeeze() + step + 1e-9);
    }
}
