//! Parallel-jaw gripper closing under current feedback.

use alloc::string::String;
use alloc::vec::Vec;

use super::{tool_pose, ExecutionObserver, ExecutorConfig};
use crate::math;
use crate::scene::{SceneState, MAX_GRIPPER_APERTURE};
use crate::settle::{settle, SettleError, SettleResult};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GripperConfig {
    /// Finger closing speed, m/s.
    pub close_speed: f64,
    /// Motor current at which closing stops, A.
    pub current_threshold: f64,
    /// Current per metre of squeeze past first contact, A/m.
    pub current_gain: f64,
    /// Control period, s.
    pub step_dt: f64,
    /// Published aperture samples come every this many control steps.
    pub sample_every: usize,
    /// How far the tool centre may sit outside an object and still grasp it.
    pub capture_tolerance: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        GripperConfig {
            close_speed: 0.1,
            current_threshold: 0.12,
            current_gain: 60.0,
            step_dt: 0.001,
            sample_every: 20,
            capture_tolerance: 0.005,
        }
    }
}

impl GripperConfig {
    /// Squeeze past first contact at which the threshold is reached.
    pub fn nominal_squeeze(&self) -> f64 {
        self.current_threshold / self.current_gain
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GripperSample {
    pub time: f64,
    pub aperture: f64,
    pub current: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraspReport {
    pub success: bool,
    pub instance_id: Option<String>,
    pub final_aperture: f64,
    /// Contact width minus final aperture; zero when nothing was grasped.
    pub squeeze: f64,
    pub peak_current: f64,
    pub duration: f64,
    /// One entry per control step, starting from the initial aperture.
    pub trace: Vec<GripperSample>,
}

/// Closes the gripper until the current threshold is reached or the jaws
/// meet. The grasped object is the one whose box contains the tool centre.
/// Holding something already returns success without moving.
pub fn grasp_service<O: ExecutionObserver + ?Sized>(
    scene: &mut SceneState,
    config: &ExecutorConfig,
    observer: &mut O,
) -> GraspReport {
    let g = &config.gripper;
    let t0 = scene.sim_time;
    let start = scene.gripper_aperture;
    if let Some(i) = scene.held_index() {
        return GraspReport {
            success: true,
            instance_id: Some(scene.objects[i].instance_id.clone()),
            final_aperture: start,
            squeeze: 0.0,
            peak_current: 0.0,
            duration: 0.0,
            trace: Vec::new(),
        };
    }
    let tool = tool_pose(scene, &config.chain);
    let candidate = scene
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| scene.actual_obb(o).contains(tool.position, g.capture_tolerance))
        .min_by(|(_, a), (_, b)| {
            let da = a.actual_pose.position.distance(tool.position);
            let db = b.actual_pose.position.distance(tool.position);
            da.total_cmp(&db)
        })
        .map(|(i, o)| (i, scene.model_of(o).grasp_width));

    let step = g.close_speed * g.step_dt;
    let mut trace = Vec::new();
    trace.push(GripperSample { time: t0, aperture: start, current: 0.0 });
    let mut aperture = start;
    let mut peak: f64 = 0.0;
    let mut k: usize = 0;
    let mut success = false;
    loop {
        if aperture <= 0.0 {
            break;
        }
        k += 1;
        aperture = (start - k as f64 * step).max(0.0);
        let current = match candidate {
            Some((_, width)) if aperture <= width => g.current_gain * (width - aperture),
            _ => 0.0,
        };
        peak = peak.max(current);
        let t = t0 + k as f64 * g.step_dt;
        trace.push(GripperSample { time: t, aperture, current });
        if current >= g.current_threshold - 1e-12 {
            success = candidate.is_some();
            break;
        }
        if g.sample_every > 0 && k % g.sample_every == 0 {
            scene.gripper_aperture = aperture;
            scene.set_time(t);
            observer.on_sample(scene);
        }
    }
    scene.gripper_aperture = aperture;
    scene.set_time(t0 + k as f64 * g.step_dt);
    let mut report = GraspReport {
        success,
        instance_id: None,
        final_aperture: aperture,
        squeeze: 0.0,
        peak_current: peak,
        duration: k as f64 * g.step_dt,
        trace,
    };
    if success {
        let (i, width) = candidate.expect("success implies a candidate");
        let obj = &mut scene.objects[i];
        obj.held = true;
        scene.grasp_offset = Some(tool.inverse().compose(&obj.actual_pose));
        report.instance_id = Some(obj.instance_id.clone());
        report.squeeze = math::abs(width - aperture);
    }
    observer.on_sample(scene);
    report
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReleaseReport {
    pub instance_id: Option<String>,
    pub settle: Option<Result<SettleResult, SettleError>>,
}

/// Opens the gripper fully and lets the held object settle. Releasing with
/// nothing held just opens the jaws.
pub fn release_service<O: ExecutionObserver + ?Sized>(
    scene: &mut SceneState,
    config: &ExecutorConfig,
    observer: &mut O,
) -> ReleaseReport {
    scene.gripper_aperture = MAX_GRIPPER_APERTURE;
    let Some(i) = scene.held_index() else {
        observer.on_sample(scene);
        return ReleaseReport { instance_id: None, settle: None };
    };
    scene.objects[i].held = false;
    scene.grasp_offset = None;
    let id = scene.objects[i].instance_id.clone();
    let release_pose = scene.objects[i].actual_pose;
    let result = settle(scene, &id, &release_pose, &config.settle);
    if let Ok(r) = &result {
        let obj = &mut scene.objects[i];
        obj.actual_pose = r.final_pose;
        obj.ghost_pose = r.final_pose;
    }
    observer.on_sample(scene);
    ReleaseReport { instance_id: Some(id), settle: Some(result) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};
    use crate::kinematics::{ik_solve, top_down_pose, IkParams, JointState};
    use crate::scene::{ObjectInstance, ObjectModel};
    use crate::testutil::table_scene;
    use alloc::vec;

    fn scene_with_tool_in_box(width: f64) -> (SceneState, ExecutorConfig) {
        let config = ExecutorConfig::default();
        let model = ObjectModel::new("box", Vec3::new(0.03, 0.03, 0.05), 0.2, width).unwrap();
        let pose = Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0);
        let mut scene = table_scene(vec![model], vec![ObjectInstance::new("b", "box", pose)]);
        let target = top_down_pose(&pose, 0.05, 0.0);
        let seed = [0.0, 0.26, 3.14, -2.27, 0.0, 0.96, 1.57];
        let sol = ik_solve(&config.chain, &target, &seed, &IkParams::default()).unwrap();
        scene.joints = JointState::at_rest(sol.angles, 0.0);
        (scene, config)
    }

    #[test]
    fn stops_two_millimetres_past_contact() {
        let (mut scene, config) = scene_with_tool_in_box(0.05);
        let r = grasp_service(&mut scene, &config, &mut ());
        assert!(r.success);
        assert_eq!(r.instance_id.as_deref(), Some("b"));
        assert!((r.squeeze - 0.002).abs() < 1e-9, "{}", r.squeeze);
        assert!((r.final_aperture - 0.048).abs() < 1e-9);
        assert!(scene.objects[0].held);
        for w in r.trace.windows(2) {
            assert!(w[1].current >= w[0].current);
            let speed = (w[0].aperture - w[1].aperture) / (w[1].time - w[0].time);
            assert!((speed - 0.1).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_grasp_closes_fully() {
        let (mut scene, config) = scene_with_tool_in_box(0.05);
        scene.objects[0].actual_pose.position.x += 0.2;
        let r = grasp_service(&mut scene, &config, &mut ());
        assert!(!r.success);
        assert_eq!(r.final_aperture, 0.0);
        assert_eq!(r.peak_current, 0.0);
        assert_eq!(scene.held_index(), None);
    }

    #[test]
    fn release_settles_and_is_idempotent() {
        let (mut scene, config) = scene_with_tool_in_box(0.05);
        grasp_service(&mut scene, &config, &mut ());
        let r = release_service(&mut scene, &config, &mut ());
        assert_eq!(r.instance_id.as_deref(), Some("b"));
        assert!(r.settle.unwrap().is_ok());
        assert_eq!(scene.gripper_aperture, MAX_GRIPPER_APERTURE);
        let before = scene.clone();
        let again = release_service(&mut scene, &config, &mut ());
        assert_eq!(again.instance_id, None);
        assert_eq!(scene, before);
    }
}
