//! Execution against the simulated scene: batch pick-and-place from a task
//! request, streamed end-effector control through a bounded target queue,
//! and the current-feedback gripper model.

pub mod ee;
pub mod gripper;
pub mod queue;
pub mod task;

use alloc::string::String;

pub use ee::{EeController, EeTick, PoseSource};
pub use gripper::{grasp_service, release_service, GraspReport, GripperConfig, GripperSample, ReleaseReport};
pub use queue::{TargetQueue, DEFAULT_QUEUE_CAPACITY};
pub use task::{
    execute_task, ExecutionReport, MoveOutcome, MoveReport, MoveRequest, Phase, PhaseStamp, TaskError,
    TaskRequest,
};

use crate::collision::{penetration_depth, plane_penetration, Obb};
use crate::geometry::{Pose, Vec3};
use crate::kinematics::{forward_kinematics, IkParams, JointState, KinematicChain, DOF};
use crate::scene::SceneState;
use crate::settle::SettleParams;

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutorConfig {
    pub chain: KinematicChain,
    pub gripper: GripperConfig,
    /// joint_states rate, Hz.
    pub joint_rate: f64,
    /// End-effector loop rate, Hz.
    pub ee_rate: f64,
    pub hover: f64,
    /// Overlap beyond which contact counts as a collision.
    pub collision_threshold: f64,
    /// Cartesian spacing of IK waypoints along straight tool paths.
    pub waypoint_spacing: f64,
    /// Vertical clearance kept above every resting object during transit.
    pub transit_clearance: f64,
    pub settle: SettleParams,
    /// Solver settings for planned motions (tighter than the streaming loop).
    pub plan_ik: IkParams,
    pub stream_ik: IkParams,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            chain: KinematicChain::kinova_gen3(),
            gripper: GripperConfig::default(),
            joint_rate: 50.0,
            ee_rate: 20.0,
            hover: crate::kinematics::HOVER_HEIGHT,
            collision_threshold: 0.002,
            waypoint_spacing: 0.05,
            transit_clearance: 0.05,
            settle: SettleParams::default(),
            plan_ik: IkParams {
                max_iterations: 1000,
                position_tolerance: 1e-7,
                orientation_tolerance: 1e-6,
                ..IkParams::default()
            },
            stream_ik: IkParams::default(),
        }
    }
}

/// Receives every published state while the executor runs.
pub trait ExecutionObserver {
    fn on_sample(&mut self, _scene: &SceneState) {}
}

impl ExecutionObserver for () {}

impl<F: FnMut(&SceneState)> ExecutionObserver for F {
    fn on_sample(&mut self, scene: &SceneState) {
        self(scene)
    }
}

pub fn tool_pose(scene: &SceneState, chain: &KinematicChain) -> Pose {
    forward_kinematics(chain, &scene.joints.angles)
}

/// Sets the arm state and carries the held object along with the tool.
pub fn apply_joints(scene: &mut SceneState, chain: &KinematicChain, state: JointState) {
    scene.joints = state;
    scene.set_time(state.timestamp);
    if let (Some(i), Some(offset)) = (scene.held_index(), scene.grasp_offset) {
        let tool = forward_kinematics(chain, &state.angles);
        scene.objects[i].actual_pose = tool.compose(&offset);
    }
}

pub(crate) fn hold_still(scene: &mut SceneState, chain: &KinematicChain, angles: [f64; DOF], t: f64) {
    apply_joints(scene, chain, JointState::at_rest(angles, t));
}

// gripper geometry in the tool frame (tool z points out of the fingers)
const FINGER_HALF: Vec3 = Vec3::new(0.011, 0.005, 0.025);
const FINGER_CENTER_Z: f64 = -0.015;
const PALM_HALF: Vec3 = Vec3::new(0.04, 0.05, 0.05);
const PALM_CENTER_Z: f64 = -0.09;

/// Two finger pads (closing along tool y) and the palm.
pub fn gripper_boxes(tool: &Pose, aperture: f64) -> [Obb; 3] {
    let finger = |side: f64| {
        let local = Pose::from_translation(Vec3::new(0.0, side * (0.5 * aperture + FINGER_HALF.y), FINGER_CENTER_Z));
        Obb::new(tool.compose(&local), FINGER_HALF)
    };
    let palm = Obb::new(tool.compose(&Pose::from_translation(Vec3::new(0.0, 0.0, PALM_CENTER_Z))), PALM_HALF);
    [finger(1.0), finger(-1.0), palm]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Collision {
    /// Instance id, or `"desktop"`.
    pub with: String,
    pub depth: f64,
}

/// Deepest contact of the gripper or held object with the desktop or a
/// resting object, if it exceeds the collision threshold. The held object
/// and `exempt` (the object being picked) are not obstacles.
pub fn collision_check(scene: &SceneState, config: &ExecutorConfig, exempt: Option<&str>) -> Option<Collision> {
    let tool = tool_pose(scene, &config.chain);
    let held = scene.held_index();
    let mut moving: heapless_boxes::Boxes = heapless_boxes::Boxes::default();
    for b in gripper_boxes(&tool, scene.gripper_aperture) {
        moving.push(b);
    }
    if let Some(i) = held {
        moving.push(scene.actual_obb(&scene.objects[i]));
    }
    let plane = &scene.desktop.plane;
    let mut worst: Option<Collision> = None;
    let mut consider = |with: &str, depth: f64| {
        if depth > config.collision_threshold && worst.as_ref().map_or(true, |w| depth > w.depth) {
            worst = Some(Collision { with: with.into(), depth });
        }
    };
    for m in moving.iter() {
        consider("desktop", plane_penetration(m, plane.normal, plane.offset));
    }
    for (k, o) in scene.objects.iter().enumerate() {
        if Some(k) == held || exempt == Some(o.instance_id.as_str()) {
            continue;
        }
        let obb = scene.actual_obb(o);
        for m in moving.iter() {
            consider(&o.instance_id, penetration_depth(m, &obb));
        }
    }
    worst
}

mod heapless_boxes {
    use crate::collision::Obb;

    /// At most the three gripper boxes plus one held object.
    #[derive(Default)]
    pub struct Boxes {
        items: [Option<Obb>; 4],
        len: usize,
    }

    impl Boxes {
        pub fn push(&mut self, b: Obb) {
            self.items[self.len] = Some(b);
            self.len += 1;
        }

        pub fn iter(&self) -> impl Iterator<Item = &Obb> {
            self.items[..self.len].iter().flatten()
        }
    }
}
