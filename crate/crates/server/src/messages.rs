//! Topic and service names and their payload schemas.

use serde::{Deserialize, Serialize};
use teleop_core::executor::{GraspReport, ReleaseReport};
use teleop_core::kinematics::DOF;
use teleop_core::scene::{DesktopMesh, SceneState};
use teleop_core::settle::{SettleResult, Support};
use teleop_core::{Pose, Vec3};

pub mod topics {
    pub const OBJECT_POSES: &str = "object_poses";
    pub const JOINT_STATES: &str = "joint_states";
    pub const TARGET_POSE: &str = "target_pose";
    pub const CAMERA: &str = "l515_image_raw";

    pub const ALL: [&str; 4] = [OBJECT_POSES, JOINT_STATES, TARGET_POSE, CAMERA];
}

pub mod services {
    pub const DESKTOP_DETECTION: &str = "DesktopDetection";
    pub const EXECUTE_TASK: &str = "ExecuteTask";
    pub const GRASP: &str = "GraspService";
    pub const RELEASE: &str = "ReleaseService";
    pub const SETTLE_PREVIEW: &str = "SettlePreview";
    pub const RESET_SCENE: &str = "ResetScene";
    pub const GET_SCENE: &str = "GetScene";
    pub const SET_GHOST_POSE: &str = "SetGhostPose";
    pub const RESET_GHOSTS: &str = "ResetGhosts";
    pub const SUBSCRIBE: &str = "Subscribe";
    pub const UNSUBSCRIBE: &str = "Unsubscribe";
    pub const ADVANCE_CLOCK: &str = "AdvanceClock";
    pub const END_SESSION: &str = "EndSession";

    pub const ALL: [&str; 13] = [
        DESKTOP_DETECTION,
        EXECUTE_TASK,
        GRASP,
        RELEASE,
        SETTLE_PREVIEW,
        RESET_SCENE,
        GET_SCENE,
        SET_GHOST_POSE,
        RESET_GHOSTS,
        SUBSCRIBE,
        UNSUBSCRIBE,
        ADVANCE_CLOCK,
        END_SESSION,
    ];
}

pub const JOINT_NAMES: [&str; DOF] = ["joint_1", "joint_2", "joint_3", "joint_4", "joint_5", "joint_6", "joint_7"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub instance_id: String,
    pub model_id: String,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPoses {
    pub stamp: f64,
    pub objects: Vec<ObjectPose>,
}

impl ObjectPoses {
    pub fn of(scene: &SceneState) -> Self {
        ObjectPoses {
            stamp: scene.sim_time,
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectPose { instance_id: o.instance_id.clone(), model_id: o.model_id.clone(), pose: o.actual_pose })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointStates {
    pub stamp: f64,
    pub name: Vec<String>,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub gripper_aperture: f64,
}

impl JointStates {
    pub fn of(scene: &SceneState) -> Self {
        JointStates {
            stamp: scene.sim_time,
            name: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            position: scene.joints.angles.to_vec(),
            velocity: scene.joints.velocities.to_vec(),
            gripper_aperture: scene.gripper_aperture,
        }
    }

    pub fn angles(&self) -> Option<[f64; DOF]> {
        self.position.as_slice().try_into().ok()
    }
}

/// Placeholder for the depth camera stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub stamp: f64,
    pub width: u32,
    pub height: u32,
    pub encoding: String,
    pub data: Vec<u8>,
}

impl Image {
    /// 8x8 grey ramp.
    pub fn placeholder(stamp: f64) -> Self {
        let data = (0..64u32).flat_map(|i| [(i * 4) as u8; 3]).collect();
        Image { stamp, width: 8, height: 8, encoding: "rgb8".into(), data }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Empty {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicRequest {
    pub topic: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePose {
    pub instance_id: String,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlePreview {
    pub final_pose: Pose,
    pub support: Support,
    pub stable: bool,
}

impl From<SettleResult> for SettlePreview {
    fn from(r: SettleResult) -> Self {
        SettlePreview { final_pose: r.final_pose, support: r.support, stable: r.stable }
    }
}

pub type GraspResponse = GraspReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReleaseResponse {
    pub instance_id: Option<String>,
    pub settle: Option<SettlePreview>,
    /// Set when the released object could not be settled.
    pub error: Option<String>,
}

impl From<ReleaseReport> for ReleaseResponse {
    fn from(r: ReleaseReport) -> Self {
        let (settle, error) = match r.settle {
            None => (None, None),
            Some(Ok(s)) => (Some(s.into()), None),
            Some(Err(e)) => (None, Some(e.to_string())),
        };
        ReleaseResponse { instance_id: r.instance_id, settle, error }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectRequest {
    /// Replace the scene's desktop with the detected one.
    pub apply: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub mesh: DesktopMesh,
    pub normal: Vec3,
    pub offset: f64,
    pub area: f64,
    pub points: usize,
    pub applied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvanceClock {
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockState {
    pub sim_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndSession {
    pub task: String,
}
