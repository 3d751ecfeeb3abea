//! Batch pick-and-place from a task request.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::gripper::{grasp_service, release_service};
use super::{apply_joints, collision_check, hold_still, tool_pose, Collision, ExecutionObserver, ExecutorConfig};
use crate::geometry::{Pose, Vec3};
use crate::kinematics::{ik_solve, top_down_orientation, IkError, KinematicChain, DOF, FINGER_ENGAGEMENT};
use crate::math;
use crate::scene::SceneState;
use crate::settle::{SettleError, Support};
use crate::trajectory::plan_trajectory;

/// Tilt beyond which an object cannot be grasped from the top, rad.
pub const UPRIGHT_TOLERANCE: f64 = 1e-3;
// fingertips reach this far below the tool centre
const FINGERTIP_BELOW_TOOL: f64 = 0.01;
// largest rotation between two consecutive IK waypoints, rad
const MAX_WAYPOINT_ROTATION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MoveRequest {
    pub instance_id: String,
    pub initial_pose: Pose,
    pub target_pose: Pose,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaskRequest {
    pub moves: Vec<MoveRequest>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    ApproachHover,
    DescendGrasp,
    Grasp,
    AscendFromGrasp,
    Transit,
    DescendPlace,
    Release,
    AscendFromPlace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MoveOutcome {
    Success,
    Collision,
    GraspFailure,
    IkFailure,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseStamp {
    pub phase: Phase,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MoveReport {
    pub instance_id: String,
    pub outcome: MoveOutcome,
    pub phases: Vec<PhaseStamp>,
    /// Rest pose after release.
    pub final_pose: Option<Pose>,
    pub support: Option<Support>,
    pub stable: Option<bool>,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExecutionReport {
    pub success: bool,
    pub moves: Vec<MoveReport>,
    pub start_time: f64,
    pub end_time: f64,
}

/// Request rejected before anything moved.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskError {
    UnknownInstance(String),
    NotUpright(String),
    /// The gripper holds an object that the request does not account for.
    GripperOccupied(String),
    TargetOutsideWorkspace(String),
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskError::UnknownInstance(id) => write!(f, "unknown instance '{id}'"),
            TaskError::NotUpright(id) => write!(f, "instance '{id}' is not upright"),
            TaskError::GripperOccupied(id) => write!(f, "gripper is holding '{id}'"),
            TaskError::TargetOutsideWorkspace(id) => write!(f, "target for '{id}' is outside the desktop"),
        }
    }
}

impl core::error::Error for TaskError {}

/// Runs every move in order. Grasp and IK failures skip the move; a
/// collision stops the arm at the last hover it passed and ends the task.
pub fn execute_task<O: ExecutionObserver + ?Sized>(
    scene: &mut SceneState,
    config: &ExecutorConfig,
    request: &TaskRequest,
    observer: &mut O,
) -> Result<ExecutionReport, TaskError> {
    if let Some(i) = scene.held_index() {
        return Err(TaskError::GripperOccupied(scene.objects[i].instance_id.clone()));
    }
    for m in &request.moves {
        let inst = scene.instance(&m.instance_id).ok_or_else(|| TaskError::UnknownInstance(m.instance_id.clone()))?;
        if !inst.actual_pose.is_upright(UPRIGHT_TOLERANCE) || !m.initial_pose.is_upright(UPRIGHT_TOLERANCE) {
            return Err(TaskError::NotUpright(m.instance_id.clone()));
        }
        if !scene.desktop.contains_xy(m.target_pose.position) {
            return Err(TaskError::TargetOutsideWorkspace(m.instance_id.clone()));
        }
    }

    let start_time = scene.sim_time;
    let mut moves = Vec::with_capacity(request.moves.len());
    let mut safe = scene.joints.angles;
    let mut aborted = false;
    for m in &request.moves {
        let report = run_move(scene, config, m, observer, &mut safe);
        aborted = report.outcome == MoveOutcome::Collision;
        moves.push(report);
        if aborted {
            break;
        }
    }
    let success = !aborted && moves.len() == request.moves.len() && moves.iter().all(|m| m.outcome == MoveOutcome::Success);
    Ok(ExecutionReport { success, moves, start_time, end_time: scene.sim_time })
}

struct MovePlan {
    approach: Vec<[f64; DOF]>,
    descend_grasp: Vec<[f64; DOF]>,
    ascend_grasp: Vec<[f64; DOF]>,
    transit: Vec<[f64; DOF]>,
    descend_place: Vec<[f64; DOF]>,
    ascend_place: Vec<[f64; DOF]>,
}

fn run_move<O: ExecutionObserver + ?Sized>(
    scene: &mut SceneState,
    config: &ExecutorConfig,
    m: &MoveRequest,
    observer: &mut O,
    safe: &mut [f64; DOF],
) -> MoveReport {
    let mut report = MoveReport {
        instance_id: m.instance_id.clone(),
        outcome: MoveOutcome::Success,
        phases: Vec::new(),
        final_pose: None,
        support: None,
        stable: None,
        detail: None,
    };
    let plan = match plan_move(scene, config, m) {
        Ok(p) => p,
        Err(e) => {
            report.outcome = MoveOutcome::IkFailure;
            report.detail = Some(format!("{e}"));
            return report;
        }
    };
    let exempt = Some(m.instance_id.as_str());

    macro_rules! motion {
        ($phase:expr, $path:expr) => {{
            let start = scene.sim_time;
            let r = follow(scene, config, &$path, exempt, observer);
            report.phases.push(PhaseStamp { phase: $phase, start, end: scene.sim_time });
            if let Err(c) = r {
                let t = scene.sim_time;
                hold_still(scene, &config.chain, *safe, t);
                observer.on_sample(scene);
                report.outcome = MoveOutcome::Collision;
                report.detail = Some(format!("collision with '{}' ({:.4} m)", c.with, c.depth));
                return report;
            }
        }};
    }

    motion!(Phase::ApproachHover, plan.approach);
    *safe = scene.joints.angles;
    motion!(Phase::DescendGrasp, plan.descend_grasp);

    let start = scene.sim_time;
    let grasp = grasp_service(scene, config, observer);
    report.phases.push(PhaseStamp { phase: Phase::Grasp, start, end: scene.sim_time });
    if !grasp.success || grasp.instance_id.as_deref() != Some(m.instance_id.as_str()) {
        report.outcome = MoveOutcome::GraspFailure;
        report.detail = Some(match grasp.instance_id {
            Some(other) => format!("grasped '{other}' instead"),
            None => String::from("current threshold never reached"),
        });
        // let go of anything picked by mistake, open up and back off
        release_service(scene, config, observer);
        let back: Vec<[f64; DOF]> = plan.descend_grasp.iter().rev().skip(1).copied().chain([*safe]).collect();
        let _ = follow(scene, config, &back, exempt, observer);
        return report;
    }

    motion!(Phase::AscendFromGrasp, plan.ascend_grasp);
    *safe = scene.joints.angles;
    motion!(Phase::Transit, plan.transit);
    *safe = scene.joints.angles;
    motion!(Phase::DescendPlace, plan.descend_place);

    let start = scene.sim_time;
    let release = release_service(scene, config, observer);
    report.phases.push(PhaseStamp { phase: Phase::Release, start, end: scene.sim_time });
    match release.settle {
        Some(Ok(r)) => {
            report.final_pose = Some(r.final_pose);
            report.support = Some(r.support);
            report.stable = Some(r.stable);
        }
        Some(Err(e)) => {
            report.outcome = match e {
                SettleError::InvalidRelease { .. } => MoveOutcome::Collision,
                _ => MoveOutcome::GraspFailure,
            };
            report.detail = Some(format!("{e}"));
        }
        None => {}
    }

    let start = scene.sim_time;
    let r = follow(scene, config, &plan.ascend_place, None, observer);
    report.phases.push(PhaseStamp { phase: Phase::AscendFromPlace, start, end: scene.sim_time });
    match r {
        Ok(()) => *safe = scene.joints.angles,
        Err(c) if report.outcome == MoveOutcome::Success => {
            report.outcome = MoveOutcome::Collision;
            report.detail = Some(format!("collision with '{}' ({:.4} m)", c.with, c.depth));
        }
        Err(_) => {}
    }
    report
}

/// Plays a joint path at the publication rate, checking every sample for
/// collisions. Stops at the first colliding sample.
fn follow<O: ExecutionObserver + ?Sized>(
    scene: &mut SceneState,
    config: &ExecutorConfig,
    path: &[[f64; DOF]],
    exempt: Option<&str>,
    observer: &mut O,
) -> Result<(), Collision> {
    for goal in path {
        let from = scene.joints.angles;
        let samples = plan_trajectory(&config.chain, &from, goal, config.joint_rate, scene.sim_time);
        for s in samples.into_iter().skip(1) {
            apply_joints(scene, &config.chain, s);
            if let Some(c) = collision_check(scene, config, exempt) {
                return Err(c);
            }
            observer.on_sample(scene);
        }
    }
    let t = scene.sim_time;
    let q = scene.joints.angles;
    hold_still(scene, &config.chain, q, t);
    Ok(())
}

fn plan_move(scene: &SceneState, config: &ExecutorConfig, m: &MoveRequest) -> Result<MovePlan, IkError> {
    let chain = &config.chain;
    let inst = scene.instance(&m.instance_id).expect("validated by execute_task");
    let half = scene.model_of(inst).half_extents;
    let current = tool_pose(scene, chain);

    // keep the wrist close to its current heading: a box grasped at yaw + pi
    // is the same grasp
    let heading = {
        let x = current.orientation.rotate(Vec3::X);
        math::atan2(x.y, x.x)
    };
    let yaw = nearest_equivalent(m.initial_pose.orientation.yaw(), heading);
    let pick_top = m.initial_pose.position.z + half.z;
    let grasp_tool = Pose {
        position: Vec3::new(m.initial_pose.position.x, m.initial_pose.position.y, pick_top - FINGER_ENGAGEMENT),
        orientation: top_down_orientation(yaw),
    };
    let offset = grasp_tool.inverse().compose(&m.initial_pose);
    let lift = Vec3::new(0.0, 0.0, config.hover + FINGER_ENGAGEMENT);
    let hover_pick = translated(&grasp_tool, lift);
    let target = m.target_pose.upright();
    let place_tool = target.compose(&offset.inverse());
    let hover_place = translated(&place_tool, lift);

    let highest_top = scene
        .objects
        .iter()
        .filter(|o| o.instance_id != m.instance_id && !o.held)
        .map(|o| scene.actual_obb(o).max_z())
        .fold(f64::NEG_INFINITY, f64::max);
    let held_below = grasp_tool.position.z - (m.initial_pose.position.z - half.z);
    let empty_z = highest_top + FINGERTIP_BELOW_TOOL + config.transit_clearance;
    let loaded_z = highest_top + held_below + config.transit_clearance;

    let approach_z = current.position.z.max(hover_pick.position.z).max(empty_z);
    let transit_z = hover_pick.position.z.max(hover_place.position.z).max(loaded_z);

    let mut planner = Planner { chain, config, seed: scene.joints.angles, pose: current };
    let approach = planner.through(&up_over_down(&current, &hover_pick, approach_z))?;
    let descend_grasp = planner.through(&[grasp_tool])?;
    let ascend_grasp = planner.through(&[hover_pick])?;
    let transit = planner.through(&up_over_down(&hover_pick, &hover_place, transit_z))?;
    let descend_place = planner.through(&[place_tool])?;
    let ascend_place = planner.through(&[hover_place])?;
    Ok(MovePlan { approach, descend_grasp, ascend_grasp, transit, descend_place, ascend_place })
}

fn translated(p: &Pose, d: Vec3) -> Pose {
    Pose { position: p.position + d, orientation: p.orientation }
}

fn nearest_equivalent(yaw: f64, reference: f64) -> f64 {
    let pi = core::f64::consts::PI;
    let wrap = |a: f64| {
        let mut a = a % (2.0 * pi);
        if a > pi {
            a -= 2.0 * pi;
        } else if a < -pi {
            a += 2.0 * pi;
        }
        a
    };
    let a = wrap(yaw - reference);
    let b = wrap(yaw + pi - reference);
    if math::abs(b) < math::abs(a) {
        reference + b
    } else {
        reference + a
    }
}

/// Straight up to `z`, across, then straight down.
fn up_over_down(from: &Pose, to: &Pose, z: f64) -> Vec<Pose> {
    let mut out = Vec::new();
    if z > from.position.z + 1e-6 {
        out.push(Pose { position: Vec3::new(from.position.x, from.position.y, z), orientation: from.orientation });
    }
    if z > to.position.z + 1e-6 {
        out.push(Pose { position: Vec3::new(to.position.x, to.position.y, z), orientation: to.orientation });
    }
    out.push(*to);
    out
}

struct Planner<'a> {
    chain: &'a KinematicChain,
    config: &'a ExecutorConfig,
    seed: [f64; DOF],
    pose: Pose,
}

impl Planner<'_> {
    /// Joint waypoints along straight tool segments through `poses`.
    fn through(&mut self, poses: &[Pose]) -> Result<Vec<[f64; DOF]>, IkError> {
        let mut out = Vec::new();
        for to in poses {
            let from = self.pose;
            let dist = from.position.distance(to.position);
            let angle = from.orientation.angle_to(to.orientation);
            let n = (math::ceil(dist / self.config.waypoint_spacing) as usize)
                .max(math::ceil(angle / MAX_WAYPOINT_ROTATION) as usize)
                .max(1);
            for k in 1..=n {
                let s = k as f64 / n as f64;
                let pose = if k == n {
                    *to
                } else {
                    Pose {
                        position: from.position + (to.position - from.position) * s,
                        orientation: from.orientation.slerp(to.orientation, s),
                    }
                };
                let q = self.solve(&pose)?;
                out.push(q);
                self.seed = q;
            }
            self.pose = *to;
        }
        Ok(out)
    }

    fn solve(&self, pose: &Pose) -> Result<[f64; DOF], IkError> {
        match ik_solve(self.chain, pose, &self.seed, &self.config.plan_ik) {
            Ok(s) => Ok(s.angles),
            Err(e @ IkError::Unreachable { .. }) => Err(e),
            Err(_) => ik_solve(self.chain, pose, &self.seed, &self.config.stream_ik).map(|s| s.angles),
        }
    }
}
