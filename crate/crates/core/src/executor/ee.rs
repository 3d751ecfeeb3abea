//! Streamed end-effector control: the tool follows the newest target pose.

use super::{apply_joints, collision_check, Collision, ExecutorConfig};
use crate::geometry::Pose;
use crate::kinematics::{ik_solve, IkError, JointState, DOF};
use crate::scene::SceneState;
use crate::trajectory::step_toward;

/// Where the loop takes its targets from.
pub trait PoseSource {
    /// Newest pending target; older pending targets are dropped.
    fn next_target(&mut self) -> Option<Pose>;
}

impl PoseSource for Option<Pose> {
    fn next_target(&mut self) -> Option<Pose> {
        self.take()
    }
}

/// What happened during one control tick.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EeTick {
    /// A target was taken from the source this tick.
    pub popped: Option<Pose>,
    pub ik_failure: Option<IkError>,
    pub collision: Option<Collision>,
    pub moved: bool,
}

/// Servo loop state. Each `tick` advances the scene by one joint-state
/// period; targets are taken at the slower end-effector rate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EeController {
    goal: Option<[f64; DOF]>,
    next_pop: Option<f64>,
    pub ik_failures: u32,
    pub collisions: u32,
}

impl EeController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn goal(&self) -> Option<&[f64; DOF]> {
        self.goal.as_ref()
    }

    pub fn is_idle(&self) -> bool {
        self.goal.is_none()
    }

    pub fn stop(&mut self) {
        self.goal = None;
    }

    pub fn tick<S: PoseSource + ?Sized>(&mut self, scene: &mut SceneState, config: &ExecutorConfig, source: &mut S) -> EeTick {
        let mut out = EeTick::default();
        let now = scene.sim_time;
        let period = 1.0 / config.ee_rate;
        let due = self.next_pop.map_or(true, |t| now + 1e-9 >= t);
        if due {
            let mut next = self.next_pop.unwrap_or(now);
            while next <= now + 1e-9 {
                next += period;
            }
            self.next_pop = Some(next);
            if let Some(target) = source.next_target() {
                out.popped = Some(target);
                match ik_solve(&config.chain, &target, &scene.joints.angles, &config.stream_ik) {
                    Ok(s) => self.goal = Some(s.angles),
                    Err(e) => {
                        self.ik_failures += 1;
                        out.ik_failure = Some(e);
                    }
                }
            }
        }

        let dt = 1.0 / config.joint_rate;
        let t = now + dt;
        let previous = scene.joints;
        let angles = match self.goal {
            Some(goal) => step_toward(&config.chain, &previous.angles, &goal, dt),
            None => previous.angles,
        };
        let velocities: [f64; DOF] = core::array::from_fn(|i| (angles[i] - previous.angles[i]) / dt);
        apply_joints(scene, &config.chain, JointState { angles, velocities, timestamp: t });
        if angles != previous.angles {
            if let Some(c) = collision_check(scene, config, None) {
                apply_joints(scene, &config.chain, JointState::at_rest(previous.angles, t));
                self.goal = None;
                self.collisions += 1;
                out.collision = Some(c);
                return out;
            }
            out.moved = true;
        }
        if self.goal.as_ref() == Some(&angles) {
            self.goal = None;
        }
        out
    }
}
