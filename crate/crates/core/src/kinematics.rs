//! Serial-chain kinematics for the 7-DoF arm: forward kinematics, the
//! geometric Jacobian, damped-least-squares IK and top-down tool poses.

use core::fmt;

use crate::geometry::{Pose, Quat, Vec3};
use crate::math;

pub const DOF: usize = 7;

/// Default joint speed limit, rad/s.
pub const DEFAULT_MAX_VELOCITY: f64 = 0.8;
/// Default joint acceleration limit, rad/s^2.
pub const DEFAULT_MAX_ACCELERATION: f64 = 2.0;

/// Hover height above the object top for approach and retreat.
pub const HOVER_HEIGHT: f64 = 0.10;
/// Depth of the tool centre point below the object top when grasping.
pub const FINGER_ENGAGEMENT: f64 = 0.02;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointState {
    pub angles: [f64; DOF],
    pub velocities: [f64; DOF],
    pub timestamp: f64,
}

impl JointState {
    pub fn at_rest(angles: [f64; DOF], timestamp: f64) -> Self {
        JointState { angles, velocities: [0.0; DOF], timestamp }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointSpec {
    /// Offset from the previous joint frame.
    pub displacement: Vec3,
    /// Fixed rotation applied after the displacement.
    pub rotation: Quat,
    /// Rotation axis in the joint frame, unit length.
    pub axis: Vec3,
    pub lower: f64,
    pub upper: f64,
    pub max_velocity: f64,
    pub max_acceleration: f64,
}

impl JointSpec {
    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KinematicChain {
    pub joints: [JointSpec; DOF],
    /// Last joint frame to tool centre point.
    pub tool: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChainError {
    NonUnitAxis(usize),
    EmptyLimits(usize),
    NonPositiveRate(usize),
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::NonUnitAxis(i) => write!(f, "joint {} axis is not unit length", i + 1),
            ChainError::EmptyLimits(i) => write!(f, "joint {} has an empty limit interval", i + 1),
            ChainError::NonPositiveRate(i) => {
                write!(f, "joint {} velocity/acceleration limits must be positive", i + 1)
            }
        }
    }
}

impl core::error::Error for ChainError {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FkResult {
    pub tool: Pose,
    /// World position of each joint axis.
    pub joint_origins: [Vec3; DOF],
    /// World direction of each joint axis.
    pub joint_axes: [Vec3; DOF],
}

impl KinematicChain {
    pub fn validate(&self) -> Result<(), ChainError> {
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(ChainError::NonUnitAxis(i));
            }
            if !(j.lower <= j.upper) {
                return Err(ChainError::EmptyLimits(i));
            }
            if !(j.max_velocity > 0.0 && j.max_acceleration > 0.0) {
                return Err(ChainError::NonPositiveRate(i));
            }
        }
        Ok(())
    }

    /// Kinova Gen3 7-DoF with a Robotiq 2F-85 tool centre point.
    pub fn kinova_gen3() -> KinematicChain {
        use core::f64::consts::{FRAC_PI_2, PI};
        let two_pi = 2.0 * PI;
        let spec = |d: [f64; 3], roll: f64, limit: f64| JointSpec {
            displacement: Vec3::from(d),
            rotation: Quat::from_rpy(roll, 0.0, 0.0),
            axis: Vec3::Z,
            lower: -limit,
            upper: limit,
            max_velocity: DEFAULT_MAX_VELOCITY,
            max_acceleration: DEFAULT_MAX_ACCELERATION,
        };
        KinematicChain {
            joints: [
                spec([0.0, 0.0, 0.15643], PI, two_pi),
                spec([0.0, 0.005375, -0.12838], FRAC_PI_2, 2.41),
                spec([0.0, -0.21038, -0.006375], -FRAC_PI_2, two_pi),
                spec([0.0, 0.006375, -0.21038], FRAC_PI_2, 2.66),
                spec([0.0, -0.20843, -0.006375], -FRAC_PI_2, two_pi),
                spec([0.0, 0.00017505, -0.10593], FRAC_PI_2, 2.23),
                spec([0.0, -0.10593, -0.00017505], -FRAC_PI_2, two_pi),
            ],
            // bracelet flange (0.061525 m) plus gripper TCP (0.12 m), z flipped
            tool: Pose {
                position: Vec3::new(0.0, 0.0, -0.181525),
                orientation: Quat::from_rpy(PI, 0.0, 0.0),
            },
        }
    }

    /// Upper bound on the distance from the base to the tool centre point.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.displacement.norm()).sum::<f64>() + self.tool.position.norm()
    }

    pub fn clamp(&self, q: &mut [f64; DOF]) {
        for (a, j) in q.iter_mut().zip(self.joints.iter()) {
            *a = j.clamp(*a);
        }
    }

    pub fn within_limits(&self, q: &[f64; DOF]) -> bool {
        q.iter().zip(self.joints.iter()).all(|(a, j)| *a >= j.lower && *a <= j.upper)
    }

    pub fn forward(&self, q: &[f64; DOF]) -> FkResult {
        let mut frame = Pose::IDENTITY;
        let mut joint_origins = [Vec3::ZERO; DOF];
        let mut joint_axes = [Vec3::ZERO; DOF];
        for (i, j) in self.joints.iter().enumerate() {
            frame = frame.compose(&Pose { position: j.displacement, orientation: j.rotation });
            joint_origins[i] = frame.position;
            joint_axes[i] = frame.orientation.rotate(j.axis);
            frame = frame.compose(&Pose {
                position: Vec3::ZERO,
                orientation: Quat::from_axis_angle(j.axis, q[i]),
            });
        }
        FkResult { tool: frame.compose(&self.tool), joint_origins, joint_axes }
    }
}

pub fn forward_kinematics(chain: &KinematicChain, q: &[f64; DOF]) -> Pose {
    chain.forward(q).tool
}

/// Geometric Jacobian of the tool frame: rows 0..3 linear, 3..6 angular.
pub fn jacobian(chain: &KinematicChain, q: &[f64; DOF]) -> [[f64; DOF]; 6] {
    let fk = chain.forward(q);
    let p = fk.tool.position;
    let mut j = [[0.0; DOF]; 6];
    for i in 0..DOF {
        let a = fk.joint_axes[i];
        let lin = a.cross(p - fk.joint_origins[i]);
        for r in 0..3 {
            j[r][i] = lin[r];
            j[r + 3][i] = a[r];
        }
    }
    j
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkParams {
    pub damping: f64,
    pub step_clamp: f64,
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        IkParams {
            damping: 0.1,
            step_clamp: 0.2,
            max_iterations: 200,
            position_tolerance: 1e-3,
            orientation_tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSolution {
    pub angles: [f64; DOF],
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IkError {
    Unreachable { distance: f64, reach: f64 },
    NoConvergence { position_error: f64, orientation_error: f64 },
}

impl fmt::Display for IkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IkError::Unreachable { distance, reach } => {
                write!(f, "unreachable: target {distance:.3} m from base, reach {reach:.3} m")
            }
            IkError::NoConvergence { position_error, orientation_error } => write!(
                f,
                "no convergence (position error {position_error:.2e} m, orientation error {orientation_error:.2e} rad)"
            ),
        }
    }
}

impl core::error::Error for IkError {}

/// Error twist taking `current` to `target`: position difference and the
/// rotation vector of `target * current^-1`, both in the world frame.
pub fn pose_error(current: &Pose, target: &Pose) -> [f64; 6] {
    let dp = target.position - current.position;
    let dr = (target.orientation * current.orientation.conjugate()).to_rotation_vector();
    [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]
}

/// Damped least squares: `q += J^T (J J^T + lambda^2 I)^-1 e`, with the step
/// scaled so no joint moves more than `step_clamp` and the result clamped to
/// the joint limits every iteration.
pub fn ik_solve(
    chain: &KinematicChain,
    target: &Pose,
    seed: &[f64; DOF],
    params: &IkParams,
) -> Result<IkSolution, IkError> {
    let reach = chain.reach();
    let distance = target.position.norm();
    if distance > reach {
        return Err(IkError::Unreachable { distance, reach });
    }
    let mut q = *seed;
    chain.clamp(&mut q);
    let lambda2 = params.damping * params.damping;
    let mut iterations = 0;
    loop {
        let current = forward_kinematics(chain, &q);
        let e = pose_error(&current, target);
        let pos_err = math::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
        let rot_err = math::sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5]);
        if pos_err < params.position_tolerance && rot_err < params.orientation_tolerance {
            return Ok(IkSolution {
                angles: q,
                iterations,
                position_error: pos_err,
                orientation_error: rot_err,
            });
        }
        if iterations >= params.max_iterations {
            return Err(IkError::NoConvergence { position_error: pos_err, orientation_error: rot_err });
        }
        iterations += 1;
        let j = jacobian(chain, &q);
        let mut a = [[0.0; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                let mut s = 0.0;
                for k in 0..DOF {
                    s += j[r][k] * j[c][k];
                }
                a[r][c] = s;
            }
            a[r][r] += lambda2;
        }
        let Some(y) = cholesky_solve(a, e) else {
            return Err(IkError::NoConvergence { position_error: pos_err, orientation_error: rot_err });
        };
        let mut dq = [0.0; DOF];
        for (k, d) in dq.iter_mut().enumerate() {
            *d = (0..6).map(|r| j[r][k] * y[r]).sum();
        }
        let largest = dq.iter().fold(0.0f64, |m, d| m.max(math::abs(*d)));
        if largest > params.step_clamp {
            let s = params.step_clamp / largest;
            dq.iter_mut().for_each(|d| *d *= s);
        }
        for k in 0..DOF {
            q[k] = chain.joints[k].clamp(q[k] + dq[k]);
        }
    }
}

/// Solves `a x = b` for symmetric positive definite `a`.
fn cholesky_solve(a: [[f64; 6]; 6], b: [f64; 6]) -> Option<[f64; 6]> {
    let mut l = [[0.0; 6]; 6];
    for i in 0..6 {
        for k in 0..=i {
            let mut s = a[i][k];
            for m in 0..k {
                s -= l[i][m] * l[k][m];
            }
            if i == k {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = math::sqrt(s);
            } else {
                l[i][k] = s / l[k][k];
            }
        }
    }
    let mut y = [0.0; 6];
    for i in 0..6 {
        let mut s = b[i];
        for m in 0..i {
            s -= l[i][m] * y[m];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 6];
    for i in (0..6).rev() {
        let mut s = y[i];
        for m in (i + 1)..6 {
            s -= l[m][i] * x[m];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Gripper pointing straight down, heading aligned with the object. With
/// `hover > 0` the tool sits that far above the object top; with `hover == 0`
/// it sits at grasp depth, `FINGER_ENGAGEMENT` below the top.
pub fn top_down_pose(object_pose: &Pose, half_height: f64, hover: f64) -> Pose {
    let top = object_pose.position + Vec3::new(0.0, 0.0, half_height);
    let position = if hover > 0.0 { top + Vec3::new(0.0, 0.0, hover) } else { top - Vec3::new(0.0, 0.0, FINGER_ENGAGEMENT) };
    Pose { position, orientation: top_down_orientation(object_pose.orientation.yaw()) }
}

pub fn top_down_orientation(yaw: f64) -> Quat {
    Quat::from_yaw(yaw) * Quat::from_axis_angle(Vec3::X, core::f64::consts::PI)
}
