#![allow(dead_code)]

pub mod settle_oracle;

use teleop_core::desktop::make_mesh;
use teleop_core::kinematics::{ik_solve, top_down_pose, IkParams, JointState, KinematicChain};
use teleop_core::scene::{DesktopMesh, ObjectInstance, ObjectModel, Plane, SceneState};
use teleop_core::{Pose, Vec2};

pub const HOME: [f64; 7] = [0.0, 0.26, 3.14, -2.27, 0.0, 0.96, 1.57];

/// 1.2 m square table top at z = 0 in front of the arm.
pub fn table() -> DesktopMesh {
    let b = vec![Vec2::new(-0.2, -0.6), Vec2::new(1.0, -0.6), Vec2::new(1.0, 0.6), Vec2::new(-0.2, 0.6)];
    make_mesh(&b, Plane::horizontal(0.0)).unwrap()
}

pub fn scene(catalog: Vec<ObjectModel>, objects: Vec<ObjectInstance>) -> SceneState {
    SceneState::new(catalog, table(), objects, JointState::default()).unwrap()
}

/// Tool pointing down 0.3 m above the table at x = 0.45.
pub fn ready_joints(chain: &KinematicChain) -> [f64; 7] {
    let ready = top_down_pose(&Pose::from_xyz_yaw(0.45, 0.0, 0.0, 0.0), 0.0, 0.3);
    ik_solve(chain, &ready, &HOME, &IkParams::default()).unwrap().angles
}
