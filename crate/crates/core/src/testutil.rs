//! Shared fixtures for unit tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::desktop::make_mesh;
use crate::geometry::Vec2;
use crate::kinematics::JointState;
use crate::scene::{DesktopMesh, ObjectInstance, ObjectModel, Plane, SceneState};

pub fn table() -> DesktopMesh {
    let boundary = vec![
        Vec2::new(-0.2, -0.6),
        Vec2::new(1.0, -0.6),
        Vec2::new(1.0, 0.6),
        Vec2::new(-0.2, 0.6),
    ];
    make_mesh(&boundary, Plane::horizontal(0.0)).unwrap()
}

pub fn table_scene(catalog: Vec<ObjectModel>, objects: Vec<ObjectInstance>) -> SceneState {
    SceneState::new(catalog, table(), objects, JointState::default()).unwrap()
}
