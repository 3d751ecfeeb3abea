//! Simulation core of a task-centric teleoperation stack: desktop detection
//! from point clouds, quasi-static settling of released boxes, arm
//! kinematics, and an executor for batch and streamed pick-and-place.
//!
//! The crate is `no_std` with `alloc`; all floating point goes through
//! `libm` so results do not depend on the platform's math library.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod collision;
pub mod desktop;
pub mod executor;
pub mod geometry;
pub mod kinematics;
pub mod math;
pub mod scene;
pub mod settle;
pub mod synth;
pub mod trajectory;

#[cfg(test)]
mod testutil;

pub use geometry::{Pose, Quat, Vec2, Vec3};
pub use scene::{DesktopMesh, ObjectInstance, ObjectModel, Plane, SceneState};
