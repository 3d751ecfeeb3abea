//! The authoritative simulated world: object catalog, instances with actual
//! and ghost poses, the desktop surface and the arm/gripper state.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::collision::{penetration_depth, plane_penetration, Obb};
use crate::geometry::{is_simple_polygon, point_in_polygon, signed_area, Pose, Vec2, Vec3};
use crate::kinematics::JointState;
use crate::math;

/// Robotiq 2F-85 stroke.
pub const MAX_GRIPPER_APERTURE: f64 = 0.085;

/// Largest overlap tolerated between resting boxes.
pub const CONTACT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub enum SceneError {
    UnknownInstance(String),
    UnknownModel { instance_id: String, model_id: String },
    DuplicateModel(String),
    DuplicateInstance(String),
    InvalidModel { model_id: String, reason: &'static str },
    InvalidDesktop(&'static str),
    BelowDesktop { instance_id: String, depth: f64 },
    Interpenetration { a: String, b: String, depth: f64 },
    MultipleHeld,
    InvalidPose(crate::geometry::PoseError),
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::UnknownInstance(id) => write!(f, "unknown instance '{id}'"),
            SceneError::UnknownModel { instance_id, model_id } => {
                write!(f, "instance '{instance_id}' references unknown model '{model_id}'")
            }
            SceneError::DuplicateModel(id) => write!(f, "duplicate model id '{id}'"),
            SceneError::DuplicateInstance(id) => write!(f, "duplicate instance id '{id}'"),
            SceneError::InvalidModel { model_id, reason } => {
                write!(f, "model '{model_id}': {reason}")
            }
            SceneError::InvalidDesktop(reason) => write!(f, "invalid desktop: {reason}"),
            SceneError::BelowDesktop { instance_id, depth } => {
                write!(f, "instance '{instance_id}' penetrates the desktop by {depth:.6} m")
            }
            SceneError::Interpenetration { a, b, depth } => {
                write!(f, "instances '{a}' and '{b}' interpenetrate by {depth:.6} m")
            }
            SceneError::MultipleHeld => f.write_str("more than one instance is held"),
            SceneError::InvalidPose(e) => write!(f, "invalid pose: {e}"),
        }
    }
}

impl core::error::Error for SceneError {}

impl From<crate::geometry::PoseError> for SceneError {
    fn from(e: crate::geometry::PoseError) -> Self {
        SceneError::InvalidPose(e)
    }
}

/// Box approximation of a catalog object.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectModel {
    pub model_id: String,
    pub half_extents: Vec3,
    pub mass: f64,
    /// Finger aperture at contact.
    pub grasp_width: f64,
}

impl ObjectModel {
    pub fn new(
        model_id: impl Into<String>,
        half_extents: Vec3,
        mass: f64,
        grasp_width: f64,
    ) -> Result<Self, SceneError> {
        let m = ObjectModel { model_id: model_id.into(), half_extents, mass, grasp_width };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let err = |reason| SceneError::InvalidModel { model_id: self.model_id.clone(), reason };
        let h = self.half_extents;
        if !(h.x > 0.0 && h.y > 0.0 && h.z > 0.0) || !h.is_finite() {
            return Err(err("half extents must be positive"));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(err("mass must be positive"));
        }
        if !(self.grasp_width > 0.0) {
            return Err(err("grasp width must be positive"));
        }
        if self.grasp_width > MAX_GRIPPER_APERTURE {
            return Err(err("grasp width exceeds the 0.085 m gripper aperture"));
        }
        if self.grasp_width > 2.0 * h.x.min(h.y) + 1e-12 {
            return Err(err("grasp width exceeds the smallest horizontal extent"));
        }
        Ok(())
    }

    pub fn height(&self) -> f64 {
        2.0 * self.half_extents.z
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectInstance {
    pub instance_id: String,
    pub model_id: String,
    /// Where the object really is.
    pub actual_pose: Pose,
    /// Where the operator wants it; coincides with `actual_pose` until dragged.
    pub ghost_pose: Pose,
    pub held: bool,
}

impl ObjectInstance {
    pub fn new(instance_id: impl Into<String>, model_id: impl Into<String>, pose: Pose) -> Self {
        ObjectInstance {
            instance_id: instance_id.into(),
            model_id: model_id.into(),
            actual_pose: pose,
            ghost_pose: pose,
            held: false,
        }
    }
}

/// Plane `normal . p = offset`, normal of unit length.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Option<Plane> {
        let n = normal.normalized()?;
        let scale = normal.norm();
        Some(Plane { normal: n, offset: offset / scale })
    }

    pub fn horizontal(height: f64) -> Plane {
        Plane { normal: Vec3::Z, offset: height }
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// In-plane orthonormal axes `(u, v)` with `u x v = normal`. For an
    /// upward normal `u` is world x and `v` world y.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let n = self.normal;
        let helper = if math::abs(n.x) < 0.9 { Vec3::X } else { Vec3::Y };
        let u = (helper - n * helper.dot(n)).normalized().unwrap_or(Vec3::X);
        let v = n.cross(u);
        (u, v)
    }

    pub fn origin(&self) -> Vec3 {
        self.normal * self.offset
    }

    pub fn to_plane_coords(&self, p: Vec3) -> Vec2 {
        let (u, v) = self.basis();
        let d = p - self.origin();
        Vec2::new(d.dot(u), d.dot(v))
    }

    pub fn from_plane_coords(&self, q: Vec2) -> Vec3 {
        let (u, v) = self.basis();
        self.origin() + u * q.x + v * q.y
    }

    /// Height of the plane above `(x, y)`; `None` for a vertical plane.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        let n = self.normal;
        if math::abs(n.z) < 1e-9 {
            return None;
        }
        Some((self.offset - n.x * x - n.y * y) / n.z)
    }

    /// Point on the plane vertically below (or above) `p`.
    pub fn vertical_projection(&self, p: Vec3) -> Option<Vec3> {
        self.height_at(p.x, p.y).map(|z| Vec3::new(p.x, p.y, z))
    }
}

/// Triangulated work surface.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesktopMesh {
    pub plane: Plane,
    /// Counter-clockwise outline in plane coordinates.
    pub boundary: Vec<Vec2>,
    /// Index triples into `boundary`.
    pub triangles: Vec<[usize; 3]>,
}

impl DesktopMesh {
    /// Checks the mesh invariants: unit normal, simple boundary, triangles in
    /// range and covering the polygon area.
    pub fn validate(&self) -> Result<(), SceneError> {
        if (self.plane.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(SceneError::InvalidDesktop("plane normal is not unit length"));
        }
        if !is_simple_polygon(&self.boundary) {
            return Err(SceneError::InvalidDesktop("boundary is not a simple polygon"));
        }
        let n = self.boundary.len();
        let mut tri_area = 0.0;
        for t in &self.triangles {
            if t.iter().any(|&i| i >= n) {
                return Err(SceneError::InvalidDesktop("triangle index out of range"));
            }
            let tri = [self.boundary[t[0]], self.boundary[t[1]], self.boundary[t[2]]];
            tri_area += math::abs(signed_area(&tri));
        }
        let area = math::abs(signed_area(&self.boundary));
        if area <= 0.0 || math::abs(tri_area - area) > 1e-6 * area {
            return Err(SceneError::InvalidDesktop("triangulated area differs from polygon area"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        math::abs(signed_area(&self.boundary))
    }

    /// True when the vertical line through `p` hits the triangulated region.
    pub fn contains_xy(&self, p: Vec3) -> bool {
        match self.plane.vertical_projection(p) {
            Some(on_plane) => point_in_polygon(self.plane.to_plane_coords(on_plane), &self.boundary),
            None => false,
        }
    }

    /// World-frame vertices.
    pub fn world_vertices(&self) -> Vec<Vec3> {
        self.boundary.iter().map(|&q| self.plane.from_plane_coords(q)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneState {
    pub catalog: Vec<ObjectModel>,
    pub desktop: DesktopMesh,
    pub objects: Vec<ObjectInstance>,
    pub joints: JointState,
    pub gripper_aperture: f64,
    pub sim_time: f64,
    /// Pose of the held object relative to the tool frame.
    pub grasp_offset: Option<Pose>,
}

impl SceneState {
    /// Builds a validated scene with ghosts on their actual poses and the
    /// gripper fully open.
    pub fn new(
        catalog: Vec<ObjectModel>,
        desktop: DesktopMesh,
        objects: Vec<ObjectInstance>,
        joints: JointState,
    ) -> Result<Self, SceneError> {
        let mut scene = SceneState {
            catalog,
            desktop,
            objects,
            joints,
            gripper_aperture: MAX_GRIPPER_APERTURE,
            sim_time: 0.0,
            grasp_offset: None,
        };
        for o in scene.objects.iter_mut() {
            o.ghost_pose = o.actual_pose;
            o.held = false;
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for (i, m) in self.catalog.iter().enumerate() {
            m.validate()?;
            if self.catalog[..i].iter().any(|o| o.model_id == m.model_id) {
                return Err(SceneError::DuplicateModel(m.model_id.clone()));
            }
        }
        self.desktop.validate()?;
        for (i, o) in self.objects.iter().enumerate() {
            if self.objects[..i].iter().any(|p| p.instance_id == o.instance_id) {
                return Err(SceneError::DuplicateInstance(o.instance_id.clone()));
            }
            if self.model(&o.model_id).is_none() {
                return Err(SceneError::UnknownModel {
                    instance_id: o.instance_id.clone(),
                    model_id: o.model_id.clone(),
                });
            }
        }
        if self.objects.iter().filter(|o| o.held).count() > 1 {
            return Err(SceneError::MultipleHeld);
        }
        let resting: Vec<(usize, Obb)> = self
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.held)
            .map(|(i, o)| (i, self.actual_obb(o)))
            .collect();
        for &(i, ref b) in &resting {
            let depth = plane_penetration(b, self.desktop.plane.normal, self.desktop.plane.offset);
            if depth > CONTACT_TOLERANCE {
                return Err(SceneError::BelowDesktop {
                    instance_id: self.objects[i].instance_id.clone(),
                    depth,
                });
            }
        }
        for (k, &(i, ref a)) in resting.iter().enumerate() {
            for &(j, ref b) in &resting[k + 1..] {
                let depth = penetration_depth(a, b);
                if depth > CONTACT_TOLERANCE {
                    return Err(SceneError::Interpenetration {
                        a: self.objects[i].instance_id.clone(),
                        b: self.objects[j].instance_id.clone(),
                        depth,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn model(&self, model_id: &str) -> Option<&ObjectModel> {
        self.catalog.iter().find(|m| m.model_id == model_id)
    }

    pub fn instance(&self, instance_id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    pub fn instance_mut(&mut self, instance_id: &str) -> Option<&mut ObjectInstance> {
        self.objects.iter_mut().find(|o| o.instance_id == instance_id)
    }

    pub fn index_of(&self, instance_id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.instance_id == instance_id)
    }

    /// Model of an instance. Scene invariants guarantee it exists.
    pub fn model_of(&self, inst: &ObjectInstance) -> &ObjectModel {
        self.model(&inst.model_id).expect("catalog closure")
    }

    pub fn actual_obb(&self, inst: &ObjectInstance) -> Obb {
        Obb::new(inst.actual_pose, self.model_of(inst).half_extents)
    }

    pub fn ghost_obb(&self, inst: &ObjectInstance) -> Obb {
        Obb::new(inst.ghost_pose, self.model_of(inst).half_extents)
    }

    pub fn held_index(&self) -> Option<usize> {
        self.objects.iter().position(|o| o.held)
    }

    /// Moves the ghost of one instance; actual poses are never touched.
    pub fn set_ghost_pose(&mut self, instance_id: &str, pose: Pose) -> Result<(), SceneError> {
        let pose = Pose::new(pose.position, pose.orientation)?;
        let inst = self
            .instance_mut(instance_id)
            .ok_or_else(|| SceneError::UnknownInstance(instance_id.into()))?;
        inst.ghost_pose = pose;
        Ok(())
    }

    pub fn reset_ghosts(&mut self) {
        for o in self.objects.iter_mut() {
            o.ghost_pose = o.actual_pose;
        }
    }

    /// Shareable immutable copy of the current state.
    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot(Arc::new(self.clone()))
    }

    /// Advances the simulation clock; time never runs backwards.
    pub fn advance_time(&mut self, dt: f64) {
        if dt > 0.0 {
            self.sim_time += dt;
        }
    }

    pub fn set_time(&mut self, t: f64) {
        if t > self.sim_time {
            self.sim_time = t;
        }
    }
}

/// Immutable, cheaply clonable view of a scene.
#[derive(Clone, Debug)]
pub struct SceneSnapshot(Arc<SceneState>);

impl SceneSnapshot {
    pub fn state(&self) -> &SceneState {
        &self.0
    }
}

impl core::ops::Deref for SceneSnapshot {
    type Target = SceneState;
    fn deref(&self) -> &SceneState {
        &self.0
    }
}

impl From<SceneState> for SceneSnapshot {
    fn from(s: SceneState) -> Self {
        SceneSnapshot(Arc::new(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::table;
    use crate::geometry::Quat;
    use alloc::vec;

    fn small_box() -> ObjectModel {
        ObjectModel::new("box", Vec3::new(0.03, 0.03, 0.05), 0.2, 0.06).unwrap()
    }

    fn one_box_scene() -> SceneState {
        let inst = ObjectInstance::new("a", "box", Pose::from_xyz_yaw(0.4, 0.0, 0.05, 0.0));
        SceneState::new(vec![small_box()], table(), vec![inst], JointState::default()).unwrap()
    }

    #[test]
    fn load_places_ghost_on_actual() {
        let s = one_box_scene();
        assert_eq!(s.objects.len(), 1);
        assert_eq!(s.objects[0].ghost_pose, s.objects[0].actual_pose);
        assert_eq!(s.gripper_aperture, MAX_GRIPPER_APERTURE);
    }

    #[test]
    fn oversized_grasp_width_rejected() {
        let e = ObjectModel::new("wide", Vec3::new(0.06, 0.06, 0.05), 0.2, 0.1).unwrap_err();
        assert!(matches!(e, SceneError::InvalidModel { .. }));
    }

    #[test]
    fn object_below_desktop_rejected() {
        let inst = ObjectInstance::new("a", "box", Pose::from_xyz_yaw(0.4, 0.0, 0.02, 0.0));
        let e = SceneState::new(vec![small_box()], table(), vec![inst], JointState::default());
        assert!(matches!(e, Err(SceneError::BelowDesktop { .. })));
    }

    #[test]
    fn unknown_model_rejected() {
        let inst = ObjectInstance::new("a", "nope", Pose::from_xyz_yaw(0.4, 0.0, 0.05, 0.0));
        let e = SceneState::new(vec![small_box()], table(), vec![inst], JointState::default());
        assert!(matches!(e, Err(SceneError::UnknownModel { .. })));
    }

    #[test]
    fn ghost_moves_alone() {
        let mut s = one_box_scene();
        let actual = s.objects[0].actual_pose;
        s.set_ghost_pose("a", actual).unwrap();
        assert_eq!(s, one_box_scene());
        let moved = Pose::from_xyz_yaw(0.4, 0.2, 0.05, 0.0);
        s.set_ghost_pose("a", moved).unwrap();
        assert_eq!(s.objects[0].ghost_pose, moved);
        assert_eq!(s.objects[0].actual_pose, actual);
        assert!(matches!(s.set_ghost_pose("b", moved), Err(SceneError::UnknownInstance(_))));
    }

    #[test]
    fn ghost_pose_normalized() {
        let mut s = one_box_scene();
        let raw = Pose { position: Vec3::new(0.4, 0.0, 0.05), orientation: Quat::new_unchecked(2.0, 0.0, 0.0, 0.0) };
        s.set_ghost_pose("a", raw).unwrap();
        assert!((s.objects[0].ghost_pose.orientation.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reset_ghosts_keeps_held_flag() {
        let mut s = one_box_scene();
        s.reset_ghosts();
        assert_eq!(s, one_box_scene());
        s.objects[0].held = true;
        s.set_ghost_pose("a", Pose::from_xyz_yaw(0.5, 0.1, 0.05, 0.3)).unwrap();
        s.reset_ghosts();
        assert!(s.objects[0].held);
        assert_eq!(s.objects[0].ghost_pose, s.objects[0].actual_pose);
    }

    #[test]
    fn snapshot_is_detached() {
        let mut s = one_box_scene();
        let snap = s.snapshot();
        assert_eq!(*snap, s);
        s.set_ghost_pose("a", Pose::from_xyz_yaw(0.6, 0.0, 0.05, 0.0)).unwrap();
        assert_ne!(*snap, s);
        s.advance_time(1.0);
        assert_eq!(snap.sim_time, 0.0);
        assert_eq!(snap.objects[0].ghost_pose, snap.objects[0].actual_pose);
    }

    #[test]
    fn time_never_decreases() {
        let mut s = one_box_scene();
        s.advance_time(0.5);
        s.advance_time(-1.0);
        s.set_time(0.1);
        assert_eq!(s.sim_time, 0.5);
    }

    #[test]
    fn plane_basis_for_upward_normal() {
        let p = Plane::horizontal(0.75);
        let (u, v) = p.basis();
        assert_eq!(u, Vec3::X);
        assert_eq!(v, Vec3::Y);
        let q = p.to_plane_coords(Vec3::new(0.3, -0.2, 0.75));
        assert!((q.x - 0.3).abs() < 1e-15 && (q.y + 0.2).abs() < 1e-15);
    }
}
