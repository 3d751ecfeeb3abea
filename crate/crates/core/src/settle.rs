//! Quasi-static placement preview: where a released box comes to rest.
//!
//! The released box is snapped upright (heading kept), dropped straight down
//! onto the highest surface under its footprint, and checked for static
//! stability. A box whose centre of mass projects outside the eroded contact
//! region slides away from the support in fixed steps and keeps falling
//! until it rests stably. The desktop always supports stably.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::collision::{penetration_depth, plane_penetration, Obb};
use crate::geometry::{clip_convex, convex_hull, convex_interior_depth, polygon_centroid, signed_area, Pose, Vec2, Vec3};
use crate::math;
use crate::scene::{SceneState, CONTACT_TOLERANCE};

/// Smallest footprint overlap that counts as support, m^2.
pub const MIN_SUPPORT_AREA: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SettleParams {
    pub margin: f64,
    pub slide_step: f64,
    pub gravity: f64,
    /// Time charged per slide step in the trace.
    pub slide_dt: f64,
    pub max_slide_steps: usize,
}

impl Default for SettleParams {
    fn default() -> Self {
        SettleParams { margin: 0.005, slide_step: 0.005, gravity: 9.81, slide_dt: 0.05, max_slide_steps: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Support {
    Desktop,
    OnObject(String),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SettleResult {
    pub final_pose: Pose,
    pub support: Support,
    pub stable: bool,
    pub trace: Vec<(f64, Pose)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SettleError {
    UnknownInstance(String),
    OutsideWorkspace,
    InvalidRelease { depth: f64 },
}

impl fmt::Display for SettleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettleError::UnknownInstance(id) => write!(f, "unknown instance '{id}'"),
            SettleError::OutsideWorkspace => f.write_str("release outside workspace"),
            SettleError::InvalidRelease { depth } => {
                write!(f, "invalid release pose (interpenetration {depth:.6} m)")
            }
        }
    }
}

impl core::error::Error for SettleError {}

/// A resting box another box may land on.
#[derive(Clone, Debug)]
pub struct Collider {
    pub instance_id: String,
    pub obb: Obb,
    pub footprint: Vec<Vec2>,
    pub top: f64,
    pub bottom: f64,
}

impl Collider {
    pub fn new(instance_id: impl Into<String>, obb: Obb) -> Self {
        Collider { instance_id: instance_id.into(), footprint: obb.footprint(), top: obb.max_z(), bottom: obb.min_z(), obb }
    }
}

/// Every resting (not held) instance except `exclude`.
pub fn colliders(scene: &SceneState, exclude: &str) -> Vec<Collider> {
    scene
        .objects
        .iter()
        .filter(|o| !o.held && o.instance_id != exclude)
        .map(|o| Collider::new(o.instance_id.clone(), scene.actual_obb(o)))
        .collect()
}

/// True iff `com` lies strictly inside the convex footprint eroded by `margin`.
pub fn support_check(com: Vec2, footprint: &[Vec2], margin: f64) -> bool {
    if footprint.len() < 3 {
        return false;
    }
    let mut poly = footprint.to_vec();
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    convex_interior_depth(com, &poly) > margin
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contact {
    pub height: f64,
    pub support: Support,
    /// Convex hull of the contact regions at `height` (the desktop contact
    /// is the falling footprint itself).
    pub region: Vec<Vec2>,
}

/// Highest surface under an upright falling box: the desktop plane under
/// its footprint or the top face of a resting box whose footprint overlaps
/// by more than `MIN_SUPPORT_AREA` (or reaches more than `CONTACT_TOLERANCE`
/// into it). Only surfaces at or below the box bottom are candidates.
pub fn box_contact_height(falling: &Obb, scene: &SceneState, others: &[Collider]) -> Contact {
    let fp = falling.footprint();
    let bottom = falling.min_z();
    let plane = &scene.desktop.plane;
    let desk = fp
        .iter()
        .filter_map(|p| plane.height_at(p.x, p.y))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut candidates: Vec<(usize, f64, Vec<Vec2>)> = Vec::new();
    for (k, c) in others.iter().enumerate() {
        if c.top > bottom + CONTACT_TOLERANCE {
            continue;
        }
        let overlap = clip_convex(&fp, &c.footprint);
        let area = math::abs(signed_area(&overlap));
        // a thin corner can have almost no area yet reach deep into the
        // neighbour; it still holds the box up (unstably)
        if area > MIN_SUPPORT_AREA || footprint_overlap(&fp, &c.footprint) > CONTACT_TOLERANCE {
            candidates.push((k, area, overlap));
        }
    }
    let top = candidates.iter().map(|(k, _, _)| others[*k].top).fold(f64::NEG_INFINITY, f64::max);
    if candidates.is_empty() || top < desk - 1e-9 {
        return Contact { height: desk, support: Support::Desktop, region: fp };
    }
    candidates.retain(|(k, _, _)| others[*k].top >= top - 1e-9);
    let mut main = 0;
    for i in 1..candidates.len() {
        if candidates[i].1 > candidates[main].1 {
            main = i;
        }
    }
    let pts: Vec<Vec2> = candidates.iter().flat_map(|(_, _, o)| o.iter().copied()).collect();
    Contact {
        height: top,
        support: Support::OnObject(others[candidates[main].0].instance_id.clone()),
        region: convex_hull(&pts),
    }
}

/// Least overlap of two convex polygons over their edge normals; negative
/// when they are apart.
fn footprint_overlap(a: &[Vec2], b: &[Vec2]) -> f64 {
    let mut best = f64::INFINITY;
    for poly in [a, b] {
        for i in 0..poly.len() {
            let e = poly[(i + 1) % poly.len()] - poly[i];
            let n = e.norm();
            if n < 1e-15 {
                continue;
            }
            let axis = Vec2::new(-e.y / n, e.x / n);
            let range = |p: &[Vec2]| {
                p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let d = v.dot(axis);
                    (lo.min(d), hi.max(d))
                })
            };
            let (la, ha) = range(a);
            let (lb, hb) = range(b);
            best = best.min(ha.min(hb) - la.max(lb));
        }
    }
    best
}

/// Rest pose of `instance_id` released at `release_pose`.
pub fn settle(
    scene: &SceneState,
    instance_id: &str,
    release_pose: &Pose,
    params: &SettleParams,
) -> Result<SettleResult, SettleError> {
    let inst = scene
        .instance(instance_id)
        .ok_or_else(|| SettleError::UnknownInstance(instance_id.into()))?;
    let half = scene.model_of(inst).half_extents;
    let others = colliders(scene, instance_id);
    settle_box(scene, half, release_pose, &others, params)
}

/// Same as [`settle`] for an arbitrary box against explicit colliders.
pub fn settle_box(
    scene: &SceneState,
    half: Vec3,
    release_pose: &Pose,
    others: &[Collider],
    params: &SettleParams,
) -> Result<SettleResult, SettleError> {
    let mut pose = release_pose.upright();
    if !scene.desktop.contains_xy(pose.position) {
        return Err(SettleError::OutsideWorkspace);
    }
    let mut obb = Obb::new(pose, half);
    let plane = &scene.desktop.plane;
    let desk_depth = plane_penetration(&obb, plane.normal, plane.offset);
    if desk_depth > CONTACT_TOLERANCE {
        return Err(SettleError::InvalidRelease { depth: desk_depth });
    }
    for c in others {
        let d = penetration_depth(&obb, &c.obb);
        if d > CONTACT_TOLERANCE {
            return Err(SettleError::InvalidRelease { depth: d });
        }
    }
    let mut t = 0.0;
    let mut trace = alloc::vec![(t, pose)];
    let mut slides = 0;
    loop {
        let contact = box_contact_height(&obb, scene, others);
        let drop = (obb.min_z() - contact.height).max(0.0);
        if drop > 0.0 {
            pose.position.z -= drop;
            t += math::sqrt(2.0 * drop / params.gravity);
            trace.push((t, pose));
        }
        let com = pose.position.xy();
        let stable = match contact.support {
            Support::Desktop => true,
            Support::OnObject(_) => support_check(com, &contact.region, params.margin),
        };
        if stable {
            return Ok(SettleResult { final_pose: pose, support: contact.support, stable: true, trace });
        }
        if slides >= params.max_slide_steps {
            return Ok(SettleResult { final_pose: pose, support: contact.support, stable: false, trace });
        }
        let away = com - polygon_centroid(&contact.region);
        let n = away.norm();
        let dir = if n > 1e-12 { away / n } else { Vec2::new(1.0, 0.0) };
        let mut next = pose;
        next.position.x += dir.x * params.slide_step;
        next.position.y += dir.y * params.slide_step;
        if !scene.desktop.contains_xy(next.position) {
            return Err(SettleError::OutsideWorkspace);
        }
        let next_obb = Obb::new(next, half);
        if others.iter().any(|c| penetration_depth(&next_obb, &c.obb) > CONTACT_TOLERANCE) {
            // a taller neighbour blocks the slide
            return Ok(SettleResult { final_pose: pose, support: contact.support, stable: false, trace });
        }
        pose = next;
        obb = next_obb;
        t += params.slide_dt;
        slides += 1;
        trace.push((t, pose));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ObjectInstance, ObjectModel};
    use crate::testutil::table_scene;
    use alloc::vec;

    fn scene_with(objects: Vec<ObjectInstance>) -> SceneState {
        table_scene(
            vec![
                ObjectModel::new("tall", Vec3::new(0.03, 0.03, 0.05), 0.2, 0.06).unwrap(),
                ObjectModel::new("slab", Vec3::new(0.05, 0.05, 0.05), 0.3, 0.08).unwrap(),
                ObjectModel::new("flat", Vec3::new(0.05, 0.05, 0.02), 0.1, 0.08).unwrap(),
            ],
            objects,
        )
    }

    #[test]
    fn flat_drop_onto_desktop() {
        let s = scene_with(vec![ObjectInstance::new("b", "tall", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0))]);
        let r = settle(&s, "b", &Pose::from_xyz_yaw(0.5, 0.0, 0.3, 0.0), &SettleParams::default()).unwrap();
        assert!((r.final_pose.position.z - 0.05).abs() < 1e-12);
        assert_eq!(r.support, Support::Desktop);
        assert!(r.stable);
    }

    #[test]
    fn centred_stack() {
        let s = scene_with(vec![
            ObjectInstance::new("a", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0)),
            ObjectInstance::new("b", "tall", Pose::from_xyz_yaw(0.3, 0.0, 0.05, 0.0)),
        ]);
        let r = settle(&s, "b", &Pose::from_xyz_yaw(0.5, 0.0, 0.4, 0.2), &SettleParams::default()).unwrap();
        assert_eq!(r.support, Support::OnObject("a".into()));
        assert!((r.final_pose.position.z - 0.15).abs() < 1e-12);
    }

    #[test]
    fn tilted_release_is_snapped_upright() {
        let s = scene_with(vec![ObjectInstance::new("b", "tall", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0))]);
        let tilted = Pose::new(Vec3::new(0.5, 0.1, 0.4), crate::geometry::Quat::from_rpy(0.3, -0.2, 0.7)).unwrap();
        let r = settle(&s, "b", &tilted, &SettleParams::default()).unwrap();
        assert!(r.final_pose.orientation.tilt() < 1e-9);
        assert!((r.final_pose.orientation.yaw() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn release_outside_or_inside_objects_errors() {
        let s = scene_with(vec![
            ObjectInstance::new("a", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0)),
            ObjectInstance::new("b", "tall", Pose::from_xyz_yaw(0.3, 0.0, 0.05, 0.0)),
        ]);
        let p = SettleParams::default();
        assert_eq!(settle(&s, "b", &Pose::from_xyz_yaw(3.0, 0.0, 0.3, 0.0), &p), Err(SettleError::OutsideWorkspace));
        assert!(matches!(
            settle(&s, "b", &Pose::from_xyz_yaw(0.5, 0.0, 0.08, 0.0), &p),
            Err(SettleError::InvalidRelease { .. })
        ));
        assert!(matches!(settle(&s, "zz", &Pose::IDENTITY, &p), Err(SettleError::UnknownInstance(_))));
    }

    #[test]
    fn support_check_boundary_is_unstable() {
        let sq = [Vec2::new(-1.0, -1.0), Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0), Vec2::new(-1.0, 1.0)];
        assert!(support_check(Vec2::new(0.0, 0.0), &sq, 0.1));
        assert!(!support_check(Vec2::new(0.9, 0.0), &sq, 0.1));
        assert!(!support_check(Vec2::new(0.95, 0.0), &sq, 0.1));
    }

    #[test]
    fn higher_support_wins() {
        let s = scene_with(vec![
            ObjectInstance::new("low", "flat", Pose::from_xyz_yaw(0.47, 0.0, 0.02, 0.0)),
            ObjectInstance::new("high", "tall", Pose::from_xyz_yaw(0.60, 0.0, 0.05, 0.0)),
            ObjectInstance::new("b", "slab", Pose::from_xyz_yaw(0.3, 0.3, 0.05, 0.0)),
        ]);
        let falling = Obb::new(Pose::from_xyz_yaw(0.54, 0.0, 0.5, 0.0), Vec3::new(0.05, 0.05, 0.05));
        let c = box_contact_height(&falling, &s, &colliders(&s, "b"));
        assert!((c.height - 0.10).abs() < 1e-12);
        assert_eq!(c.support, Support::OnObject("high".into()));
        let empty = box_contact_height(&falling, &s, &[]);
        assert_eq!(empty.support, Support::Desktop);
        assert_eq!(empty.height, 0.0);
    }

    #[test]
    fn settling_a_settled_pose_is_idempotent() {
        let s = scene_with(vec![
            ObjectInstance::new("a", "slab", Pose::from_xyz_yaw(0.5, 0.0, 0.05, 0.0)),
            ObjectInstance::new("b", "tall", Pose::from_xyz_yaw(0.3, 0.0, 0.05, 0.0)),
        ]);
        let p = SettleParams::default();
        let first = settle(&s, "b", &Pose::from_xyz_yaw(0.51, 0.01, 0.3, 0.4), &p).unwrap();
        let again = settle(&s, "b", &first.final_pose, &p).unwrap();
        assert!((again.final_pose.position - first.final_pose.position).norm() < 1e-9);
    }
}
