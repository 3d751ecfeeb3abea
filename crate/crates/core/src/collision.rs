//! Oriented bounding boxes and separating-axis overlap tests.

use crate::geometry::{Pose, Vec2, Vec3};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obb {
    pub pose: Pose,
    pub half_extents: Vec3,
}

impl Obb {
    pub fn new(pose: Pose, half_extents: Vec3) -> Self {
        Obb { pose, half_extents }
    }

    pub fn axes(&self) -> [Vec3; 3] {
        let q = self.pose.orientation;
        [q.rotate(Vec3::X), q.rotate(Vec3::Y), q.rotate(Vec3::Z)]
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.pose.transform_point(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        out
    }

    /// Half length of the projection onto a unit axis.
    pub fn projected_radius(&self, axis: Vec3) -> f64 {
        let [a0, a1, a2] = self.axes();
        let h = self.half_extents;
        h.x * math::abs(a0.dot(axis)) + h.y * math::abs(a1.dot(axis)) + h.z * math::abs(a2.dot(axis))
    }

    pub fn min_z(&self) -> f64 {
        self.pose.position.z - self.projected_radius(Vec3::Z)
    }

    pub fn max_z(&self) -> f64 {
        self.pose.position.z + self.projected_radius(Vec3::Z)
    }

    /// Counter-clockwise footprint of the box projected onto the xy plane.
    pub fn footprint(&self) -> alloc::vec::Vec<Vec2> {
        let pts: alloc::vec::Vec<Vec2> = self.corners().iter().map(|c| c.xy()).collect();
        crate::geometry::convex_hull(&pts)
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        let local = self.pose.inverse().transform_point(p);
        let h = self.half_extents;
        math::abs(local.x) <= h.x + tol
            && math::abs(local.y) <= h.y + tol
            && math::abs(local.z) <= h.z + tol
    }
}

/// Penetration depth between two boxes: the smallest projected overlap over
/// all 15 separating-axis candidates. Non-positive means separated or
/// touching; the magnitude of a negative value is a lower bound on the gap.
pub fn penetration_depth(a: &Obb, b: &Obb) -> f64 {
    let aa = a.axes();
    let ba = b.axes();
    let d = b.pose.position - a.pose.position;
    let mut depth = f64::INFINITY;
    let mut test = |axis: Vec3| {
        let overlap = a.projected_radius(axis) + b.projected_radius(axis) - math::abs(d.dot(axis));
        if overlap < depth {
            depth = overlap;
        }
    };
    for &ax in aa.iter().chain(ba.iter()) {
        test(ax);
    }
    for &u in aa.iter() {
        for &v in ba.iter() {
            let c = u.cross(v);
            let n = c.norm();
            // parallel edge pairs add nothing beyond the face axes
            if n > 1e-9 {
                test(c / n);
            }
        }
    }
    depth
}

/// Depth of the box below the plane `normal . p = offset` (non-positive when
/// the box lies entirely on the positive side).
pub fn plane_penetration(b: &Obb, normal: Vec3, offset: f64) -> f64 {
    let lowest = b.corners().iter().map(|c| normal.dot(*c)).fold(f64::INFINITY, f64::min);
    offset - lowest
}
