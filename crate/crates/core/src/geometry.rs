//! Small fixed-size linear algebra: vectors, quaternions, rigid poses and
//! planar polygon helpers.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use crate::math;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(from = "[f64; 3]", into = "[f64; 3]")
)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_squared())
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn xy(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_abs(self) -> f64 {
        math::abs(self.x).max(math::abs(self.y)).max(math::abs(self.z))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(from = "[f64; 2]", into = "[f64; 2]")
)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

/// Unit quaternion stored as (w, x, y, z).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(from = "[f64; 4]", into = "[f64; 4]")
)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat { w: a[0], x: a[1], y: a[2], z: a[3] }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new_unchecked(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Normalized copy, `None` when the norm is zero or not finite. Unit
    /// quaternions (to rounding) come back unchanged, so normalizing is
    /// idempotent.
    pub fn normalized(self) -> Option<Quat> {
        let n = self.norm();
        if !(n.is_finite() && n > 1e-12) {
            return None;
        }
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Some(self);
        }
        Some(Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n })
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let axis = axis.normalized().unwrap_or(Vec3::Z);
        let (s, c) = (math::sin(angle * 0.5), math::cos(angle * 0.5));
        Quat { w: c, x: axis.x * s, y: axis.y * s, z: axis.z * s }
    }

    /// Rotation from a rotation vector (axis scaled by angle).
    pub fn from_rotation_vector(v: Vec3) -> Quat {
        let angle = v.norm();
        if angle < 1e-12 {
            return Quat { w: 1.0, x: 0.5 * v.x, y: 0.5 * v.y, z: 0.5 * v.z }.normalized().unwrap();
        }
        Quat::from_axis_angle(v / angle, angle)
    }

    /// Fixed-axis roll/pitch/yaw (applied X, then Y, then Z).
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Quat {
        Quat::from_axis_angle(Vec3::Z, yaw)
            * Quat::from_axis_angle(Vec3::Y, pitch)
            * Quat::from_axis_angle(Vec3::X, roll)
    }

    pub fn from_yaw(yaw: f64) -> Quat {
        Quat::from_axis_angle(Vec3::Z, yaw)
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation vector (axis times angle, angle in [0, pi]).
    pub fn to_rotation_vector(self) -> Vec3 {
        let q = if self.w < 0.0 {
            Quat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        };
        let v = Vec3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s < 1e-12 {
            return v * 2.0;
        }
        let angle = 2.0 * math::atan2(s, q.w);
        v * (angle / s)
    }

    /// Rotation angle in [0, pi].
    pub fn angle(self) -> f64 {
        self.to_rotation_vector().norm()
    }

    /// Angle of the rotation taking `self` to `other`.
    pub fn angle_to(self, other: Quat) -> f64 {
        (other * self.conjugate()).angle()
    }

    /// Heading about world z (ZYX convention).
    pub fn yaw(self) -> f64 {
        math::atan2(
            2.0 * (self.w * self.z + self.x * self.y),
            1.0 - 2.0 * (self.y * self.y + self.z * self.z),
        )
    }

    /// Angle between the rotated z-axis and world z.
    pub fn tilt(self) -> f64 {
        let c = self.rotate(Vec3::Z).z.clamp(-1.0, 1.0);
        math::acos(c)
    }

    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let c0 = self.rotate(Vec3::X);
        let c1 = self.rotate(Vec3::Y);
        let c2 = self.rotate(Vec3::Z);
        [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]]
    }

    pub fn slerp(self, other: Quat, t: f64) -> Quat {
        let mut d = self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z;
        let mut o = other;
        if d < 0.0 {
            d = -d;
            o = Quat { w: -o.w, x: -o.x, y: -o.y, z: -o.z };
        }
        let (a, b) = if d > 0.9995 {
            (1.0 - t, t)
        } else {
            let theta = math::acos(d);
            let s = math::sin(theta);
            (math::sin((1.0 - t) * theta) / s, math::sin(t * theta) / s)
        };
        Quat {
            w: a * self.w + b * o.w,
            x: a * self.x + b * o.x,
            y: a * self.y + b * o.y,
            z: a * self.z + b * o.z,
        }
        .normalized()
        .unwrap_or(self)
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }
}

/// Error returned when a pose cannot be normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoseError {
    NonFinitePosition,
    DegenerateOrientation,
}

impl core::fmt::Display for PoseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PoseError::NonFinitePosition => f.write_str("pose position is not finite"),
            PoseError::DegenerateOrientation => {
                f.write_str("pose orientation cannot be normalized")
            }
        }
    }
}

impl core::error::Error for PoseError {}

/// Rigid 6-DoF pose: position in meters plus unit orientation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "RawPose")
)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawPose {
    position: Vec3,
    orientation: Quat,
}

#[cfg(feature = "serde")]
impl TryFrom<RawPose> for Pose {
    type Error = PoseError;
    fn try_from(raw: RawPose) -> Result<Self, PoseError> {
        Pose::new(raw.position, raw.orientation)
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: Quat::IDENTITY };

    /// Validating constructor; the orientation is normalized.
    pub fn new(position: Vec3, orientation: Quat) -> Result<Pose, PoseError> {
        if !position.is_finite() {
            return Err(PoseError::NonFinitePosition);
        }
        let orientation = orientation.normalized().ok_or(PoseError::DegenerateOrientation)?;
        Ok(Pose { position, orientation })
    }

    pub fn from_translation(position: Vec3) -> Pose {
        Pose { position, orientation: Quat::IDENTITY }
    }

    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
        Pose { position: Vec3::new(x, y, z), orientation: Quat::from_yaw(yaw) }
    }

    /// `self * other`: express `other` (given in this frame) in the parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation.rotate(other.position),
            orientation: (self.orientation * other.orientation).normalized().unwrap(),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.conjugate();
        Pose { position: -inv.rotate(self.position), orientation: inv }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.position + self.orientation.rotate(p)
    }

    pub fn is_upright(&self, tol: f64) -> bool {
        self.orientation.tilt() <= tol
    }

    /// Same position and heading with roll and pitch removed.
    pub fn upright(&self) -> Pose {
        Pose { position: self.position, orientation: Quat::from_yaw(self.orientation.yaw()) }
    }

    pub fn to_array(&self) -> [f64; 7] {
        let (p, q) = (self.position, self.orientation);
        [p.x, p.y, p.z, q.w, q.x, q.y, q.z]
    }
}

/// Signed area by the shoelace formula; positive for counter-clockwise order.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * s
}

/// Even-odd point in polygon test. Points exactly on an edge may go either way.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the segment `ab`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(a + ab * t)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// True when closed segments `ab` and `cd` share at least one point.
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0.0 && on(c, d, a))
        || (d2 == 0.0 && on(c, d, b))
        || (d3 == 0.0 && on(a, b, c))
        || (d4 == 0.0 && on(a, b, d))
}

/// A polygon is simple when it has at least three distinct vertices and no
/// two non-adjacent edges touch.
pub fn is_simple_polygon(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        if poly[i] == poly[(i + 1) % n] {
            return false;
        }
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    // adjacent edges may only share their common vertex
    for i in 0..n {
        let (a, b, c) = (poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if orient(a, b, c) == 0.0 && (b - a).dot(c - b) < 0.0 {
            return false;
        }
    }
    true
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, no collinear points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Intersection of two convex counter-clockwise polygons (Sutherland-Hodgman).
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output: Vec<Vec2> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let input = core::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = orient(a, b, cur) >= 0.0;
            let prev_in = orient(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    if denom == 0.0 {
        return p;
    }
    let t = (a - p).cross(s) / denom;
    p + r * t
}

/// Area-weighted centroid of a simple polygon (vertex mean for degenerate input).
pub fn polygon_centroid(poly: &[Vec2]) -> Vec2 {
    let a = signed_area(poly);
    let n = poly.len();
    if n == 0 {
        return Vec2::default();
    }
    if math::abs(a) < 1e-15 {
        let sum = poly.iter().fold(Vec2::default(), |s, &p| s + p);
        return sum / n as f64;
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let c = p.cross(q);
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    Vec2::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Smallest signed distance from `p` to the edges of a convex CCW polygon,
/// positive inside.
pub fn convex_interior_depth(p: Vec2, poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut depth = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let e = b - a;
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        depth = depth.min(e.cross(p - a) / len);
    }
    depth
}
