//! Desktop reconstruction from a point cloud: RANSAC plane segmentation,
//! Euclidean clustering of the dominant plane, occupancy-grid contour
//! tracing and ear-clipping triangulation.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};

use crate::geometry::{is_simple_polygon, signed_area, Vec2, Vec3};
use crate::math;
use crate::scene::{DesktopMesh, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectError {
    NoPlaneFound,
    DegenerateSurface,
    SelfIntersecting,
    TriangulationFailed,
    NonFinitePoint(usize),
    InvalidParameter(&'static str),
}

impl fmt::Display for DetectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectError::NoPlaneFound => f.write_str("no plane found"),
            DetectError::DegenerateSurface => f.write_str("degenerate surface"),
            DetectError::SelfIntersecting => f.write_str("boundary polygon is self-intersecting"),
            DetectError::TriangulationFailed => f.write_str("triangulation failed"),
            DetectError::NonFinitePoint(i) => write!(f, "point {i} is not finite"),
            DetectError::InvalidParameter(p) => write!(f, "invalid parameter: {p}"),
        }
    }
}

impl core::error::Error for DetectError {}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, DetectError> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(DetectError::NonFinitePoint(i));
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneModel {
    pub normal: Vec3,
    pub offset: f64,
    /// Ascending indices into the source cloud.
    pub inlier_indices: Vec<usize>,
}

impl PlaneModel {
    pub fn plane(&self) -> Plane {
        Plane { normal: self.normal, offset: self.offset }
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        math::abs(self.normal.dot(p) - self.offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub dist_threshold: f64,
    pub min_inliers: usize,
    pub max_planes: usize,
    pub max_iterations: usize,
    /// Confidence used to cut the iteration count once a good model is seen.
    pub probability: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            dist_threshold: 0.01,
            min_inliers: 500,
            max_planes: 8,
            max_iterations: 1000,
            probability: 0.99,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectParams {
    pub ransac: RansacParams,
    pub cluster_radius: f64,
    pub cell: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams { ransac: RansacParams::default(), cluster_radius: 0.05, cell: 0.02 }
    }
}

/// Iterative RANSAC: fit the best plane among the remaining points, remove
/// its inliers and repeat until no plane reaches `min_inliers` or
/// `max_planes` planes have been found. Output is ordered by descending
/// inlier count; normals point towards +z.
pub fn segment_planes<R: RngCore + ?Sized>(
    cloud: &PointCloud,
    params: &RansacParams,
    rng: &mut R,
) -> Result<Vec<PlaneModel>, DetectError> {
    if !(params.dist_threshold > 0.0) {
        return Err(DetectError::InvalidParameter("dist_threshold must be positive"));
    }
    if params.min_inliers < 3 {
        return Err(DetectError::InvalidParameter("min_inliers must be at least 3"));
    }
    let pts = &cloud.points;
    let mut remaining: Vec<usize> = (0..pts.len()).collect();
    let mut planes = Vec::new();
    while planes.len() < params.max_planes && remaining.len() >= params.min_inliers {
        let Some(model) = best_plane(pts, &remaining, params, rng) else {
            break;
        };
        if model.inlier_indices.len() < params.min_inliers {
            break;
        }
        let mut is_inlier = vec![false; pts.len()];
        for &i in &model.inlier_indices {
            is_inlier[i] = true;
        }
        remaining.retain(|&i| !is_inlier[i]);
        planes.push(model);
    }
    planes.sort_by(|a, b| b.inlier_indices.len().cmp(&a.inlier_indices.len()));
    Ok(planes)
}

fn count_inliers(pts: &[Vec3], idx: &[usize], n: Vec3, d: f64, thr: f64) -> usize {
    idx.iter().filter(|&&i| math::abs(n.dot(pts[i]) - d) <= thr).count()
}

fn best_plane<R: RngCore + ?Sized>(
    pts: &[Vec3],
    remaining: &[usize],
    params: &RansacParams,
    rng: &mut R,
) -> Option<PlaneModel> {
    let n = remaining.len();
    if n < 3 {
        return None;
    }
    let thr = params.dist_threshold;
    let mut best: Option<(Vec3, f64, usize)> = None;
    let mut needed = params.max_iterations;
    let mut iter = 0;
    while iter < needed.min(params.max_iterations) {
        iter += 1;
        let a = remaining[rng.random_range(0..n)];
        let b = remaining[rng.random_range(0..n)];
        let c = remaining[rng.random_range(0..n)];
        if a == b || b == c || a == c {
            continue;
        }
        let Some(normal) = (pts[b] - pts[a]).cross(pts[c] - pts[a]).normalized() else {
            continue;
        };
        let d = normal.dot(pts[a]);
        let count = count_inliers(pts, remaining, normal, d, thr);
        if best.map_or(true, |(_, _, c)| count > c) {
            best = Some((normal, d, count));
            let w = count as f64 / n as f64;
            let p_good = w * w * w;
            if p_good >= 1.0 {
                needed = iter;
            } else if p_good > 0.0 {
                let k = math::ln(1.0 - params.probability) / math::ln(1.0 - p_good);
                if k.is_finite() && k >= 0.0 {
                    needed = (math::ceil(k) as usize).max(1);
                }
            }
        }
    }
    let (mut normal, mut d, count) = best?;
    // total least squares refit on the consensus set
    let inliers: Vec<usize> = remaining
        .iter()
        .copied()
        .filter(|&i| math::abs(normal.dot(pts[i]) - d) <= thr)
        .collect();
    if let Some((rn, rd)) = fit_plane(pts, &inliers) {
        if count_inliers(pts, remaining, rn, rd, thr) >= count {
            normal = rn;
            d = rd;
        }
    }
    if normal.z < 0.0 || (normal.z == 0.0 && (normal.y < 0.0 || (normal.y == 0.0 && normal.x < 0.0)))
    {
        normal = -normal;
        d = -d;
    }
    let mut inlier_indices: Vec<usize> =
        remaining.iter().copied().filter(|&i| math::abs(normal.dot(pts[i]) - d) <= thr).collect();
    inlier_indices.sort_unstable();
    Some(PlaneModel { normal, offset: d, inlier_indices })
}

/// Least-squares plane through the given points: centroid plus the
/// eigenvector of the smallest covariance eigenvalue.
pub fn fit_plane(pts: &[Vec3], idx: &[usize]) -> Option<(Vec3, f64)> {
    if idx.len() < 3 {
        return None;
    }
    let mut c = Vec3::ZERO;
    for &i in idx {
        c += pts[i];
    }
    c = c / idx.len() as f64;
    let mut cov = [[0.0; 3]; 3];
    for &i in idx {
        let d = pts[i] - c;
        let a = d.to_array();
        for r in 0..3 {
            for k in 0..3 {
                cov[r][k] += a[r] * a[k];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen3(cov);
    let mut k = 0;
    for j in 1..3 {
        if vals[j] < vals[k] {
            k = j;
        }
    }
    let normal = Vec3::new(vecs[0][k], vecs[1][k], vecs[2][k]).normalized()?;
    Some((normal, normal.dot(c)))
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix. Returns
/// eigenvalues and the eigenvectors as matrix columns.
pub fn symmetric_eigen3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if math::abs(a[p][q]) < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / math::sqrt(t * t + 1.0);
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller root so the representative is the lowest index
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Keeps the largest Euclidean cluster of the plane's inliers; points closer
/// than `cluster_radius` are linked. Ties go to the cluster containing the
/// lowest point index. Returns ascending cloud indices.
pub fn remove_scatter(
    plane: &PlaneModel,
    cloud: &PointCloud,
    cluster_radius: f64,
) -> Result<Vec<usize>, DetectError> {
    if !(cluster_radius > 0.0) {
        return Err(DetectError::InvalidParameter("cluster_radius must be positive"));
    }
    let mut idx = plane.inlier_indices.clone();
    idx.sort_unstable();
    idx.dedup();
    if idx.is_empty() {
        return Ok(Vec::new());
    }
    let pts: Vec<Vec3> = idx.iter().map(|&i| cloud.points[i]).collect();
    let key = |p: Vec3| {
        (
            math::floor(p.x / cluster_radius) as i64,
            math::floor(p.y / cluster_radius) as i64,
            math::floor(p.z / cluster_radius) as i64,
        )
    };
    let mut grid: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, &p) in pts.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let r2 = cluster_radius * cluster_radius;
    let mut ds = DisjointSet::new(pts.len());
    for (i, &p) in pts.iter().enumerate() {
        let (kx, ky, kz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in cell {
                            if j > i && (pts[j] - p).norm_squared() <= r2 {
                                ds.union(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut sizes = vec![0usize; pts.len()];
    for i in 0..pts.len() {
        let r = ds.find(i);
        sizes[r] += 1;
    }
    // roots are the lowest member index, so the first maximum wins ties
    let mut best = 0;
    for r in 0..pts.len() {
        if sizes[r] > sizes[best] {
            best = r;
        }
    }
    Ok((0..pts.len()).filter(|&i| ds.find(i) == best).map(|i| idx[i]).collect())
}

const NEIGHBORS: [(i64, i64); 8] =
    [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

fn neighbor_index(d: (i64, i64)) -> usize {
    NEIGHBORS.iter().position(|&n| n == d).expect("8-neighbour offset")
}

struct Grid {
    width: i64,
    height: i64,
    label: Vec<u32>,
}

impl Grid {
    fn get(&self, x: i64, y: i64) -> u32 {
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            return 0;
        }
        self.label[(y * self.width + x) as usize]
    }
}

/// Outline of the occupied region of the projected points, traced on an
/// occupancy grid of pitch `cell` (Moore-neighbour tracing). Vertices are
/// cell centres in plane coordinates, counter-clockwise, with collinear
/// runs merged.
pub fn extract_boundary(points: &[Vec3], plane: &Plane, cell: f64) -> Result<Vec<Vec2>, DetectError> {
    if !(cell > 0.0) {
        return Err(DetectError::InvalidParameter("cell must be positive"));
    }
    if points.len() < 3 {
        return Err(DetectError::DegenerateSurface);
    }
    let q: Vec<Vec2> = points.iter().map(|&p| plane.to_plane_coords(p)).collect();
    if is_collinear(&q) {
        return Err(DetectError::DegenerateSurface);
    }
    let (mut minx, mut miny) = (f64::INFINITY, f64::INFINITY);
    for p in &q {
        minx = minx.min(p.x);
        miny = miny.min(p.y);
    }
    let cells: Vec<(i64, i64)> = q
        .iter()
        .map(|p| (math::round((p.x - minx) / cell) as i64, math::round((p.y - miny) / cell) as i64))
        .collect();
    let width = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let height = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    if width.saturating_mul(height) > 64_000_000 {
        return Err(DetectError::InvalidParameter("cell too small for the point extent"));
    }
    let mut occupied = vec![false; (width * height) as usize];
    for &(x, y) in &cells {
        occupied[(y * width + x) as usize] = true;
    }
    let grid = label_components(&occupied, width, height);
    let contour = trace_contour(&grid);
    let ring = clean_ring(contour);
    if ring.len() < 3 {
        return Err(DetectError::DegenerateSurface);
    }
    let mut poly: Vec<Vec2> = ring
        .iter()
        .map(|&(x, y)| Vec2::new(minx + x as f64 * cell, miny + y as f64 * cell))
        .collect();
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    Ok(poly)
}

fn is_collinear(q: &[Vec2]) -> bool {
    let mut c = Vec2::default();
    for &p in q {
        c = c + p;
    }
    c = c / q.len() as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in q {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let n = q.len() as f64;
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = math::sqrt((0.25 * tr * tr - det).max(0.0));
    let lmin = 0.5 * tr - disc;
    // spread across the principal direction below a nanometre
    lmin <= 1e-18 || lmin <= 1e-18 * tr
}

/// Keeps only the largest 8-connected component (ties: lowest raster index),
/// marked with label 1.
fn label_components(occupied: &[bool], width: i64, height: i64) -> Grid {
    let mut comp = vec![0u32; occupied.len()];
    let mut best = (0usize, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..occupied.len() {
        if !occupied[start] || comp[start] != 0 {
            continue;
        }
        next += 1;
        comp[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i as i64 % width, i as i64 / width);
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width || ny >= height {
                    continue;
                }
                let j = (ny * width + nx) as usize;
                if occupied[j] && comp[j] == 0 {
                    comp[j] = next;
                    queue.push_back(j);
                }
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    let label = comp.iter().map(|&c| u32::from(c == best.1 && c != 0)).collect();
    Grid { width, height, label }
}

fn trace_contour(grid: &Grid) -> Vec<(i64, i64)> {
    let Some(first) = grid.label.iter().position(|&l| l == 1) else {
        return Vec::new();
    };
    let start = (first as i64 % grid.width, first as i64 / grid.width);
    let step = |p: (i64, i64), back: (i64, i64)| -> Option<((i64, i64), (i64, i64))> {
        let k = neighbor_index((back.0 - p.0, back.1 - p.1));
        for i in 1..=8 {
            let (dx, dy) = NEIGHBORS[(k + i) % 8];
            let cand = (p.0 + dx, p.1 + dy);
            if grid.get(cand.0, cand.1) == 1 {
                let (bx, by) = NEIGHBORS[(k + i + 7) % 8];
                return Some((cand, (p.0 + bx, p.1 + by)));
            }
        }
        None
    };
    let mut contour = vec![start];
    // raster order guarantees the west neighbour of the start is empty
    let mut state = (start, (start.0 - 1, start.1));
    let mut first_move = None;
    let cap = 8 * grid.label.len() + 16;
    for _ in 0..cap {
        let Some(next) = step(state.0, state.1) else {
            break;
        };
        match first_move {
            None => first_move = Some(next),
            Some(f) if f == next => break,
            _ => {}
        }
        contour.push(next.0);
        state = next;
    }
    if contour.len() > 1 && contour.last() == contour.first() {
        contour.pop();
    }
    contour
}

fn cross_i(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn area2_i(ring: &[(i64, i64)]) -> i64 {
    let n = ring.len();
    (0..n).map(|i| ring[i].0 * ring[(i + 1) % n].1 - ring[(i + 1) % n].0 * ring[i].1).sum()
}

/// Splits the ring at pinch points (keeping the loop with the largest
/// area), then drops repeated, collinear and spike vertices. Pinches are
/// found before merging: a cell passed twice may be a straight-run cell on
/// one pass and a corner on the other.
fn clean_ring(mut ring: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    loop {
        ring = split_pinches(ring);
        let before = ring.len();
        ring = drop_straight(ring);
        if ring.len() < 3 || ring.len() == before {
            return ring;
        }
    }
}

fn split_pinches(mut ring: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    loop {
        let mut seen = BTreeMap::new();
        let mut split = None;
        for (j, c) in ring.iter().enumerate() {
            if let Some(i) = seen.insert(*c, j) {
                split = Some((i, j));
                break;
            }
        }
        let Some((i, j)) = split else {
            return ring;
        };
        let inner: Vec<(i64, i64)> = ring[i..j].to_vec();
        let mut outer: Vec<(i64, i64)> = ring[j..].to_vec();
        outer.extend_from_slice(&ring[..i]);
        ring = if area2_i(&inner).abs() >= area2_i(&outer).abs() { inner } else { outer };
    }
}

fn drop_straight(mut ring: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    let mut changed = true;
    while changed && ring.len() >= 3 {
        changed = false;
        let n = ring.len();
        let mut out: Vec<(i64, i64)> = Vec::with_capacity(n);
        for i in 0..n {
            let prev = if let Some(&p) = out.last() { p } else { ring[(i + n - 1) % n] };
            let cur = ring[i];
            let next = ring[(i + 1) % n];
            if cur == prev || cross_i(prev, cur, next) == 0 {
                changed = true;
            } else {
                out.push(cur);
            }
        }
        ring = out;
    }
    ring
}

/// Ear-clipping triangulation of a simple polygon (clockwise input is
/// reversed first).
pub fn make_mesh(boundary: &[Vec2], plane: Plane) -> Result<DesktopMesh, DetectError> {
    if boundary.len() < 3 {
        return Err(DetectError::DegenerateSurface);
    }
    if !is_simple_polygon(boundary) {
        return Err(DetectError::SelfIntersecting);
    }
    let mut poly = boundary.to_vec();
    let area = signed_area(&poly);
    if area == 0.0 {
        return Err(DetectError::DegenerateSurface);
    }
    if area < 0.0 {
        poly.reverse();
    }
    let triangles = ear_clip(&poly).ok_or(DetectError::TriangulationFailed)?;
    let mesh = DesktopMesh { plane, boundary: poly, triangles };
    mesh.validate().map_err(|_| DetectError::TriangulationFailed)?;
    Ok(mesh)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn ear_clip(poly: &[Vec2]) -> Option<Vec<[usize; 3]>> {
    let mut v: Vec<usize> = (0..poly.len()).collect();
    let mut tris = Vec::with_capacity(poly.len().saturating_sub(2));
    while v.len() > 3 {
        let n = v.len();
        let mut clipped = false;
        // prefer strictly convex ears, then zero-area ones on straight runs
        for pass in 0..2 {
            for i in 0..n {
                let (ia, ib, ic) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
                let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
                let turn = orient(a, b, c);
                if pass == 0 {
                    if turn <= 0.0 {
                        continue;
                    }
                    let blocked = v.iter().any(|&k| {
                        if k == ia || k == ib || k == ic {
                            return false;
                        }
                        let p = poly[k];
                        orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
                    });
                    if blocked {
                        continue;
                    }
                } else if turn != 0.0 {
                    continue;
                }
                tris.push([ia, ib, ic]);
                v.remove(i);
                clipped = true;
                break;
            }
            if clipped {
                break;
            }
        }
        if !clipped {
            return None;
        }
    }
    tris.push([v[0], v[1], v[2]]);
    Some(tris)
}

/// Full pipeline on the largest plane: segment, de-scatter, outline, mesh.
pub fn detect_desktop<R: RngCore + ?Sized>(
    cloud: &PointCloud,
    params: &DetectParams,
    rng: &mut R,
) -> Result<DesktopMesh, DetectError> {
    let planes = segment_planes(cloud, &params.ransac, rng)?;
    let largest = planes.first().ok_or(DetectError::NoPlaneFound)?;
    let kept = remove_scatter(largest, cloud, params.cluster_radius)?;
    let pts: Vec<Vec3> = kept.iter().map(|&i| cloud.points[i]).collect();
    let plane = largest.plane();
    let boundary = extract_boundary(&pts, &plane, params.cell)?;
    make_mesh(&boundary, plane)
}
