//! Fine-step reference for dropping one upright box onto a table of resting
//! upright boxes. Written against plain numbers only.

use rand::Rng;

pub const STEP: f64 = 1e-4;
pub const MIN_AREA: f64 = 1e-6;
pub const TOUCH: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box3 {
    pub x: f64,
    pub y: f64,
    /// Centre height.
    pub z: f64,
    pub yaw: f64,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl Box3 {
    pub fn bottom(&self) -> f64 {
        self.z - self.hz
    }

    pub fn top(&self) -> f64 {
        self.z + self.hz
    }

    pub fn corners(&self) -> Vec<(f64, f64)> {
        let (s, c) = self.yaw.sin_cos();
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|(a, b)| {
                let (lx, ly) = (a * self.hx, b * self.hy);
                (self.x + c * lx - s * ly, self.y + s * lx + c * ly)
            })
            .collect()
    }
}

pub fn area(p: &[(f64, f64)]) -> f64 {
    let n = p.len();
    (0..n).map(|i| p[i].0 * p[(i + 1) % n].1 - p[(i + 1) % n].0 * p[i].1).sum::<f64>() * 0.5
}

/// Sutherland-Hodgman; both polygons counter-clockwise.
pub fn clip(subject: &[(f64, f64)], window: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let side = |a: (f64, f64), b: (f64, f64), p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let mut out = subject.to_vec();
    for i in 0..window.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (window[i], window[(i + 1) % window.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(a, b, p), side(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push((p.0 + (q.0 - p.0) * t, p.1 + (q.1 - p.1) * t));
            }
        }
    }
    out
}

pub fn centroid(p: &[(f64, f64)]) -> (f64, f64) {
    let a = area(p);
    let n = p.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (x0, y0) = p[i];
        let (x1, y1) = p[(i + 1) % n];
        let w = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * w;
        cy += (y0 + y1) * w;
    }
    (cx / (6.0 * a), cy / (6.0 * a))
}

/// Smallest distance from `p` to an edge line, negative outside
/// (counter-clockwise convex polygon).
pub fn depth(p: (f64, f64), poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (ex, ey) = (b.0 - a.0, b.1 - a.1);
            (ex * (p.1 - a.1) - ey * (p.0 - a.0)) / (ex * ex + ey * ey).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Overlap of two upright boxes along the separating axis with least
/// overlap (face normals only suffice for boxes sharing the z axis).
pub fn overlap(a: &Box3, b: &Box3) -> f64 {
    let dz = a.top().min(b.top()) - a.bottom().max(b.bottom());
    let (ca, cb) = (a.corners(), b.corners());
    let mut best = dz;
    for yaw in [a.yaw, b.yaw] {
        for (ux, uy) in [(yaw.cos(), yaw.sin()), (-yaw.sin(), yaw.cos())] {
            let proj = |c: &[(f64, f64)]| {
                c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = p.0 * ux + p.1 * uy;
                    (lo.min(d), hi.max(d))
                })
            };
            let (la, ha) = proj(&ca);
            let (lb, hb) = proj(&cb);
            best = best.min(ha.min(hb) - la.max(lb));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    /// Index into the resting boxes, `None` for the table.
    pub support: Option<usize>,
    pub z: f64,
}

fn surface(b: &Box3, resting: &[Box3]) -> (f64, Option<usize>) {
    let fp = b.corners();
    let mut best = (0.0, None);
    for (i, r) in resting.iter().enumerate() {
        if r.top() <= b.bottom() + TOUCH && r.top() > best.0 && area(&clip(&fp, &r.corners())) > MIN_AREA {
            best = (r.top(), Some(i));
        }
    }
    best
}

/// Falls in 0.1 mm steps; on an object, slides away from the contact
/// centroid in 0.1 mm steps until the centre of mass is more than `margin`
/// inside the contact or the contact vanishes. The table is flat at z = 0.
pub fn drop_box(mut b: Box3, resting: &[Box3], margin: f64) -> Outcome {
    loop {
        loop {
            let (h, _) = surface(&b, resting);
            if b.bottom() - STEP >= h {
                b.z -= STEP;
            } else {
                break;
            }
        }
        let (_, sup) = surface(&b, resting);
        let Some(i) = sup else { return Outcome { support: None, z: b.z } };
        loop {
            let region = clip(&b.corners(), &resting[i].corners());
            if area(&region) <= MIN_AREA {
                break;
            }
            if depth((b.x, b.y), &region) > margin {
                return Outcome { support: Some(i), z: b.z };
            }
            let c = centroid(&region);
            let (dx, dy) = (b.x - c.0, b.y - c.1);
            let n = (dx * dx + dy * dy).sqrt();
            let (ux, uy) = if n > 1e-12 { (dx / n, dy / n) } else { (1.0, 0.0) };
            b.x += ux * STEP;
            b.y += uy * STEP;
        }
    }
}

/// One resting box near the middle of the table, a second one well away,
/// and a box released somewhere above or beside the first.
pub fn random_scene<R: Rng>(rng: &mut R) -> (Vec<Box3>, Box3) {
    let mut resting = Vec::new();
    let hz = rng.random_range(0.02..0.08);
    let a = Box3 {
        x: rng.random_range(0.3..0.6),
        y: rng.random_range(-0.25..0.25),
        z: hz,
        yaw: rng.random_range(-3.1..3.1),
        hx: rng.random_range(0.03..0.08),
        hy: rng.random_range(0.03..0.08),
        hz,
    };
    resting.push(a);
    let hz = rng.random_range(0.02..0.08);
    resting.push(Box3 {
        x: a.x,
        y: if a.y > 0.0 { a.y - 0.45 } else { a.y + 0.45 },
        z: hz,
        yaw: rng.random_range(-3.1..3.1),
        hx: 0.05,
        hy: 0.04,
        hz,
    });
    let hz = rng.random_range(0.02..0.06);
    let (r, t) = (rng.random_range(0.0..0.13), rng.random_range(-3.2..3.2));
    let falling = Box3 {
        x: a.x + r * f64::cos(t),
        y: a.y + r * f64::sin(t),
        z: a.top() + hz + rng.random_range(0.005..0.3),
        yaw: rng.random_range(-3.1..3.1),
        hx: rng.random_range(0.02..0.06),
        hy: rng.random_range(0.02..0.06),
        hz,
    };
    (resting, falling)
}
