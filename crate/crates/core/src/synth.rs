//! Synthetic point clouds of a tabletop scene.

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::desktop::PointCloud;
use crate::geometry::{Vec2, Vec3};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TabletopSpec {
    /// Height of the table top, m.
    pub height: f64,
    /// Table top rectangle corners in xy.
    pub min: Vec2,
    pub max: Vec2,
    pub points: usize,
    /// Share of `points` drawn uniformly from the outlier box.
    pub outlier_fraction: f64,
    /// Standard deviation of the vertical noise on table points, m.
    pub noise_sigma: f64,
    pub outlier_min: Vec3,
    pub outlier_max: Vec3,
}

impl Default for TabletopSpec {
    fn default() -> Self {
        TabletopSpec {
            height: 0.75,
            min: Vec2::new(0.0, -0.3),
            max: Vec2::new(1.0, 0.3),
            points: 50_000,
            outlier_fraction: 0.2,
            noise_sigma: 0.002,
            outlier_min: Vec3::new(-0.5, -1.0, 0.0),
            outlier_max: Vec3::new(1.5, 1.0, 1.5),
        }
    }
}

impl TabletopSpec {
    pub fn table_area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

/// Standard normal sample (Box-Muller).
pub fn gaussian<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

/// Table points come first, outliers after; the split index is returned
/// alongside the cloud.
pub fn tabletop_cloud<R: RngCore + ?Sized>(spec: &TabletopSpec, rng: &mut R) -> (PointCloud, usize) {
    let outliers = math::round(spec.points as f64 * spec.outlier_fraction) as usize;
    let table = spec.points - outliers.min(spec.points);
    let mut pts = Vec::with_capacity(spec.points);
    for _ in 0..table {
        let x = rng.random_range(spec.min.x..spec.max.x);
        let y = rng.random_range(spec.min.y..spec.max.y);
        pts.push(Vec3::new(x, y, spec.height + spec.noise_sigma * gaussian(rng)));
    }
    let (lo, hi) = (spec.outlier_min, spec.outlier_max);
    for _ in table..spec.points {
        pts.push(Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z)));
    }
    (PointCloud { points: pts }, table)
}
