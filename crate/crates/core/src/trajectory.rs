//! Joint-space trajectories: straight-line interpolation with a trapezoidal
//! time scaling that respects per-joint velocity and acceleration limits.

use alloc::vec;
use alloc::vec::Vec;

use crate::kinematics::{JointState, KinematicChain, DOF};
use crate::math;

/// Time-scaled straight line from `from` to `to`, sampled uniformly at
/// `rate` Hz starting at `t0`. The first and last samples are exactly the
/// endpoints; identical endpoints give a single sample.
pub fn plan_trajectory(
    chain: &KinematicChain,
    from: &[f64; DOF],
    to: &[f64; DOF],
    rate: f64,
    t0: f64,
) -> Vec<JointState> {
    let delta: [f64; DOF] = core::array::from_fn(|i| to[i] - from[i]);
    // limits on the path parameter s in [0, 1]
    let (mut sd_max, mut sdd_max) = (f64::INFINITY, f64::INFINITY);
    for (d, j) in delta.iter().zip(chain.joints.iter()) {
        let d = math::abs(*d);
        if d > 0.0 {
            sd_max = sd_max.min(j.max_velocity / d);
            sdd_max = sdd_max.min(j.max_acceleration / d);
        }
    }
    if !sd_max.is_finite() || !(rate > 0.0) {
        return vec![JointState::at_rest(*from, t0)];
    }
    let min_time = if sd_max * sd_max / sdd_max >= 1.0 {
        2.0 * math::sqrt(1.0 / sdd_max)
    } else {
        1.0 / sd_max + sd_max / sdd_max
    };
    let dt = 1.0 / rate;
    let steps = (math::ceil(min_time * rate - 1e-9) as usize).max(1);
    let duration = steps as f64 * dt;
    // cruise rate that finishes exactly at `duration` with the same acceleration
    let a = sdd_max;
    let disc = (a * a * duration * duration - 4.0 * a).max(0.0);
    let cruise = ((a * duration - math::sqrt(disc)) / 2.0).min(sd_max);
    let ta = cruise / a;
    let profile = |t: f64| -> (f64, f64) {
        if t <= 0.0 {
            (0.0, 0.0)
        } else if t < ta {
            (0.5 * a * t * t, a * t)
        } else if t <= duration - ta {
            (0.5 * a * ta * ta + cruise * (t - ta), cruise)
        } else if t < duration {
            let r = duration - t;
            (1.0 - 0.5 * a * r * r, a * r)
        } else {
            (1.0, 0.0)
        }
    };
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (s, sd) = profile(t);
        let s = s.clamp(0.0, 1.0);
        let angles: [f64; DOF] = if k == steps {
            *to
        } else {
            core::array::from_fn(|i| from[i] + delta[i] * s)
        };
        let velocities: [f64; DOF] = core::array::from_fn(|i| delta[i] * sd);
        out.push(JointState { angles, velocities, timestamp: t0 + t });
    }
    out
}

/// One servo tick towards `goal`: every joint moves along the straight line,
/// scaled so none exceeds its velocity limit over `dt`.
pub fn step_toward(chain: &KinematicChain, current: &[f64; DOF], goal: &[f64; DOF], dt: f64) -> [f64; DOF] {
    let mut ratio: f64 = 0.0;
    for i in 0..DOF {
        let allowed = chain.joints[i].max_velocity * dt;
        ratio = ratio.max(math::abs(goal[i] - current[i]) / allowed);
    }
    if ratio <= 1.0 {
        return *goal;
    }
    core::array::from_fn(|i| current[i] + (goal[i] - current[i]) / ratio)
}
