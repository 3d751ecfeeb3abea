//! Bounded queue of streamed end-effector targets.

use alloc::collections::VecDeque;

use super::ee::PoseSource;
use crate::geometry::Pose;

pub const DEFAULT_QUEUE_CAPACITY: usize = 8;

/// FIFO that drops its oldest entry when a push would exceed capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetQueue {
    items: VecDeque<Pose>,
    capacity: usize,
}

impl Default for TargetQueue {
    fn default() -> Self {
        TargetQueue::new(DEFAULT_QUEUE_CAPACITY)
    }
}

impl TargetQueue {
    /// A zero capacity is raised to one.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        TargetQueue { items: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Returns the evicted pose, if any.
    pub fn push(&mut self, pose: Pose) -> Option<Pose> {
        let evicted = if self.items.len() == self.capacity { self.items.pop_front() } else { None };
        self.items.push_back(pose);
        evicted
    }

    pub fn pop(&mut self) -> Option<Pose> {
        self.items.pop_front()
    }

    /// Takes the most recent pose and discards the rest.
    pub fn pop_newest(&mut self) -> Option<Pose> {
        let newest = self.items.pop_back();
        self.items.clear();
        newest
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pose> {
        self.items.iter()
    }
}

impl PoseSource for TargetQueue {
    fn next_target(&mut self) -> Option<Pose> {
        self.pop_newest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Pose {
        Pose::from_xyz_yaw(x, 0.0, 0.0, 0.0)
    }

    #[test]
    fn evicts_oldest() {
        let mut q = TargetQueue::new(3);
        for i in 0..5 {
            q.push(p(i as f64));
        }
        assert_eq!(q.len(), 3);
        assert_eq!(q.pop().unwrap().position.x, 2.0);
        assert_eq!(q.pop_newest().unwrap().position.x, 4.0);
        assert!(q.is_empty());
    }
}
