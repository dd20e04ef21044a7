//! UAV kinematics along a waypoint polyline at constant speed.

use crate::model::{Vec2, Vec3};

/// A UAV flying through `waypoints` in order without stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct Flight {
    pub position: Vec2,
    pub altitude: f64,
    pub speed: f64,
    waypoints: Vec<Vec2>,
    next: usize,
    /// Unit heading of the last movement.
    heading: Vec2,
}

/// What happened during one slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    /// Indices of waypoints reached during the slot.
    pub reached: Vec<usize>,
    pub distance: f64,
}

impl Flight {
    pub fn new(position: Vec2, waypoints: Vec<Vec2>, speed: f64, altitude: f64) -> Self {
        Self {
            position,
            altitude,
            speed,
            waypoints,
            next: 0,
            heading: Vec2::ZERO,
        }
    }

    pub fn position3(&self) -> Vec3 {
        self.position.with_z(self.altitude)
    }

    pub fn done(&self) -> bool {
        self.next >= self.waypoints.len()
    }

    /// Index of the waypoint currently being approached.
    pub fn next_index(&self) -> usize {
        self.next
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn remaining(&self) -> &[Vec2] {
        &self.waypoints[self.next.min(self.waypoints.len())..]
    }

    /// Ground distance still to fly.
    pub fn remaining_length(&self) -> f64 {
        let mut at = self.position;
        let mut total = 0.0;
        for w in self.remaining() {
            total += at.distance(*w);
            at = *w;
        }
        total
    }

    pub fn replace_route(&mut self, waypoints: Vec<Vec2>) {
        self.waypoints = waypoints;
        self.next = 0;
    }

    pub fn velocity(&self) -> Vec2 {
        if self.done() {
            Vec2::ZERO
        } else {
            self.heading * self.speed
        }
    }

    /// Advances by `dt` seconds, passing through as many waypoints as the
    /// distance allows. The final partial slot of a route is shorter.
    pub fn step(&mut self, dt: f64) -> Step {
        let mut budget = self.speed * dt;
        let mut out = Step::default();
        while budget > 0.0 && !self.done() {
            let target = self.waypoints[self.next];
            let gap = self.position.distance(target);
            if let Some(dir) = (target - self.position).normalized() {
                self.heading = dir;
            }
            if gap <= budget {
                self.position = target;
                budget -= gap;
                out.distance += gap;
                out.reached.push(self.next);
                self.next += 1;
            } else {
                self.position = self.position + self.heading * budget;
                out.distance += budget;
                budget = 0.0;
            }
        }
        // zero-length legs at the head of the route are reached immediately
        while !self.done() && self.position.distance(self.waypoints[self.next]) == 0.0 {
            out.reached.push(self.next);
            self.next += 1;
        }
        out
    }
}
