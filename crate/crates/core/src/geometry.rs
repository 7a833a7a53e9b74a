//! Planar geometry helpers shared by the channel tracer and the SLAM map code.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Point = Vector2<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn bearing(from: &Point, to: &Point) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

pub fn unit(angle: f64) -> Point {
    Point::new(angle.cos(), angle.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn from_coords(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new(Point::new(x1, y1), Point::new(x2, y2))
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn direction(&self) -> Point {
        (self.b - self.a) / self.length()
    }

    /// Unit normal (direction rotated by +90 degrees).
    pub fn normal(&self) -> Point {
        let d = self.direction();
        Point::new(-d.y, d.x)
    }

    pub fn midpoint(&self) -> Point {
        (self.a + self.b) * 0.5
    }

    /// Mirror `p` across the infinite line through the segment.
    pub fn mirror(&self, p: &Point) -> Point {
        let n = self.normal();
        let dist = (p - self.a).dot(&n);
        p - n * (2.0 * dist)
    }

    /// Signed distance from the supporting line.
    pub fn signed_distance(&self, p: &Point) -> f64 {
        (p - self.a).dot(&self.normal())
    }

    pub fn closest_point(&self, p: &Point) -> Point {
        let d = self.b - self.a;
        let t = ((p - self.a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        self.a + d * t
    }

    pub fn distance_to(&self, p: &Point) -> f64 {
        (p - self.closest_point(p)).norm()
    }

    /// Intersection parameters `(t, s)` of `p + t (q - p)` with this segment
    /// (`a + s (b - a)`), when the two lines are not parallel.
    pub fn intersect_params(&self, p: &Point, q: &Point) -> Option<(f64, f64)> {
        let r = q - p;
        let s = self.b - self.a;
        let denom = cross(&r, &s);
        if denom.abs() < 1e-15 {
            return None;
        }
        let qp = self.a - p;
        Some((cross(&qp, &s) / denom, cross(&qp, &r) / denom))
    }

    /// True if the open segment `p -> q` crosses this segment. Endpoints of `p -> q`
    /// lying on the segment (within `eps` in parameter space) do not count.
    pub fn blocks(&self, p: &Point, q: &Point, eps: f64) -> bool {
        match self.intersect_params(p, q) {
            Some((t, s)) => t > eps && t < 1.0 - eps && (-1e-12..=1.0 + 1e-12).contains(&s),
            None => false,
        }
    }

    pub fn sample(&self, step: f64) -> Vec<Point> {
        let n = (self.length() / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| self.a + (self.b - self.a) * (i as f64 / n as f64))
            .collect()
    }
}

pub fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Distance from `c` to the segment `p -> q`.
pub fn point_segment_distance(p: &Point, q: &Point, c: &Point) -> f64 {
    Segment::new(*p, *q).distance_to(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wrap_is_half_open() {
        assert_abs_diff_eq!(wrap_angle(PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.1), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn mirror_across_vertical_wall() {
        let wall = Segment::from_coords(5.0, -10.0, 5.0, 10.0);
        let m = wall.mirror(&Point::new(0.0, -2.0));
        assert_abs_diff_eq!(m.x, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.y, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn blocking_ignores_touching_endpoints() {
        let wall = Segment::from_coords(5.0, -1.0, 5.0, 1.0);
        assert!(wall.blocks(&Point::new(0.0, 0.0), &Point::new(10.0, 0.0), 1e-9));
        assert!(!wall.blocks(&Point::new(0.0, 0.0), &Point::new(5.0, 0.0), 1e-9));
        assert!(!wall.blocks(&Point::new(0.0, 3.0), &Point::new(10.0, 3.0), 1e-9));
    }
}
