//! Planar primitives used by the arena: points, segments, exact-enough
//! segment intersection, clamping and distances.

use std::fmt;
use std::ops::{Add, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A closed line segment with distinct endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2 {
    pub p: Point2,
    pub q: Point2,
}

impl Segment2 {
    /// Returns `None` for a zero-length segment.
    pub fn new(p: Point2, q: Point2) -> Option<Self> {
        if p == q {
            None
        } else {
            Some(Segment2 { p, q })
        }
    }

    pub fn length(&self) -> f64 {
        distance(self.p, self.q)
    }

    /// Point at parameter `t` in [0, 1] along the segment.
    pub fn at(&self, t: f64) -> Point2 {
        Point2::new(
            self.p.x + t * (self.q.x - self.p.x),
            self.p.y + t * (self.q.y - self.p.y),
        )
    }
}

/// Sign of the cross product (b - a) x (c - a).
fn orientation(a: Point2, b: Point2, c: Point2) -> i8 {
    let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if det > 0.0 {
        1
    } else if det < 0.0 {
        -1
    } else {
        0
    }
}

/// For `c` collinear with `a`-`b`: whether `c` lies inside their bounding box.
fn on_segment(a: Point2, b: Point2, c: Point2) -> bool {
    c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
}

/// True iff the two closed segments share at least one point. Touching
/// endpoints and collinear overlap both count.
pub fn segments_intersect(a: &Segment2, b: &Segment2) -> bool {
    let o1 = orientation(a.p, a.q, b.p);
    let o2 = orientation(a.p, a.q, b.q);
    let o3 = orientation(b.p, b.q, a.p);
    let o4 = orientation(b.p, b.q, a.q);

    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_segment(a.p, a.q, b.p))
        || (o2 == 0 && on_segment(a.p, a.q, b.q))
        || (o3 == 0 && on_segment(b.p, b.q, a.p))
        || (o4 == 0 && on_segment(b.p, b.q, a.q))
}

pub fn clamp_to_arena(p: Point2, lo: f64, hi: f64) -> Point2 {
    debug_assert!(lo < hi);
    Point2::new(p.x.clamp(lo, hi), p.y.clamp(lo, hi))
}

pub fn distance(p: Point2, q: Point2) -> f64 {
    (p - q).norm()
}

/// Shortest distance from `c` to the closed segment `s`.
pub fn point_segment_distance(c: Point2, s: &Segment2) -> f64 {
    let d = s.q - s.p;
    let len2 = d.x * d.x + d.y * d.y;
    let t = (((c.x - s.p.x) * d.x + (c.y - s.p.y) * d.y) / len2).clamp(0.0, 1.0);
    distance(c, s.at(t))
}

/// Shortest distance between two closed segments (zero when they intersect).
pub fn segment_distance(a: &Segment2, b: &Segment2) -> f64 {
    if segments_intersect(a, b) {
        return 0.0;
    }
    point_segment_distance(a.p, b)
        .min(point_segment_distance(a.q, b))
        .min(point_segment_distance(b.p, a))
        .min(point_segment_distance(b.q, a))
}
