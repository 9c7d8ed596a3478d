//! Ground-plane primitives: points, segments, polygons, ray casting and
//! swept-disc contact queries.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn closest_point(&self, p: Point2) -> Point2 {
        let ab = self.b - self.a;
        let len2 = ab.dot(ab);
        if len2 == 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len2).clamp(0.0, 1.0);
        self.a + ab.scale(t)
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        p.distance(self.closest_point(p))
    }

    /// Distance along a ray (`dir` must be unit length) to this segment.
    pub fn ray_hit(&self, origin: Point2, dir: Point2) -> Option<f64> {
        let e = self.b - self.a;
        let denom = dir.cross(e);
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = self.a - origin;
        let t = w.cross(e) / denom;
        let u = w.cross(dir) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }

    /// Whether two closed segments share at least one point.
    pub fn intersects(&self, other: &Segment) -> bool {
        let d1 = orient(other.a, other.b, self.a);
        let d2 = orient(other.a, other.b, self.b);
        let d3 = orient(self.a, self.b, other.a);
        let d4 = orient(self.a, self.b, other.b);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_segment(other, self.a))
            || (d2 == 0.0 && on_segment(other, self.b))
            || (d3 == 0.0 && on_segment(self, other.a))
            || (d4 == 0.0 && on_segment(self, other.b))
    }

    /// Earliest fraction `t` in `[0, 1]` of the motion `start -> start + delta`
    /// at which a disc of `radius` touches this segment.
    ///
    /// A disc that already overlaps the segment reports `Some(0.0)` when the
    /// motion brings it closer, and `None` when it moves away.
    pub fn disc_contact(&self, start: Point2, delta: Point2, radius: f64) -> Option<f64> {
        let q = self.closest_point(start);
        let w = start - q;
        if w.norm() < radius {
            return if delta.dot(w) < 0.0 { Some(0.0) } else { None };
        }
        let mut best: Option<f64> = None;
        let mut take = |t: f64| {
            if (0.0..=1.0).contains(&t) && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        };
        for c in [self.a, self.b] {
            if let Some(t) = circle_entry(start, delta, c, radius) {
                take(t);
            }
        }
        let e = self.b - self.a;
        let len = e.norm();
        if len > 0.0 {
            let u = e.scale(1.0 / len);
            let n = Point2::new(-u.y, u.x);
            let dn = delta.dot(n);
            if dn != 0.0 {
                for side in [radius, -radius] {
                    let t = (side - (start - self.a).dot(n)) / dn;
                    let p = start + delta.scale(t) - self.a;
                    let along = p.dot(u);
                    if (0.0..=len).contains(&along) {
                        take(t);
                    }
                }
            }
        }
        best
    }
}

fn circle_entry(start: Point2, delta: Point2, c: Point2, r: f64) -> Option<f64> {
    let f = start - c;
    let a = delta.dot(delta);
    if a == 0.0 {
        return None;
    }
    let b = 2.0 * f.dot(delta);
    let cc = f.dot(f) - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    Some(t)
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(s: &Segment, p: Point2) -> bool {
    p.x >= s.a.x.min(s.b.x)
        && p.x <= s.a.x.max(s.b.x)
        && p.y >= s.a.y.min(s.b.y)
        && p.y <= s.a.y.max(s.b.y)
}

/// Axis-aligned rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Point2::new(min_x.min(max_x), min_y.min(max_y)),
            max: Point2::new(min_x.max(max_x), min_y.max(max_y)),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn inflate(&self, by: f64) -> Rect {
        Rect::new(self.min.x - by, self.min.y - by, self.max.x + by, self.max.y + by)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Strict interior overlap; rectangles sharing only an edge do not overlap.
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }

    /// Euclidean gap between two rectangles; zero when they touch or overlap.
    pub fn distance(&self, o: &Rect) -> f64 {
        let dx = (o.min.x - self.max.x).max(self.min.x - o.max.x).max(0.0);
        let dy = (o.min.y - self.max.y).max(self.min.y - o.max.y).max(0.0);
        dx.hypot(dy)
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(vec![
            self.min,
            Point2::new(self.max.x, self.min.y),
            self.max,
            Point2::new(self.min.x, self.max.y),
        ])
    }
}

/// Simple closed polygon; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd point-in-polygon test. Boundary points may go either way.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for e in self.edges() {
            let (a, b) = (e.a, e.b);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges().map(|e| e.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn bounds(&self) -> Rect {
        let mut r = Rect {
            min: Point2::new(f64::INFINITY, f64::INFINITY),
            max: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        for v in &self.vertices {
            r.min.x = r.min.x.min(v.x);
            r.min.y = r.min.y.min(v.y);
            r.max.x = r.max.x.max(v.x);
            r.max.y = r.max.y.max(v.y);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_bounds() {
        let p = Rect::new(1.0, 2.0, 3.0, 5.0).to_polygon();
        assert_eq!(p.bounds(), Rect::new(1.0, 2.0, 3.0, 5.0));
    }

    #[test]
    fn ray_hits_wall() {
        let s = Segment::new(Point2::new(2.0, -1.0), Point2::new(2.0, 1.0));
        let t = s.ray_hit(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(s.ray_hit(Point2::new(0.0, 0.0), Point2::new(-1.0, 0.0)).is_none());
        assert!(s.ray_hit(Point2::new(0.0, 0.0), Point2::new(0.0, 1.0)).is_none());
    }

    #[test]
    fn disc_stops_at_wall() {
        let s = Segment::new(Point2::new(2.0, -1.0), Point2::new(2.0, 1.0));
        let t = s
            .disc_contact(Point2::new(0.0, 0.0), Point2::new(4.0, 0.0), 0.25)
            .unwrap();
        assert!((t * 4.0 - 1.75).abs() < 1e-12);
        // Passing beside the segment end within the radius hits the end cap.
        let t = s
            .disc_contact(Point2::new(0.0, 1.2), Point2::new(4.0, 0.0), 0.25)
            .unwrap();
        let x = t * 4.0;
        let expected = 2.0 - (0.25f64 * 0.25 - 0.2 * 0.2).sqrt();
        assert!((x - expected).abs() < 1e-12);
        assert!(s
            .disc_contact(Point2::new(0.0, 1.3), Point2::new(4.0, 0.0), 0.25)
            .is_none());
    }

    #[test]
    fn disc_inside_moving_away_is_free() {
        let s = Segment::new(Point2::new(0.0, -1.0), Point2::new(0.0, 1.0));
        assert_eq!(s.disc_contact(Point2::new(0.2, 0.0), Point2::new(-1.0, 0.0), 0.25), Some(0.0));
        assert_eq!(s.disc_contact(Point2::new(0.2, 0.0), Point2::new(1.0, 0.0), 0.25), None);
    }

    #[test]
    fn polygon_containment() {
        let p = Rect::new(0.0, 0.0, 2.0, 1.0).to_polygon();
        assert!(p.contains(Point2::new(1.0, 0.5)));
        assert!(!p.contains(Point2::new(3.0, 0.5)));
        assert_eq!(p.distance_to(Point2::new(1.0, 0.5)), 0.0);
        assert!((p.distance_to(Point2::new(3.0, 0.5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_crossing() {
        let a = Segment::new(Point2::new(0.0, 0.0), Point2::new(2.0, 2.0));
        let b = Segment::new(Point2::new(0.0, 2.0), Point2::new(2.0, 0.0));
        let c = Segment::new(Point2::new(3.0, 0.0), Point2::new(4.0, 0.0));
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
    }
}
