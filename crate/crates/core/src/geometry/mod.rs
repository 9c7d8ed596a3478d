//! Axis-aligned cuboid arithmetic and the planar helpers used by the simulator.
//!
//! Cuboids are stored as a centroid plus *full* side lengths. Overlap along an
//! axis is computed from centres and extents directly, so a cuboid compared
//! with itself yields exactly its own volume and an IoU of exactly `1.0`.

pub mod plane;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("extent must be strictly positive on every axis, got [{0}, {1}, {2}]")]
    DegenerateExtent(f64, f64, f64),
}

/// A point or displacement in the global frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Axis-aligned box given by its centroid and full side lengths.
///
/// Construction goes through [`Cuboid::new`], which rejects zero or negative
/// extents and non-finite values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCuboid", into = "RawCuboid")]
pub struct Cuboid {
    center: Vec3,
    extent: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCuboid {
    center: [f64; 3],
    extent: [f64; 3],
}

impl TryFrom<RawCuboid> for Cuboid {
    type Error = GeometryError;
    fn try_from(raw: RawCuboid) -> Result<Self, Self::Error> {
        Cuboid::new(raw.center.into(), raw.extent.into())
    }
}

impl From<Cuboid> for RawCuboid {
    fn from(c: Cuboid) -> Self {
        RawCuboid {
            center: c.center.into(),
            extent: c.extent.into(),
        }
    }
}

impl Cuboid {
    pub fn new(center: Vec3, extent: Vec3) -> Result<Self, GeometryError> {
        if !center.is_finite() {
            return Err(GeometryError::NonFinite("center"));
        }
        if !extent.is_finite() {
            return Err(GeometryError::NonFinite("extent"));
        }
        if !(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0) {
            return Err(GeometryError::DegenerateExtent(extent.x, extent.y, extent.z));
        }
        Ok(Self { center, extent })
    }

    /// Builds a cuboid from its min and max corners.
    pub fn from_corners(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        let center = Vec3::new(
            0.5 * (min.x + max.x),
            0.5 * (min.y + max.y),
            0.5 * (min.z + max.z),
        );
        Self::new(center, max - min)
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn extent(&self) -> Vec3 {
        self.extent
    }

    pub fn min_corner(&self) -> Vec3 {
        Vec3::new(
            self.center.x - 0.5 * self.extent.x,
            self.center.y - 0.5 * self.extent.y,
            self.center.z - 0.5 * self.extent.z,
        )
    }

    pub fn max_corner(&self) -> Vec3 {
        Vec3::new(
            self.center.x + 0.5 * self.extent.x,
            self.center.y + 0.5 * self.extent.y,
            self.center.z + 0.5 * self.extent.z,
        )
    }

    pub fn translated(&self, by: Vec3) -> Self {
        Self {
            center: self.center + by,
            extent: self.extent,
        }
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        let lo = self.min_corner();
        let hi = self.max_corner();
        (lo.x..=hi.x).contains(&p.x) && (lo.y..=hi.y).contains(&p.y) && (lo.z..=hi.z).contains(&p.z)
    }

    /// Footprint on the ground plane as `(min_x, min_y, max_x, max_y)`.
    pub fn footprint(&self) -> plane::Rect {
        let lo = self.min_corner();
        let hi = self.max_corner();
        plane::Rect::new(lo.x, lo.y, hi.x, hi.y)
    }
}

pub fn volume(c: &Cuboid) -> f64 {
    c.extent.x * c.extent.y * c.extent.z
}

/// Length of the overlap of two 1D intervals given as centre and full width.
fn axis_overlap(ca: f64, ea: f64, cb: f64, eb: f64) -> f64 {
    let reach = 0.5 * (ea + eb) - (ca - cb).abs();
    reach.min(ea).min(eb).max(0.0)
}

pub fn intersection_volume(a: &Cuboid, b: &Cuboid) -> f64 {
    let ox = axis_overlap(a.center.x, a.extent.x, b.center.x, b.extent.x);
    if ox == 0.0 {
        return 0.0;
    }
    let oy = axis_overlap(a.center.y, a.extent.y, b.center.y, b.extent.y);
    if oy == 0.0 {
        return 0.0;
    }
    let oz = axis_overlap(a.center.z, a.extent.z, b.center.z, b.extent.z);
    ox * oy * oz
}

/// 3D intersection-over-union of two axis-aligned cuboids.
pub fn iou_3d(a: &Cuboid, b: &Cuboid) -> f64 {
    let inter = intersection_volume(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = volume(a) + volume(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(x: f64, y: f64, z: f64, side: f64) -> Cuboid {
        Cuboid::new(Vec3::new(x, y, z), Vec3::new(side, side, side)).unwrap()
    }

    #[test]
    fn volume_examples() {
        assert_eq!(volume(&cube(0.0, 0.0, 0.0, 1.0)), 1.0);
        let c = Cuboid::new(Vec3::default(), Vec3::new(2.0, 3.0, 0.5)).unwrap();
        assert_eq!(volume(&c), 3.0);
        assert_eq!(volume(&cube(0.0, 0.0, 0.0, 2.0)), 8.0);
    }

    #[test]
    fn intersection_examples() {
        let a = cube(0.0, 0.0, 0.0, 1.0);
        assert_eq!(intersection_volume(&a, &a), 1.0);
        assert_eq!(intersection_volume(&a, &cube(2.0, 0.0, 0.0, 1.0)), 0.0);
        assert_eq!(intersection_volume(&a, &cube(0.5, 0.0, 0.0, 1.0)), 0.5);
    }

    #[test]
    fn iou_examples() {
        let a = cube(0.0, 0.0, 0.0, 1.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        assert_eq!(iou_3d(&a, &cube(2.0, 0.0, 0.0, 1.0)), 0.0);
        assert!((iou_3d(&a, &cube(0.5, 0.0, 0.0, 1.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn touching_faces_do_not_overlap() {
        let a = cube(0.0, 0.0, 0.0, 1.0);
        let b = cube(1.0, 0.0, 0.0, 1.0);
        assert_eq!(intersection_volume(&a, &b), 0.0);
    }

    #[test]
    fn nested_box() {
        let outer = cube(0.0, 0.0, 0.0, 2.0);
        let inner = cube(0.25, -0.1, 0.3, 1.0);
        assert_eq!(intersection_volume(&outer, &inner), 1.0);
        assert_eq!(iou_3d(&outer, &inner), 1.0 / 8.0);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(matches!(
            Cuboid::new(Vec3::default(), Vec3::new(1.0, 0.0, 1.0)),
            Err(GeometryError::DegenerateExtent(..))
        ));
        assert!(Cuboid::new(Vec3::default(), Vec3::new(1.0, -1.0, 1.0)).is_err());
        assert!(Cuboid::new(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0)).is_err());
        assert!(Cuboid::new(Vec3::default(), Vec3::new(1.0, f64::INFINITY, 1.0)).is_err());
    }

    #[test]
    fn serde_shape() {
        let c = Cuboid::new(Vec3::new(1.0, 2.0, 0.5), Vec3::new(0.5, 0.25, 1.0)).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"center":[1.0,2.0,0.5],"extent":[0.5,0.25,1.0]}"#);
        let back: Cuboid = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<Cuboid>(r#"{"center":[0,0,0],"extent":[1,0,1]}"#).is_err());
    }
}
