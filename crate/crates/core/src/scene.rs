//! Scene files: one environment variation with walls, fixtures, ground-truth
//! objects and the passive trajectory.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::ClassId;
use crate::geometry::plane::{Point2, Polygon, Segment};
use crate::geometry::Cuboid;
use crate::object_map::{canonical_json, GroundTruthMap, GroundTruthObject, TaskKind};

pub const SCENE_FORMAT_VERSION: u32 = 1;

/// Objects whose base sits below this height block the robot body.
pub const ROBOT_BODY_HEIGHT: f64 = 0.6;
/// Height of the planar laser above the floor.
pub const LIDAR_HEIGHT: f64 = 0.35;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Planar robot pose; `theta` is the heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Expresses a global point in this pose's frame (x forward, y left).
    pub fn to_local(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let d = p - self.position();
        Point2::new(d.x * c + d.y * s, -d.x * s + d.y * c)
    }

    /// Maps a point in this pose's frame to the global frame.
    pub fn to_global(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(self.x + p.x * c - p.y * s, self.y + p.x * s + p.y * c)
    }

    pub fn heading_error(&self, other: &Pose) -> f64 {
        wrap_angle(self.theta - other.theta).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub instance_id: String,
    pub class: ClassId,
    pub cuboid: Cuboid,
}

impl SceneObject {
    pub fn blocks_robot(&self) -> bool {
        self.cuboid.min_corner().z < ROBOT_BODY_HEIGHT
    }

    pub fn blocks_laser(&self) -> bool {
        let lo = self.cuboid.min_corner().z;
        let hi = self.cuboid.max_corner().z;
        lo <= LIDAR_HEIGHT && LIDAR_HEIGHT <= hi
    }
}

/// Static furniture that is not an object of interest (counters, shelves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub kind: String,
    pub footprint: Polygon,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub version: u32,
    /// Environment id, e.g. `office_3`.
    pub name: String,
    pub base: String,
    pub variation: u8,
    pub night: bool,
    pub walls: Vec<Polygon>,
    pub fixtures: Vec<Fixture>,
    pub objects: Vec<SceneObject>,
    pub start: Pose,
    pub trajectory: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Malformed(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

impl Scene {
    pub fn ground_truth(&self) -> GroundTruthMap {
        GroundTruthMap {
            task: TaskKind::SemanticSlam,
            environment: self.name.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| GroundTruthObject {
                    instance_id: o.instance_id.clone(),
                    cuboid: o.cuboid,
                    true_label: o.class,
                    true_state: None,
                })
                .collect(),
        }
    }

    /// Outline polygons the robot disc may not enter.
    pub fn collision_polygons(&self) -> Vec<Polygon> {
        let mut out: Vec<Polygon> = self.walls.clone();
        out.extend(self.fixtures.iter().map(|f| f.footprint.clone()));
        out.extend(
            self.objects
                .iter()
                .filter(|o| o.blocks_robot())
                .map(|o| o.cuboid.footprint().to_polygon()),
        );
        out
    }

    pub fn collision_edges(&self) -> Vec<Segment> {
        edges_of(&self.collision_polygons())
    }

    pub fn laser_edges(&self) -> Vec<Segment> {
        let mut polys: Vec<Polygon> = self.walls.clone();
        polys.extend(
            self.fixtures
                .iter()
                .filter(|f| f.height >= LIDAR_HEIGHT)
                .map(|f| f.footprint.clone()),
        );
        polys.extend(
            self.objects
                .iter()
                .filter(|o| o.blocks_laser())
                .map(|o| o.cuboid.footprint().to_polygon()),
        );
        edges_of(&polys)
    }

    /// Edges that block line of sight to objects of interest.
    pub fn occluding_edges(&self) -> Vec<Segment> {
        edges_of(&self.walls)
    }

    /// Distance from `p` to the nearest collision outline; zero inside one.
    pub fn clearance(&self, p: Point2) -> f64 {
        self.collision_polygons()
            .iter()
            .map(|poly| poly.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.version != SCENE_FORMAT_VERSION {
            return Err(SceneError::Malformed(format!("unsupported scene version {}", self.version)));
        }
        let mut ids = HashSet::new();
        for o in &self.objects {
            if !ids.insert(o.instance_id.as_str()) {
                return Err(SceneError::Invalid(format!("duplicate instance id '{}'", o.instance_id)));
            }
        }
        if !self.start.is_finite() || self.trajectory.iter().any(|p| !p.is_finite()) {
            return Err(SceneError::Invalid("non-finite pose".into()));
        }
        for w in self.walls.iter().chain(self.fixtures.iter().map(|f| &f.footprint)) {
            if w.vertices.len() < 3 || w.vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
                return Err(SceneError::Invalid("obstacle polygon needs 3+ finite vertices".into()));
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("scene serializes")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        canonical_json(&self.to_value())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SceneError> {
        let scene: Scene = serde_json::from_slice(bytes).map_err(|e| SceneError::Malformed(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }
}

fn edges_of(polys: &[Polygon]) -> Vec<Segment> {
    polys.iter().flat_map(|p| p.edges().collect::<Vec<_>>()).collect()
}
