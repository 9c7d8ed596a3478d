//! Deterministic 2.5D robot simulation.
//!
//! The robot is a disc moving on the floor plane; objects keep full 3D
//! cuboids. Passive control teleports the robot to the next trajectory node
//! with a bounded pose error. Active control executes distance and rotation
//! requests against the odometry, while the true motion is scaled by the
//! noise model's biases and perturbed by per-step Gaussian noise, stopping
//! at the first contact with an obstacle.
//!
//! Randomness comes from four independent ChaCha streams (passive
//! controller, odometry controller, true motion, detections) so that, for
//! example, changing the true-motion bias never perturbs the odometry.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::{ClassId, NUM_CLASSES};
use crate::geometry::plane::{Point2, Segment};
use crate::geometry::{Cuboid, Vec3};
use crate::object_map::LabelDistribution;
use crate::scene::{Pose, Scene, LIDAR_HEIGHT};

pub const LASER_BEAMS: usize = 900;
pub const LASER_RESOLUTION_DEG: f64 = 0.4;
pub const LASER_MAX_RANGE: f64 = 57.29;

/// Backs the robot off this far (meters) from the contact point.
const CONTACT_BACKOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Passive,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Localization {
    GroundTruth,
    DeadReckoning,
}

/// Odometry and actuation noise for active control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// True distance travelled per metre of odometry.
    pub linear_scale_bias: f64,
    /// True rotation per unit of odometry rotation.
    pub angular_scale_bias: f64,
    pub per_step_linear_sigma: f64,
    /// Radians.
    pub per_step_angular_sigma: f64,
    /// Odometry-frame tolerance of the distance controller, meters.
    pub controller_linear_tolerance: f64,
    /// Odometry-frame tolerance of the rotation controller, degrees.
    pub controller_angular_tolerance_deg: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            linear_scale_bias: 1.0,
            angular_scale_bias: 1.0,
            per_step_linear_sigma: 0.0,
            per_step_angular_sigma: 0.0,
            controller_linear_tolerance: 0.0,
            controller_angular_tolerance_deg: 0.0,
            rng_seed: 0,
        }
    }

    /// Defaults under which a naive dead-reckoning agent drifts visibly
    /// within about a hundred steps.
    pub fn default_drift(seed: u64) -> Self {
        Self {
            linear_scale_bias: 1.05,
            angular_scale_bias: 1.02,
            per_step_linear_sigma: 0.01,
            per_step_angular_sigma: 0.5f64.to_radians(),
            controller_linear_tolerance: 0.01,
            controller_angular_tolerance_deg: 1.0,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.linear_scale_bias > 0.0
            && self.angular_scale_bias > 0.0
            && self.per_step_linear_sigma >= 0.0
            && self.per_step_angular_sigma >= 0.0
            && self.controller_linear_tolerance >= 0.0
            && self.controller_angular_tolerance_deg >= 0.0
            && [self.linear_scale_bias, self.angular_scale_bias].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig("noise model".into()))
        }
    }
}

/// Parametric stand-in for a perception stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionNoise {
    pub center_sigma: f64,
    pub extent_sigma: f64,
    /// Probability mass on the true class; the rest is spread evenly over
    /// the other classes.
    pub label_correct_mass: f64,
    pub miss_rate: f64,
    pub rng_seed: u64,
}

impl DetectionNoise {
    pub fn noiseless() -> Self {
        Self {
            center_sigma: 0.0,
            extent_sigma: 0.0,
            label_correct_mass: 1.0,
            miss_rate: 0.0,
            rng_seed: 0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            center_sigma: self.center_sigma * factor,
            extent_sigma: self.extent_sigma * factor,
            label_correct_mass: 1.0 - (1.0 - self.label_correct_mass) * factor,
            miss_rate: (self.miss_rate * factor).min(1.0),
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub fov_deg: f64,
    pub detection_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { fov_deg: 90.0, detection_range: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub control: ControlMode,
    pub localization: Localization,
    pub noise: NoiseModel,
    pub detection: DetectionNoise,
    pub sensor: SensorConfig,
    pub robot_radius: f64,
    /// Bound on the passive controller's position error, meters.
    pub passive_position_error: f64,
    /// Bound on the passive controller's heading error, degrees.
    pub passive_heading_error_deg: f64,
    pub passive_seed: u64,
}

impl WorldConfig {
    pub fn new(control: ControlMode, localization: Localization) -> Self {
        Self {
            control,
            localization,
            noise: NoiseModel::noiseless(),
            detection: DetectionNoise::noiseless(),
            sensor: SensorConfig::default(),
            robot_radius: 0.25,
            passive_position_error: 0.01,
            passive_heading_error_deg: 1.0,
            passive_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("episode complete: no trajectory nodes remain")]
    EpisodeComplete,
    #[error("'{0}' is not available under {1:?} control")]
    WrongMode(&'static str, ControlMode),
    #[error("invalid magnitude {0}")]
    InvalidMagnitude(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub true_pose: Pose,
    pub odom_pose: Pose,
    pub trajectory_index: usize,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Centre in the robot base frame (x forward, y left, z up from the
    /// floor); extent along the global axes.
    pub cuboid: Cuboid,
    pub label: LabelDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub position: [f64; 3],
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransforms {
    pub base: Frame,
    pub lidar: Frame,
    pub camera: Frame,
    pub start: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u64,
    pub reported_pose: Pose,
    pub collided: bool,
    pub detections: Vec<Detection>,
    /// Counter-clockwise from the heading, `LASER_RESOLUTION_DEG` apart.
    pub laser: Vec<f64>,
    pub frames: FrameTransforms,
}

pub struct World {
    scene: Arc<Scene>,
    config: WorldConfig,
    state: RobotState,
    step: u64,
    collision_edges: Vec<Segment>,
    laser_edges: Vec<Segment>,
    occluders: Vec<Segment>,
    passive_rng: ChaCha8Rng,
    controller_rng: ChaCha8Rng,
    motion_rng: ChaCha8Rng,
    detection_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn symmetric(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    let u: f64 = rng.random();
    (2.0 * u - 1.0) * bound
}

fn frame_of(pose: &Pose, forward: f64, z: f64) -> Frame {
    let p = pose.to_global(Point2::new(forward, 0.0));
    Frame { position: [p.x, p.y, z], yaw: pose.theta }
}

impl World {
    pub fn new(scene: Arc<Scene>, config: WorldConfig) -> Result<Self, SimError> {
        config.noise.validate()?;
        if !(config.robot_radius > 0.0) {
            return Err(SimError::InvalidConfig("robot radius must be positive".into()));
        }
        let start = scene.start;
        Ok(Self {
            collision_edges: scene.collision_edges(),
            laser_edges: scene.laser_edges(),
            occluders: scene.occluding_edges(),
            passive_rng: stream(config.passive_seed, 1),
            controller_rng: stream(config.noise.rng_seed, 2),
            motion_rng: stream(config.noise.rng_seed, 3),
            detection_rng: stream(config.detection.rng_seed, 4),
            state: RobotState {
                true_pose: start,
                odom_pose: start,
                trajectory_index: 0,
                collided: false,
            },
            step: 0,
            scene,
            config,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn reported_pose(&self) -> Pose {
        match self.config.localization {
            Localization::GroundTruth => self.state.true_pose,
            Localization::DeadReckoning => self.state.odom_pose,
        }
    }

    /// Actions applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn remaining_nodes(&self) -> usize {
        self.scene.trajectory.len().saturating_sub(self.state.trajectory_index + 1)
    }

    /// Advances to the next trajectory node (passive control).
    pub fn move_next(&mut self) -> Result<Observation, SimError> {
        if self.config.control != ControlMode::Passive {
            return Err(SimError::WrongMode("move_next", self.config.control));
        }
        let next = self.state.trajectory_index + 1;
        let Some(node) = self.scene.trajectory.get(next).copied() else {
            return Err(SimError::EpisodeComplete);
        };
        // Keep sampled errors strictly inside the advertised bounds.
        let shrink = 1.0 - 1e-6;
        let r = self.config.passive_position_error * shrink * self.passive_rng.random::<f64>().sqrt();
        let phi = self.passive_rng.random::<f64>() * 2.0 * PI;
        let dtheta = symmetric(&mut self.passive_rng, self.config.passive_heading_error_deg.to_radians() * shrink);
        let pose = Pose::new(node.x + r * phi.cos(), node.y + r * phi.sin(), node.theta + dtheta);
        self.state.true_pose = pose;
        self.state.odom_pose = pose;
        self.state.trajectory_index = next;
        self.state.collided = false;
        Ok(self.finish_step())
    }

    /// Drives `distance` meters forward according to odometry (active control).
    pub fn move_distance(&mut self, distance: f64) -> Result<Observation, SimError> {
        if self.config.control != ControlMode::Active {
            return Err(SimError::WrongMode("move_distance", self.config.control));
        }
        if !(distance.is_finite() && distance >= 0.0) {
            return Err(SimError::InvalidMagnitude(distance));
        }
        let noise = self.config.noise;
        let odom_distance = distance + symmetric(&mut self.controller_rng, noise.controller_linear_tolerance);
        let odom_distance = odom_distance.max(0.0);
        let lin = normal(&mut self.motion_rng);
        let ang = normal(&mut self.motion_rng);
        let true_distance = (odom_distance * noise.linear_scale_bias + lin * noise.per_step_linear_sigma).max(0.0);

        let start = self.state.true_pose;
        let (s, c) = start.theta.sin_cos();
        let delta = Point2::new(c * true_distance, s * true_distance);
        let fraction = self.free_fraction(start.position(), delta);
        let collided = fraction < 1.0;

        let end = start.position() + delta.scale(fraction);
        self.state.true_pose = Pose::new(end.x, end.y, start.theta + ang * noise.per_step_angular_sigma);

        let odom = self.state.odom_pose;
        let (so, co) = odom.theta.sin_cos();
        // Odometry integrates the commanded motion; it cannot see the contact.
        self.state.odom_pose = Pose::new(odom.x + co * odom_distance, odom.y + so * odom_distance, odom.theta);
        self.state.collided = collided;
        Ok(self.finish_step())
    }

    /// Rotates in place by `degrees` (counter-clockwise positive).
    pub fn rotate(&mut self, degrees: f64) -> Result<Observation, SimError> {
        if self.config.control != ControlMode::Active {
            return Err(SimError::WrongMode("rotate", self.config.control));
        }
        if !degrees.is_finite() {
            return Err(SimError::InvalidMagnitude(degrees));
        }
        let noise = self.config.noise;
        let odom_turn = (degrees + symmetric(&mut self.controller_rng, noise.controller_angular_tolerance_deg)).to_radians();
        let _lin = normal(&mut self.motion_rng);
        let ang = normal(&mut self.motion_rng);
        let true_turn = odom_turn * noise.angular_scale_bias + ang * noise.per_step_angular_sigma;
        let t = self.state.true_pose;
        self.state.true_pose = Pose::new(t.x, t.y, t.theta + true_turn);
        let o = self.state.odom_pose;
        self.state.odom_pose = Pose::new(o.x, o.y, o.theta + odom_turn);
        self.state.collided = false;
        Ok(self.finish_step())
    }

    /// Current observation without acting.
    pub fn observe(&mut self) -> Observation {
        let pose = self.state.true_pose;
        Observation {
            step: self.step,
            reported_pose: self.reported_pose(),
            collided: self.state.collided,
            detections: self.detect(&pose),
            laser: self.laser_scan(&pose),
            frames: self.frames(),
        }
    }

    fn finish_step(&mut self) -> Observation {
        self.step += 1;
        self.observe()
    }

    /// Largest fraction of `delta` the robot disc can travel from `from`.
    fn free_fraction(&self, from: Point2, delta: Point2) -> f64 {
        let len = delta.norm();
        if len == 0.0 {
            return 1.0;
        }
        let hit = self
            .collision_edges
            .iter()
            .filter_map(|e| e.disc_contact(from, delta, self.config.robot_radius))
            .fold(f64::INFINITY, f64::min);
        if hit.is_finite() {
            (hit - CONTACT_BACKOFF / len).max(0.0)
        } else {
            1.0
        }
    }

    fn frames(&self) -> FrameTransforms {
        let base = self.reported_pose();
        FrameTransforms {
            base: frame_of(&base, 0.0, 0.0),
            lidar: frame_of(&base, 0.0, LIDAR_HEIGHT),
            camera: frame_of(&base, 0.1, 1.0),
            start: frame_of(&self.scene.start, 0.0, 0.0),
        }
    }

    /// Range per beam. Each edge is only tested against the beams inside
    /// the angular interval it subtends.
    pub fn laser_scan(&self, pose: &Pose) -> Vec<f64> {
        let origin = pose.position();
        let step = LASER_RESOLUTION_DEG.to_radians();
        let dirs: Vec<Point2> = (0..LASER_BEAMS)
            .map(|k| {
                let a = pose.theta + (k as f64 * LASER_RESOLUTION_DEG).to_radians();
                Point2::new(a.cos(), a.sin())
            })
            .collect();
        let mut ranges = vec![LASER_MAX_RANGE; LASER_BEAMS];
        let mut test = |k: usize, e: &Segment| {
            if let Some(t) = e.ray_hit(origin, dirs[k]) {
                if t < ranges[k] {
                    ranges[k] = t;
                }
            }
        };
        for e in &self.laser_edges {
            if e.distance_to(origin) < 1e-9 {
                (0..LASER_BEAMS).for_each(|k| test(k, e));
                continue;
            }
            let rel = |p: Point2| {
                let d = p - origin;
                (d.y.atan2(d.x) - pose.theta).rem_euclid(2.0 * PI)
            };
            let (mut lo, mut hi) = (rel(e.a), rel(e.b));
            if (hi - lo).rem_euclid(2.0 * PI) > PI {
                std::mem::swap(&mut lo, &mut hi);
            }
            let span = (hi - lo).rem_euclid(2.0 * PI);
            let first = (lo / step).floor() as i64 - 1;
            let count = (span / step).ceil() as i64 + 3;
            for j in first..first + count {
                test(j.rem_euclid(LASER_BEAMS as i64) as usize, e);
            }
        }
        ranges.iter_mut().for_each(|r| *r = r.max(1e-3));
        ranges
    }

    fn visible(&self, pose: &Pose, target: Point2) -> bool {
        let local = pose.to_local(target);
        let dist = local.norm();
        if dist > self.config.sensor.detection_range {
            return false;
        }
        let bearing = local.y.atan2(local.x);
        if bearing.abs() > 0.5 * self.config.sensor.fov_deg.to_radians() {
            return false;
        }
        let sight = Segment::new(pose.position(), target);
        !self.occluders.iter().any(|w| w.intersects(&sight))
    }

    fn detect(&mut self, pose: &Pose) -> Vec<Detection> {
        let noise = self.config.detection;
        let mut out = Vec::new();
        let scene = Arc::clone(&self.scene);
        for obj in &scene.objects {
            let c = obj.cuboid.center();
            if !self.visible(pose, Point2::new(c.x, c.y)) {
                continue;
            }
            let rng = &mut self.detection_rng;
            let miss = rng.random::<f64>() < noise.miss_rate;
            let jitter: [f64; 6] = std::array::from_fn(|_| normal(rng));
            if miss {
                continue;
            }
            let local = pose.to_local(Point2::new(c.x, c.y));
            let center = Vec3::new(
                local.x + jitter[0] * noise.center_sigma,
                local.y + jitter[1] * noise.center_sigma,
                c.z + jitter[2] * noise.center_sigma,
            );
            let e = obj.cuboid.extent();
            let extent = Vec3::new(
                (e.x + jitter[3] * noise.extent_sigma).max(0.01),
                (e.y + jitter[4] * noise.extent_sigma).max(0.01),
                (e.z + jitter[5] * noise.extent_sigma).max(0.01),
            );
            out.push(Detection {
                cuboid: Cuboid::new(center, extent).expect("clamped extents are positive"),
                label: noisy_label(obj.class, noise.label_correct_mass),
            });
        }
        out
    }
}

fn noisy_label(truth: ClassId, correct_mass: f64) -> LabelDistribution {
    let mass = correct_mass.clamp(0.0, 1.0);
    if mass == 1.0 {
        return LabelDistribution::one_hot(truth);
    }
    let other = (1.0 - mass) / (NUM_CLASSES - 1) as f64;
    let mut probs = [other; NUM_CLASSES];
    probs[truth.index()] = mass;
    LabelDistribution::new(probs).unwrap_or_else(|_| LabelDistribution::one_hot(truth))
}

/// Rebuilds a global-frame cuboid from a detection and the pose it was
/// taken from.
pub fn detection_to_global(det: &Detection, pose: &Pose) -> Cuboid {
    let c = det.cuboid.center();
    let g = pose.to_global(Point2::new(c.x, c.y));
    Cuboid::new(Vec3::new(g.x, g.y, c.z), det.cuboid.extent()).expect("detection extents are positive")
}
