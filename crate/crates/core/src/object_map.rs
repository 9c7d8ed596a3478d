//! Proposed and ground-truth object maps for both tasks, with validation and
//! the canonical JSON document format.
//!
//! Documents carry a `version` field (currently `1`) and a `task` tag.
//! Canonical serialization sorts keys, pretty-prints with two-space
//! indentation, writes floats in shortest round-trip form, omits zero label
//! entries and ends with a newline. Serializing a parsed canonical document
//! reproduces it byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::{ClassId, BACKGROUND, CLASS_NAMES, NUM_CLASSES};
use crate::geometry::Cuboid;

pub const MAP_FORMAT_VERSION: u32 = 1;

const LABEL_SUM_SLACK: f64 = 1e-6;
const STATE_SUM_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SemanticSlam,
    Scd,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::SemanticSlam => "semantic_slam",
            TaskKind::Scd => "scd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "semantic_slam" => Some(TaskKind::SemanticSlam),
            "scd" => Some(TaskKind::Scd),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("invariant violation at {location}, field '{field}': {reason}")]
    InvariantViolation {
        location: Location,
        field: String,
        reason: String,
    },
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Document,
    Object(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Document => f.write_str("document"),
            Location::Object(i) => write!(f, "object {i}"),
        }
    }
}

fn violation(index: usize, field: &str, reason: impl Into<String>) -> MapError {
    MapError::InvariantViolation {
        location: Location::Object(index),
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Class probabilities over the roster. Mass not assigned to any class is
/// implicit background belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelDistribution([f64; NUM_CLASSES]);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("probability {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("probabilities sum to {0}")]
    BadSum(f64),
    #[error("unknown class '{0}'")]
    UnknownClass(String),
    #[error("background mass is implicit and may not be listed")]
    ExplicitBackground,
}

fn check_prob(p: f64) -> Result<(), DistributionError> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(DistributionError::OutOfRange(p))
    }
}

impl LabelDistribution {
    pub fn new(probs: [f64; NUM_CLASSES]) -> Result<Self, DistributionError> {
        for &p in &probs {
            check_prob(p)?;
        }
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + LABEL_SUM_SLACK {
            return Err(DistributionError::BadSum(sum));
        }
        Ok(Self(probs))
    }

    pub fn from_named<'a>(
        entries: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self, DistributionError> {
        let mut probs = [0.0; NUM_CLASSES];
        for (name, p) in entries {
            if name == BACKGROUND {
                return Err(DistributionError::ExplicitBackground);
            }
            let id = ClassId::from_name(name)
                .ok_or_else(|| DistributionError::UnknownClass(name.to_string()))?;
            probs[id.index()] = p;
        }
        Self::new(probs)
    }

    pub fn one_hot(class: ClassId) -> Self {
        let mut probs = [0.0; NUM_CLASSES];
        probs[class.index()] = 1.0;
        Self(probs)
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    /// All mass on background.
    pub fn background() -> Self {
        Self([0.0; NUM_CLASSES])
    }

    pub fn prob(&self, class: ClassId) -> f64 {
        self.0[class.index()]
    }

    pub fn probs(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    /// Largest probability given to any stored (non-background) class.
    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> Option<ClassId> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &p) in self.0.iter().enumerate() {
            if p > 0.0 && best.is_none_or(|(_, b)| p > b) {
                best = Some((i, p));
            }
        }
        best.and_then(|(i, _)| ClassId::from_index(i))
    }

    fn to_named(self) -> BTreeMap<String, f64> {
        CLASS_NAMES
            .iter()
            .zip(self.0)
            .filter(|(_, p)| *p > 0.0)
            .map(|(n, p)| (n.to_string(), p))
            .collect()
    }
}

/// Serialized as an object of the non-zero class probabilities.
impl Serialize for LabelDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_named().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let named = BTreeMap::<String, f64>::deserialize(d)?;
        LabelDistribution::from_named(named.iter().map(|(k, v)| (k.as_str(), *v)))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeState {
    Added,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDistribution {
    pub added: f64,
    pub removed: f64,
    pub same: f64,
}

impl StateDistribution {
    pub fn new(added: f64, removed: f64, same: f64) -> Result<Self, DistributionError> {
        for p in [added, removed, same] {
            check_prob(p)?;
        }
        let sum = added + removed + same;
        if (sum - 1.0).abs() > STATE_SUM_SLACK {
            return Err(DistributionError::BadSum(sum));
        }
        Ok(Self { added, removed, same })
    }

    pub fn one_hot(state: ChangeState) -> Self {
        match state {
            ChangeState::Added => Self { added: 1.0, removed: 0.0, same: 0.0 },
            ChangeState::Removed => Self { added: 0.0, removed: 1.0, same: 0.0 },
        }
    }

    pub fn prob(&self, state: ChangeState) -> f64 {
        match state {
            ChangeState::Added => self.added,
            ChangeState::Removed => self.removed,
        }
    }

    /// Largest probability on a state other than "same".
    pub fn max_changed(&self) -> f64 {
        self.added.max(self.removed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposedObject {
    pub cuboid: Cuboid,
    pub label: LabelDistribution,
    pub state: Option<StateDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthObject {
    pub instance_id: String,
    pub cuboid: Cuboid,
    pub true_label: ClassId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_state: Option<ChangeState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapMetadata {
    pub environment: String,
    pub difficulty: Option<String>,
    pub agent: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMap {
    pub task: TaskKind,
    pub metadata: MapMetadata,
    pub objects: Vec<ProposedObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMap {
    pub task: TaskKind,
    pub environment: String,
    pub objects: Vec<GroundTruthObject>,
}

impl ObjectMap {
    pub fn new(task: TaskKind, environment: impl Into<String>) -> Self {
        Self {
            task,
            metadata: MapMetadata {
                environment: environment.into(),
                ..Default::default()
            },
            objects: Vec::new(),
        }
    }

    /// Ground truth rewritten as fully confident proposals.
    pub fn one_hot_from(gt: &GroundTruthMap) -> Self {
        let objects = gt
            .objects
            .iter()
            .map(|g| ProposedObject {
                cuboid: g.cuboid,
                label: LabelDistribution::one_hot(g.true_label),
                state: g.true_state.map(StateDistribution::one_hot),
            })
            .collect();
        Self {
            task: gt.task,
            metadata: MapMetadata {
                environment: gt.environment.clone(),
                ..Default::default()
            },
            objects,
        }
    }

    pub fn validate(&self) -> Result<(), MapError> {
        for (i, o) in self.objects.iter().enumerate() {
            match (self.task, o.state.is_some()) {
                (TaskKind::SemanticSlam, true) => {
                    return Err(MapError::TaskMismatch(format!(
                        "object {i} carries state_probs in a semantic_slam map"
                    )))
                }
                (TaskKind::Scd, false) => {
                    return Err(MapError::TaskMismatch(format!(
                        "object {i} lacks state_probs in an scd map"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl GroundTruthMap {
    pub fn validate(&self) -> Result<(), MapError> {
        let mut seen = HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if !seen.insert(o.instance_id.as_str()) {
                return Err(violation(i, "instance_id", format!("duplicate id '{}'", o.instance_id)));
            }
            match (self.task, o.true_state) {
                (TaskKind::SemanticSlam, Some(_)) => {
                    return Err(MapError::TaskMismatch(format!(
                        "object {i} carries true_state in a semantic_slam ground truth"
                    )))
                }
                (TaskKind::Scd, None) => {
                    return Err(MapError::TaskMismatch(format!(
                        "object {i} lacks true_state in an scd ground truth"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    cuboid: serde_json::Value,
    label_probs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_probs: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    version: u32,
    task: String,
    environment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    difficulty: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    agent: Option<String>,
    objects: Vec<RawObject>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroundTruthMap {
    version: u32,
    task: String,
    environment: String,
    objects: Vec<serde_json::Value>,
}

fn parse_header(version: u32, task: &str, expected: TaskKind) -> Result<(), MapError> {
    if version != MAP_FORMAT_VERSION {
        return Err(MapError::MalformedDocument(format!(
            "unsupported version {version} (expected {MAP_FORMAT_VERSION})"
        )));
    }
    let found = TaskKind::parse(task)
        .ok_or_else(|| MapError::MalformedDocument(format!("unknown task '{task}'")))?;
    if found != expected {
        return Err(MapError::TaskMismatch(format!(
            "document is a {found} map but {expected} was requested"
        )));
    }
    Ok(())
}

/// Parses and validates a proposed map document.
pub fn parse_map(document: &[u8], task: TaskKind) -> Result<ObjectMap, MapError> {
    let value: serde_json::Value =
        serde_json::from_slice(document).map_err(|e| MapError::MalformedDocument(e.to_string()))?;
    parse_map_value(value, task)
}

pub fn parse_map_value(value: serde_json::Value, task: TaskKind) -> Result<ObjectMap, MapError> {
    let raw: RawMap =
        serde_json::from_value(value).map_err(|e| MapError::MalformedDocument(e.to_string()))?;
    parse_header(raw.version, &raw.task, task)?;
    let mut objects = Vec::with_capacity(raw.objects.len());
    for (i, o) in raw.objects.into_iter().enumerate() {
        let cuboid: Cuboid = serde_json::from_value(o.cuboid)
            .map_err(|e| violation(i, "cuboid", e.to_string()))?;
        let label = LabelDistribution::from_named(o.label_probs.iter().map(|(k, v)| (k.as_str(), *v)))
            .map_err(|e| violation(i, "label_probs", e.to_string()))?;
        let state = match o.state_probs {
            None => None,
            Some(v) => {
                let s: StateDistribution = serde_json::from_value(v)
                    .map_err(|e| violation(i, "state_probs", e.to_string()))?;
                Some(
                    StateDistribution::new(s.added, s.removed, s.same)
                        .map_err(|e| violation(i, "state_probs", e.to_string()))?,
                )
            }
        };
        objects.push(ProposedObject { cuboid, label, state });
    }
    let map = ObjectMap {
        task,
        metadata: MapMetadata {
            environment: raw.environment,
            difficulty: raw.difficulty,
            agent: raw.agent,
        },
        objects,
    };
    map.validate()?;
    Ok(map)
}

pub fn map_to_value(map: &ObjectMap) -> serde_json::Value {
    let raw = RawMap {
        version: MAP_FORMAT_VERSION,
        task: map.task.as_str().to_string(),
        environment: map.metadata.environment.clone(),
        difficulty: map.metadata.difficulty.clone(),
        agent: map.metadata.agent.clone(),
        objects: map
            .objects
            .iter()
            .map(|o| RawObject {
                cuboid: serde_json::to_value(o.cuboid).expect("cuboid serializes"),
                label_probs: o.label.to_named(),
                state_probs: o.state.map(|s| serde_json::to_value(s).expect("state serializes")),
            })
            .collect(),
    };
    serde_json::to_value(raw).expect("map serializes")
}

/// Canonical bytes for a JSON value: sorted keys, pretty, trailing newline.
pub fn canonical_json(value: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json value serializes");
    out.push(b'\n');
    out
}

pub fn serialize_map(map: &ObjectMap) -> Vec<u8> {
    canonical_json(&map_to_value(map))
}

pub fn parse_gt_map(document: &[u8], task: TaskKind) -> Result<GroundTruthMap, MapError> {
    let value: serde_json::Value =
        serde_json::from_slice(document).map_err(|e| MapError::MalformedDocument(e.to_string()))?;
    let raw: RawGroundTruthMap =
        serde_json::from_value(value).map_err(|e| MapError::MalformedDocument(e.to_string()))?;
    parse_header(raw.version, &raw.task, task)?;
    let mut objects = Vec::with_capacity(raw.objects.len());
    for (i, v) in raw.objects.into_iter().enumerate() {
        let o: GroundTruthObject =
            serde_json::from_value(v).map_err(|e| violation(i, "object", e.to_string()))?;
        objects.push(o);
    }
    let gt = GroundTruthMap {
        task,
        environment: raw.environment,
        objects,
    };
    gt.validate()?;
    Ok(gt)
}

pub fn gt_map_to_value(gt: &GroundTruthMap) -> serde_json::Value {
    let raw = RawGroundTruthMap {
        version: MAP_FORMAT_VERSION,
        task: gt.task.as_str().to_string(),
        environment: gt.environment.clone(),
        objects: gt
            .objects
            .iter()
            .map(|o| serde_json::to_value(o).expect("gt object serializes"))
            .collect(),
    };
    serde_json::to_value(raw).expect("gt map serializes")
}

pub fn serialize_gt_map(gt: &GroundTruthMap) -> Vec<u8> {
    canonical_json(&gt_map_to_value(gt))
}

/// Derives change-detection ground truth from two semantic-SLAM ground truths
/// of variations of one base environment.
///
/// Objects are matched by `instance_id`. Removed objects come first in the
/// order of `a`, followed by added objects in the order of `b`.
pub fn diff_to_gt_scd(a: &GroundTruthMap, b: &GroundTruthMap) -> Result<GroundTruthMap, MapError> {
    for (name, m) in [("first", a), ("second", b)] {
        if m.task != TaskKind::SemanticSlam {
            return Err(MapError::TaskMismatch(format!(
                "{name} map must be a semantic_slam ground truth, got {}",
                m.task
            )));
        }
    }
    let ids_a: BTreeSet<&str> = a.objects.iter().map(|o| o.instance_id.as_str()).collect();
    let ids_b: BTreeSet<&str> = b.objects.iter().map(|o| o.instance_id.as_str()).collect();
    let removed = a
        .objects
        .iter()
        .filter(|o| !ids_b.contains(o.instance_id.as_str()))
        .map(|o| GroundTruthObject {
            true_state: Some(ChangeState::Removed),
            ..o.clone()
        });
    let added = b
        .objects
        .iter()
        .filter(|o| !ids_a.contains(o.instance_id.as_str()))
        .map(|o| GroundTruthObject {
            true_state: Some(ChangeState::Added),
            ..o.clone()
        });
    Ok(GroundTruthMap {
        task: TaskKind::Scd,
        environment: format!("{}:{}", a.environment, b.environment),
        objects: removed.chain(added).collect(),
    })
}
