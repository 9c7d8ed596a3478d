use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    error_response, matrix_allows, ok_response, test_variations, ActionKind, ActionRequest, ApiError, Difficulty, Endpoint,
    ErrorCode, TaskDescriptor, PROTOCOL_VERSION,
};
use crate::classes::{CLASS_LIST_VERSION, CLASS_NAMES};
use crate::envgen::{derive_seed, Split, Suite};
use crate::object_map::{canonical_json, diff_to_gt_scd, parse_map_value, GroundTruthMap, MapError, TaskKind};
use crate::omq::{evaluate, EvalReport};
use crate::scene::Scene;
use crate::simworld::{
    DetectionNoise, NoiseModel, Observation, SimError, World, WorldConfig, LASER_BEAMS, LASER_MAX_RANGE,
    LASER_RESOLUTION_DEG,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    /// Enforce the test matrix and withhold reports from agents.
    pub strict: bool,
    pub seed: u64,
    /// Seeds inside these presets are replaced per episode.
    pub noise: NoiseModel,
    pub detection: DetectionNoise,
    /// Detection noise scale applied in night scenes.
    pub night_detection_multiplier: f64,
    /// Action budget per scene under active control.
    pub max_active_steps: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            strict: false,
            seed: 0,
            noise: NoiseModel::noiseless(),
            detection: DetectionNoise::noiseless(),
            night_detection_multiplier: 1.5,
            max_active_steps: 10_000,
        }
    }
}

struct Episode {
    descriptor: TaskDescriptor,
    scenes: Vec<Arc<Scene>>,
    scene_index: usize,
    world: World,
    seed: u64,
    gt: GroundTruthMap,
    closed: bool,
}

/// Hosts episodes over a loaded suite. Requests for different episodes may
/// run concurrently; requests for one episode are serialized.
pub struct Server {
    suite: Arc<Suite>,
    scenes: BTreeMap<String, Arc<Scene>>,
    config: ServerConfig,
    episodes: Mutex<BTreeMap<String, Arc<Mutex<Episode>>>>,
    reports: Mutex<BTreeMap<String, EvalReport>>,
    counter: AtomicU64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskInfoBody {
    task: TaskKind,
    difficulty: Difficulty,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StartBody {
    task: TaskKind,
    difficulty: Difficulty,
    environments: Vec<String>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepBody {
    episode: String,
    action: ActionRequest,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    episode: String,
    map: Value,
}

fn body<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T, ApiError> {
    serde_json::from_value(v).map_err(|e| ApiError::new(ErrorCode::MalformedRequest, e.to_string()))
}

fn sim_error(e: SimError) -> ApiError {
    match e {
        SimError::EpisodeComplete => ApiError::new(ErrorCode::EpisodeComplete, e.to_string()),
        SimError::WrongMode(..) => ApiError::new(ErrorCode::ActionNotAllowed, e.to_string()),
        SimError::InvalidMagnitude(_) => ApiError::new(ErrorCode::InvalidMagnitude, e.to_string()),
        SimError::InvalidConfig(_) => ApiError::new(ErrorCode::MalformedRequest, e.to_string()),
    }
}

fn map_error(e: MapError) -> ApiError {
    match e {
        MapError::TaskMismatch(_) => ApiError::new(ErrorCode::TaskMismatch, e.to_string()),
        _ => ApiError::new(ErrorCode::MalformedDocument, e.to_string()),
    }
}

impl Server {
    pub fn new(suite: Arc<Suite>, config: ServerConfig) -> Self {
        let scenes = suite.scenes.iter().map(|(k, s)| (k.clone(), Arc::new(s.clone()))).collect();
        Self {
            suite,
            scenes,
            config,
            episodes: Mutex::new(BTreeMap::new()),
            reports: Mutex::new(BTreeMap::new()),
            counter: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn suite(&self) -> &Suite {
        &self.suite
    }

    /// Handles one encoded request and returns the encoded reply.
    pub fn handle(&self, request: &[u8]) -> Vec<u8> {
        let reply = match serde_json::from_slice::<Value>(request) {
            Ok(v) => self.handle_value(v),
            Err(e) => error_response(&ApiError::new(ErrorCode::MalformedRequest, e.to_string())),
        };
        canonical_json(&reply)
    }

    pub fn handle_value(&self, request: Value) -> Value {
        match self.dispatch(request) {
            Ok(body) => ok_response(body),
            Err(e) => error_response(&e),
        }
    }

    /// Typed entry point used by in-process agents.
    pub fn call(&self, endpoint: Endpoint, body: Value) -> Result<Value, ApiError> {
        self.dispatch(json!({ "version": PROTOCOL_VERSION, "endpoint": endpoint.as_str(), "body": body }))
    }

    /// Scoring result of a submitted episode. Not reachable over the wire.
    pub fn report(&self, episode: &str) -> Option<EvalReport> {
        self.reports.lock().expect("reports lock").get(episode).cloned()
    }

    fn dispatch(&self, request: Value) -> Result<Value, ApiError> {
        let Value::Object(mut obj) = request else {
            return Err(ApiError::new(ErrorCode::MalformedRequest, "request must be an object"));
        };
        let version = obj.remove("version").and_then(|v| v.as_u64());
        if version != Some(PROTOCOL_VERSION as u64) {
            return Err(ApiError::new(ErrorCode::UnsupportedVersion, format!("expected version {PROTOCOL_VERSION}")));
        }
        let endpoint = obj.remove("endpoint").and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let payload = obj.remove("body").unwrap_or_else(|| json!({}));
        if let Some(extra) = obj.keys().next() {
            return Err(ApiError::new(ErrorCode::MalformedRequest, format!("unknown field '{extra}'")));
        }
        match endpoint.as_str() {
            "list_environments" => Ok(self.list_environments()),
            "task_info" => self.task_info(body(payload)?),
            "start_episode" => self.start_episode(body(payload)?),
            "step" => self.step(body(payload)?),
            "submit" => self.submit(body(payload)?),
            other => Err(ApiError::new(ErrorCode::UnknownEndpoint, format!("unknown endpoint '{other}'"))),
        }
    }

    fn list_environments(&self) -> Value {
        let envs: Vec<Value> = self
            .suite
            .manifest
            .environments
            .iter()
            .map(|e| json!({ "name": e.name, "base": e.base, "variation": e.variation, "night": e.night, "split": e.split }))
            .collect();
        json!({ "environments": envs, "strict": self.config.strict })
    }

    fn task_info(&self, b: TaskInfoBody) -> Result<Value, ApiError> {
        Ok(json!({
            "task": b.task,
            "difficulty": b.difficulty,
            "actions": TaskDescriptor::actions_for(b.task, b.difficulty),
            "class_list_version": CLASS_LIST_VERSION,
            "classes": CLASS_NAMES,
            "test_variations": test_variations(b.task, b.difficulty),
            "sensors": {
                "fov_deg": 90.0,
                "detection_range": 8.0,
                "laser_beams": LASER_BEAMS,
                "laser_resolution_deg": LASER_RESOLUTION_DEG,
                "laser_max_range": LASER_MAX_RANGE,
            },
        }))
    }

    fn world_config(&self, difficulty: Difficulty, scene: &Scene, seed: u64, scene_index: usize) -> WorldConfig {
        let mut cfg = WorldConfig::new(difficulty.control(), difficulty.localization());
        cfg.noise = self.config.noise;
        cfg.noise.rng_seed = derive_seed(seed, &format!("motion-{scene_index}"));
        cfg.detection = if scene.night { self.config.detection.scaled(self.config.night_detection_multiplier) } else { self.config.detection };
        cfg.detection.rng_seed = derive_seed(seed, &format!("detection-{scene_index}"));
        cfg.passive_seed = derive_seed(seed, &format!("passive-{scene_index}"));
        cfg
    }

    fn start_episode(&self, b: StartBody) -> Result<Value, ApiError> {
        let entries = b
            .environments
            .iter()
            .map(|n| self.suite.entry(n).ok_or_else(|| ApiError::new(ErrorCode::UnknownEnvironment, format!("unknown environment '{n}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        let expected = if b.task == TaskKind::Scd { 2 } else { 1 };
        if entries.len() != expected {
            return Err(ApiError::new(
                ErrorCode::MalformedRequest,
                format!("{} needs {expected} environment(s), got {}", b.task, entries.len()),
            ));
        }
        if entries.iter().any(|e| e.base != entries[0].base) {
            return Err(ApiError::new(ErrorCode::MalformedRequest, "SCD environments must share a base"));
        }
        if self.config.strict {
            let variations: Vec<u8> = entries.iter().map(|e| e.variation).collect();
            let split = if entries.iter().any(|e| e.split == Split::Test) { Split::Test } else { Split::Dev };
            if !matrix_allows(b.task, b.difficulty, split, &variations) {
                return Err(ApiError::new(
                    ErrorCode::MatrixViolation,
                    format!("({}, {}, {}) is not in the test matrix", b.task, b.difficulty, b.environments.join("/")),
                ));
            }
        }
        let scenes: Vec<Arc<Scene>> = b.environments.iter().map(|n| Arc::clone(&self.scenes[n])).collect();
        let key = format!("{}/{}/{}", b.task, b.difficulty, b.environments.join("+"));
        let seed = b.seed.unwrap_or_else(|| derive_seed(self.config.seed, &key));
        let gt = match b.task {
            TaskKind::SemanticSlam => scenes[0].ground_truth(),
            TaskKind::Scd => diff_to_gt_scd(&scenes[0].ground_truth(), &scenes[1].ground_truth()).map_err(map_error)?,
        };
        let mut world = World::new(Arc::clone(&scenes[0]), self.world_config(b.difficulty, &scenes[0], seed, 1)).map_err(sim_error)?;
        let observation = world.observe();
        let descriptor = TaskDescriptor {
            task: b.task,
            difficulty: b.difficulty,
            environments: b.environments.clone(),
            actions: TaskDescriptor::actions_for(b.task, b.difficulty),
            class_list_version: CLASS_LIST_VERSION.to_string(),
        };
        let handle = format!("ep-{:04}", self.counter.fetch_add(1, Ordering::SeqCst) + 1);
        let reply = json!({
            "episode": handle,
            "descriptor": descriptor,
            "initial_pose": scenes[0].start,
            "scene": 1,
            "observation": observation,
        });
        let episode = Episode { descriptor, scenes, scene_index: 0, world, seed, gt, closed: false };
        self.episodes.lock().expect("episodes lock").insert(handle, Arc::new(Mutex::new(episode)));
        Ok(reply)
    }

    fn episode(&self, handle: &str) -> Result<Arc<Mutex<Episode>>, ApiError> {
        self.episodes
            .lock()
            .expect("episodes lock")
            .get(handle)
            .cloned()
            .ok_or_else(|| ApiError::new(ErrorCode::UnknownEpisode, format!("unknown episode '{handle}'")))
    }

    fn step(&self, b: StepBody) -> Result<Value, ApiError> {
        let ep = self.episode(&b.episode)?;
        let mut ep = ep.lock().expect("episode lock");
        if ep.closed {
            return Err(ApiError::new(ErrorCode::EpisodeClosed, "episode already submitted"));
        }
        let kind = b.action.kind;
        if !ep.descriptor.allows(kind) {
            return Err(ApiError::new(ErrorCode::ActionNotAllowed, format!("{kind:?} is not available in this episode")));
        }
        let needs_magnitude = matches!(kind, ActionKind::MoveDistance | ActionKind::Rotate);
        if needs_magnitude != b.action.magnitude.is_some() {
            return Err(ApiError::new(
                ErrorCode::MalformedRequest,
                if needs_magnitude { "magnitude is required" } else { "magnitude is not accepted" },
            ));
        }
        let obs: Observation = match kind {
            ActionKind::AdvanceScene => {
                if ep.scene_index + 1 >= ep.scenes.len() {
                    return Err(ApiError::new(ErrorCode::ActionNotAllowed, "advance_scene is available once"));
                }
                ep.scene_index += 1;
                let idx = ep.scene_index;
                let scene = Arc::clone(&ep.scenes[idx]);
                let cfg = self.world_config(ep.descriptor.difficulty, &scene, ep.seed, idx + 1);
                ep.world = World::new(scene, cfg).map_err(sim_error)?;
                ep.world.observe()
            }
            ActionKind::MoveNext => ep.world.move_next().map_err(sim_error)?,
            ActionKind::MoveDistance | ActionKind::Rotate => {
                if ep.world.step_count() >= self.config.max_active_steps {
                    return Err(ApiError::new(ErrorCode::EpisodeComplete, "action budget for this scene is spent"));
                }
                let m = b.action.magnitude.expect("checked above");
                if kind == ActionKind::MoveDistance {
                    ep.world.move_distance(m).map_err(sim_error)?
                } else {
                    ep.world.rotate(m).map_err(sim_error)?
                }
            }
        };
        Ok(json!({ "scene": ep.scene_index + 1, "observation": obs }))
    }

    fn submit(&self, b: SubmitBody) -> Result<Value, ApiError> {
        let ep = self.episode(&b.episode)?;
        let mut ep = ep.lock().expect("episode lock");
        if ep.closed {
            return Err(ApiError::new(ErrorCode::EpisodeClosed, "episode already submitted"));
        }
        let map = parse_map_value(b.map, ep.descriptor.task).map_err(map_error)?;
        let report = evaluate(&map, &ep.gt).map_err(|e| ApiError::new(ErrorCode::TaskMismatch, e.to_string()))?;
        ep.closed = true;
        let mut reply = json!({ "episode": b.episode, "accepted": true, "n_objects": map.objects.len() });
        if !self.config.strict {
            reply["report"] = serde_json::to_value(&report).expect("report serializes");
        }
        self.reports.lock().expect("reports lock").insert(b.episode, report);
        Ok(reply)
    }
}
