use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::json;

use super::Cell;
use crate::agent_api::{ActionRequest, Difficulty, Endpoint, ErrorCode, Server};
use crate::envgen::Suite;
use crate::geometry::{iou_3d as iou, Cuboid, Vec3};
use crate::object_map::{
    diff_to_gt_scd, map_to_value, ChangeState, LabelDistribution, ObjectMap, ProposedObject, StateDistribution, TaskKind,
};
use crate::scene::{wrap_angle, Pose, Scene};
use crate::simworld::{detection_to_global, ControlMode, Observation};

const MERGE_IOU: f64 = 0.25;
const POLL_INTERVAL: Duration = Duration::from_millis(10);

/// Who drives an episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    /// Traverses the episode and submits one-hot ground truth.
    Oracle,
    /// Submits an empty map.
    Null,
    /// Traverses the episode and fuses its detections.
    Mapper,
    /// External program run through `sh -c`, talking to the framed TCP API.
    Command(String),
}

impl AgentSpec {
    pub fn parse(s: &str) -> Self {
        match s {
            "oracle" => AgentSpec::Oracle,
            "null" => AgentSpec::Null,
            "mapper" => AgentSpec::Mapper,
            other => AgentSpec::Command(other.to_string()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            AgentSpec::Oracle => "oracle".into(),
            AgentSpec::Null => "null".into(),
            AgentSpec::Mapper => "mapper".into(),
            AgentSpec::Command(c) => c.clone(),
        }
    }

    /// Drives one cell to submission and returns its episode handle.
    pub(crate) fn run(
        &self,
        server: &Server,
        suite: &Suite,
        cell: &Cell,
        seed: u64,
        deadline: Instant,
        address: Option<&str>,
    ) -> Result<String, String> {
        let start = server
            .call(
                Endpoint::StartEpisode,
                json!({ "task": cell.task, "difficulty": cell.difficulty, "environments": cell.environments, "seed": seed }),
            )
            .map_err(|e| e.to_string())?;
        let episode = start["episode"].as_str().ok_or("start_episode reply lacks a handle")?.to_string();
        let first: Observation = serde_json::from_value(start["observation"].clone()).map_err(|e| e.to_string())?;
        let run = InProcess { server, episode: &episode, deadline };
        match self {
            AgentSpec::Null => run.submit(&ObjectMap::new(cell.task, &cell.environments[0]))?,
            AgentSpec::Oracle => {
                let scenes = scenes_of(suite, cell)?;
                run.traverse_all(cell, &scenes, first, |_| {})?;
                let gt = match cell.task {
                    TaskKind::SemanticSlam => scenes[0].ground_truth(),
                    TaskKind::Scd => diff_to_gt_scd(&scenes[0].ground_truth(), &scenes[1].ground_truth())
                        .map_err(|e| e.to_string())?,
                };
                run.submit(&ObjectMap::one_hot_from(&gt))?;
            }
            AgentSpec::Mapper => {
                let scenes = scenes_of(suite, cell)?;
                let mut fusers = vec![Fuser::default(); scenes.len()];
                run.traverse_all(cell, &scenes, first, |(i, obs)| fusers[i].add(obs))?;
                let map = match cell.task {
                    TaskKind::SemanticSlam => fusers[0].slam_map(&cell.environments[0]),
                    TaskKind::Scd => change_map(&fusers[0], &fusers[1], &cell.environments[0]),
                };
                run.submit(&map)?;
            }
            AgentSpec::Command(cmd) => {
                let address = address.ok_or("no agent listener")?;
                run_command(cmd, address, &episode, cell, deadline)?;
            }
        }
        Ok(episode)
    }
}

fn scenes_of<'a>(suite: &'a Suite, cell: &Cell) -> Result<Vec<&'a Scene>, String> {
    cell.environments
        .iter()
        .map(|n| suite.scene(n).ok_or_else(|| format!("unknown environment '{n}'")))
        .collect()
}

fn run_command(cmd: &str, address: &str, episode: &str, cell: &Cell, deadline: Instant) -> Result<(), String> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .env("OMQKIT_ADDR", address)
        .env("OMQKIT_EPISODE", episode)
        .env("OMQKIT_TASK", cell.task.as_str())
        .env("OMQKIT_DIFFICULTY", cell.difficulty.as_str())
        .env("OMQKIT_ENVIRONMENTS", cell.environments.join(","))
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .spawn()
        .map_err(|e| format!("cannot start agent: {e}"))?;
    loop {
        match child.try_wait().map_err(|e| e.to_string())? {
            Some(status) if status.success() => return Ok(()),
            Some(status) => return Err(format!("agent exited with {status}")),
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err("agent timed out".into());
            }
            None => std::thread::sleep(POLL_INTERVAL),
        }
    }
}

struct InProcess<'a> {
    server: &'a Server,
    episode: &'a str,
    deadline: Instant,
}

impl InProcess<'_> {
    fn step(&self, action: ActionRequest) -> Result<Option<Observation>, String> {
        if Instant::now() >= self.deadline {
            return Err("agent timed out".into());
        }
        match self.server.call(Endpoint::Step, json!({ "episode": self.episode, "action": action })) {
            Ok(v) => serde_json::from_value(v["observation"].clone()).map(Some).map_err(|e| e.to_string()),
            Err(e) if e.code == ErrorCode::EpisodeComplete => Ok(None),
            Err(e) => Err(e.to_string()),
        }
    }

    fn submit(&self, map: &ObjectMap) -> Result<(), String> {
        self.server
            .call(Endpoint::Submit, json!({ "episode": self.episode, "map": map_to_value(map) }))
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    /// Follows every scene's trajectory, handing each observation and its
    /// scene index to `sink`.
    fn traverse_all(
        &self,
        cell: &Cell,
        scenes: &[&Scene],
        first: Observation,
        mut sink: impl FnMut((usize, &Observation)),
    ) -> Result<(), String> {
        let mut obs = first;
        for (i, scene) in scenes.iter().enumerate() {
            if i > 0 {
                obs = self.step(ActionRequest::advance_scene())?.ok_or("advance_scene refused")?;
            }
            sink((i, &obs));
            self.traverse(cell.difficulty, scene, obs.clone(), |o| sink((i, o)))?;
        }
        Ok(())
    }

    fn traverse(
        &self,
        difficulty: Difficulty,
        scene: &Scene,
        first: Observation,
        mut sink: impl FnMut(&Observation),
    ) -> Result<(), String> {
        if difficulty.control() == ControlMode::Passive {
            while let Some(obs) = self.step(ActionRequest::move_next())? {
                sink(&obs);
            }
            return Ok(());
        }
        let mut pose = first.reported_pose;
        let mut act = |a: ActionRequest, pose: &mut Pose| -> Result<(), String> {
            let obs = self.step(a)?.ok_or("action budget spent")?;
            *pose = obs.reported_pose;
            sink(&obs);
            Ok(())
        };
        for node in scene.trajectory.iter().skip(1) {
            let (dx, dy) = (node.x - pose.x, node.y - pose.y);
            let dist = dx.hypot(dy);
            if dist > 1e-6 {
                let turn = wrap_angle(dy.atan2(dx) - pose.theta);
                if turn.abs() > 1e-9 {
                    act(ActionRequest::rotate(turn.to_degrees()), &mut pose)?;
                }
                act(ActionRequest::move_distance(dist), &mut pose)?;
            }
            let turn = wrap_angle(node.theta - pose.theta);
            if turn.abs() > 1e-9 {
                act(ActionRequest::rotate(turn.to_degrees()), &mut pose)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Track {
    center: Vec3,
    extent: Vec3,
    probs: [f64; crate::classes::NUM_CLASSES],
    hits: usize,
}

impl Track {
    fn cuboid(&self) -> Cuboid {
        let n = self.hits as f64;
        let mean = |v: Vec3| Vec3::new(v.x / n, v.y / n, v.z / n);
        Cuboid::new(mean(self.center), mean(self.extent)).expect("mean of valid cuboids")
    }

    fn label(&self) -> LabelDistribution {
        let n = self.hits as f64;
        let mut p = self.probs;
        p.iter_mut().for_each(|v| *v /= n);
        let total: f64 = p.iter().sum();
        if total > 1.0 {
            p.iter_mut().for_each(|v| *v /= total);
        }
        LabelDistribution::new(p).unwrap_or_else(|_| LabelDistribution::uniform())
    }

    fn class(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.probs.iter().enumerate() {
            if *v > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Greedy per-class fusion of global detections.
#[derive(Debug, Clone, Default)]
struct Fuser {
    tracks: Vec<Track>,
}

impl Fuser {
    fn add(&mut self, obs: &Observation) {
        for det in &obs.detections {
            let c = detection_to_global(det, &obs.reported_pose);
            let class = det.label.argmax().map(|c| c.index());
            let best = self
                .tracks
                .iter_mut()
                .filter(|t| Some(t.class()) == class)
                .map(|t| (iou(&t.cuboid(), &c), t))
                .filter(|(v, _)| *v >= MERGE_IOU)
                .max_by(|a, b| a.0.total_cmp(&b.0));
            match best {
                Some((_, t)) => {
                    t.center = t.center + c.center();
                    t.extent = t.extent + c.extent();
                    t.probs.iter_mut().zip(det.label.probs()).for_each(|(a, b)| *a += b);
                    t.hits += 1;
                }
                None => self.tracks.push(Track { center: c.center(), extent: c.extent(), probs: *det.label.probs(), hits: 1 }),
            }
        }
    }

    fn slam_map(&self, environment: &str) -> ObjectMap {
        let mut map = ObjectMap::new(TaskKind::SemanticSlam, environment);
        map.metadata.agent = Some("mapper".into());
        map.objects = self
            .tracks
            .iter()
            .map(|t| ProposedObject { cuboid: t.cuboid(), label: t.label(), state: None })
            .collect();
        map
    }
}

fn change_map(before: &Fuser, after: &Fuser, environment: &str) -> ObjectMap {
    let matched = |t: &Track, others: &Fuser| {
        others.tracks.iter().any(|o| o.class() == t.class() && iou(&o.cuboid(), &t.cuboid()) >= MERGE_IOU)
    };
    let mut map = ObjectMap::new(TaskKind::Scd, environment);
    map.metadata.agent = Some("mapper".into());
    for (tracks, others, state) in [(before, after, ChangeState::Removed), (after, before, ChangeState::Added)] {
        for t in tracks.tracks.iter().filter(|t| !matched(t, others)) {
            map.objects.push(ProposedObject {
                cuboid: t.cuboid(),
                label: t.label(),
                state: Some(StateDistribution::one_hot(state)),
            });
        }
    }
    map
}
