//! Batch runs over the task x difficulty x environment matrix.

mod agents;
mod report;

pub use agents::AgentSpec;
pub use report::{
    aggregate, render_table, report_from_bytes, report_to_bytes, score_files, Aggregate, EnvBreakdown, EpisodeEntry,
    EpisodeStatus, SuiteReport, SUITE_REPORT_VERSION,
};

use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_api::{serve_until, suite_cells, Difficulty, Server, ServerConfig};
use crate::envgen::{derive_seed, Split, Suite};
use crate::object_map::{MapError, TaskKind};
use crate::simworld::{DetectionNoise, NoiseModel};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    ConfigInvalid(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("scoring failed: {0}")]
    Score(String),
}

/// Which environments a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Checked test-matrix cells of the test bases.
    Test,
    /// Every variation (semantic SLAM) and consecutive pair (SCD) of the
    /// development bases.
    Dev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    Noiseless,
    Drift,
}

impl NoisePreset {
    pub fn model(self) -> NoiseModel {
        match self {
            NoisePreset::Noiseless => NoiseModel::noiseless(),
            NoisePreset::Drift => NoiseModel::default_drift(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionPreset {
    Noiseless,
    Typical,
}

impl DetectionPreset {
    pub fn model(self) -> DetectionNoise {
        match self {
            DetectionPreset::Noiseless => DetectionNoise::noiseless(),
            DetectionPreset::Typical => DetectionNoise {
                center_sigma: 0.05,
                extent_sigma: 0.03,
                label_correct_mass: 0.85,
                miss_rate: 0.1,
                rng_seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tasks: Vec<TaskKind>,
    pub difficulties: Vec<Difficulty>,
    pub selection: Selection,
    /// Restricts the run to these bases when set.
    pub bases: Option<Vec<String>>,
    pub seed: u64,
    pub noise: NoisePreset,
    pub detection: DetectionPreset,
    pub strict: bool,
    pub parallelism: usize,
    pub timeout: Duration,
}

impl RunConfig {
    pub fn new(selection: Selection) -> Self {
        Self {
            tasks: vec![TaskKind::SemanticSlam, TaskKind::Scd],
            difficulties: Difficulty::ALL.to_vec(),
            selection,
            bases: None,
            seed: 0,
            noise: NoisePreset::Noiseless,
            detection: DetectionPreset::Noiseless,
            strict: selection == Selection::Test,
            parallelism: 1,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            strict: self.strict,
            seed: self.seed,
            noise: self.noise.model(),
            detection: self.detection.model(),
            ..ServerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub environments: Vec<String>,
}

impl Cell {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.task, self.difficulty, self.environments.join("+"))
    }
}

/// Cells selected by `config`, sorted by task, difficulty, environment.
pub fn plan_cells(suite: &Suite, config: &RunConfig) -> Result<Vec<Cell>, HarnessError> {
    if config.tasks.is_empty() || config.difficulties.is_empty() {
        return Err(HarnessError::ConfigInvalid("select at least one task and one difficulty".into()));
    }
    if config.parallelism == 0 {
        return Err(HarnessError::ConfigInvalid("parallelism must be at least 1".into()));
    }
    let split = match config.selection {
        Selection::Test => Split::Test,
        Selection::Dev => Split::Dev,
    };
    let mut bases: Vec<String> = Vec::new();
    for e in &suite.manifest.environments {
        if e.split == split && !bases.contains(&e.base) {
            bases.push(e.base.clone());
        }
    }
    if let Some(wanted) = &config.bases {
        for b in wanted {
            if !bases.contains(b) {
                return Err(HarnessError::ConfigInvalid(format!("base '{b}' is not a {split:?} base of this suite")));
            }
        }
        bases.retain(|b| wanted.contains(b));
    }
    let mut cells = Vec::new();
    for base in &bases {
        for &task in &config.tasks {
            for &difficulty in &config.difficulties {
                let groups: Vec<Vec<u8>> = match config.selection {
                    Selection::Test => suite_cells(task, difficulty),
                    Selection::Dev => match task {
                        TaskKind::SemanticSlam => (1..=5).map(|v| vec![v]).collect(),
                        TaskKind::Scd => (1..5).map(|v| vec![v, v + 1]).collect(),
                    },
                };
                for g in groups {
                    let environments: Vec<String> = g.iter().map(|v| format!("{base}_{v}")).collect();
                    if let Some(missing) = environments.iter().find(|n| suite.entry(n).is_none()) {
                        return Err(HarnessError::ConfigInvalid(format!("suite lacks environment '{missing}'")));
                    }
                    cells.push(Cell { task, difficulty, environments });
                }
            }
        }
    }
    cells.sort();
    Ok(cells)
}

/// Runs every selected cell once. Cell failures are recorded in the
/// report; only configuration problems abort the run.
pub fn run_suite(suite: Arc<Suite>, config: &RunConfig, agent: &AgentSpec) -> Result<SuiteReport, HarnessError> {
    let cells = plan_cells(&suite, config)?;
    let server = Arc::new(Server::new(Arc::clone(&suite), config.server_config()));

    let stop = Arc::new(AtomicBool::new(false));
    let mut listener_thread = None;
    let mut address = None;
    if matches!(agent, AgentSpec::Command(_)) {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| HarnessError::Io(e.to_string()))?;
        address = Some(listener.local_addr().map_err(|e| HarnessError::Io(e.to_string()))?.to_string());
        let (server, stop) = (Arc::clone(&server), Arc::clone(&stop));
        listener_thread = Some(std::thread::spawn(move || serve_until(server, listener, stop)));
    }

    let results: Vec<Mutex<Option<EpisodeEntry>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..config.parallelism.min(cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                let seed = derive_seed(config.seed, &cell.key());
                let deadline = Instant::now() + config.timeout;
                let outcome = agent.run(&server, &suite, cell, seed, deadline, address.as_deref());
                let entry = match outcome.and_then(|ep| server.report(&ep).ok_or_else(|| "agent did not submit a map".to_string())) {
                    Ok(report) => EpisodeEntry::completed(cell, report),
                    Err(msg) => EpisodeEntry::failed(cell, msg),
                };
                *results[i].lock().expect("result slot") = Some(entry);
            });
        }
    });
    stop.store(true, Ordering::SeqCst);
    if let Some(t) = listener_thread {
        t.join().expect("listener thread").map_err(|e| HarnessError::Io(e.to_string()))?;
    }

    let episodes: Vec<EpisodeEntry> =
        results.into_iter().map(|m| m.into_inner().expect("result slot").expect("every cell ran")).collect();
    Ok(SuiteReport::new(config, agent, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::generate_suite;

    fn mini_suite() -> Suite {
        generate_suite(3, &["miniroom"]).unwrap()
    }

    #[test]
    fn dev_cells_for_one_base() {
        let suite = mini_suite();
        let cells = plan_cells(&suite, &RunConfig::new(Selection::Dev)).unwrap();
        // 5 single variations plus 4 pairs, for each of three difficulties.
        assert_eq!(cells.len(), (5 + 4) * 3);
        let mut sorted = cells.clone();
        sorted.sort();
        assert_eq!(cells, sorted);
        assert_eq!(cells[0].key(), "semantic_slam/passive_gt/miniroom_1");
    }

    #[test]
    fn invalid_configs() {
        let suite = mini_suite();
        let mut cfg = RunConfig::new(Selection::Dev);
        cfg.tasks.clear();
        assert!(matches!(plan_cells(&suite, &cfg), Err(HarnessError::ConfigInvalid(_))));
        let mut cfg = RunConfig::new(Selection::Dev);
        cfg.bases = Some(vec!["office".into()]);
        assert!(matches!(plan_cells(&suite, &cfg), Err(HarnessError::ConfigInvalid(_))));
        let mut cfg = RunConfig::new(Selection::Dev);
        cfg.parallelism = 0;
        assert!(plan_cells(&suite, &cfg).is_err());
    }

    #[test]
    fn test_selection_without_test_bases_is_empty() {
        let suite = mini_suite();
        assert!(plan_cells(&suite, &RunConfig::new(Selection::Test)).unwrap().is_empty());
    }

    #[test]
    fn builtin_agents_on_miniroom() {
        let suite = Arc::new(mini_suite());
        let mut cfg = RunConfig::new(Selection::Dev);
        cfg.parallelism = 4;
        let oracle = run_suite(Arc::clone(&suite), &cfg, &AgentSpec::Oracle).unwrap();
        assert!(oracle.all_completed(), "{}", render_table(&oracle));
        for a in &oracle.aggregates {
            assert!((a.mean_omq - 1.0).abs() < 1e-9, "{a:?}");
        }
        let null = run_suite(Arc::clone(&suite), &cfg, &AgentSpec::Null).unwrap();
        assert!(null.aggregates.iter().all(|a| a.mean_omq == 0.0));
        let mapper = run_suite(suite, &cfg, &AgentSpec::Mapper).unwrap();
        assert!(mapper.all_completed(), "{}", render_table(&mapper));
        eprintln!("{}", render_table(&mapper));
    }
}
