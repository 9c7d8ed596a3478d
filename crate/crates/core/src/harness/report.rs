use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, HarnessError, RunConfig};
use super::agents::AgentSpec;
use crate::agent_api::Difficulty;
use crate::object_map::{canonical_json, parse_gt_map, parse_map, TaskKind};
use crate::omq::{evaluate, EvalReport};

pub const SUITE_REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub key: String,
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub environments: Vec<String>,
    pub base: String,
    pub status: EpisodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
}

impl EpisodeEntry {
    pub(crate) fn completed(cell: &Cell, report: EvalReport) -> Self {
        Self::of(cell, EpisodeStatus::Completed, None, Some(report))
    }

    pub(crate) fn failed(cell: &Cell, error: String) -> Self {
        Self::of(cell, EpisodeStatus::Failed, Some(error), None)
    }

    fn of(cell: &Cell, status: EpisodeStatus, error: Option<String>, report: Option<EvalReport>) -> Self {
        let base = cell.environments[0].rsplit_once('_').map_or(cell.environments[0].as_str(), |(b, _)| b).to_string();
        Self {
            key: cell.key(),
            task: cell.task,
            difficulty: cell.difficulty,
            environments: cell.environments.clone(),
            base,
            status,
            error,
            report,
        }
    }

    /// Score used in aggregates; failed episodes count as zero.
    pub fn omq(&self) -> f64 {
        self.report.as_ref().map_or(0.0, |r| r.omq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub n_episodes: usize,
    pub n_failed: usize,
    pub mean_omq: f64,
    pub mean_avg_pairwise: f64,
    pub mean_avg_spatial_quality: f64,
    pub mean_avg_label_quality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_avg_state_quality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvBreakdown {
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub base: String,
    pub n_episodes: usize,
    pub mean_omq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub version: u32,
    pub agent: String,
    pub seed: u64,
    pub strict: bool,
    pub episodes: Vec<EpisodeEntry>,
    pub aggregates: Vec<Aggregate>,
    pub breakdown: Vec<EnvBreakdown>,
}

impl SuiteReport {
    pub(crate) fn new(config: &RunConfig, agent: &AgentSpec, episodes: Vec<EpisodeEntry>) -> Self {
        let (episodes, aggregates, breakdown) = aggregate(episodes);
        Self { version: SUITE_REPORT_VERSION, agent: agent.name(), seed: config.seed, strict: config.strict, episodes, aggregates, breakdown }
    }

    pub fn all_completed(&self) -> bool {
        self.episodes.iter().all(|e| e.status == EpisodeStatus::Completed)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Sorts episodes by key and summarizes them per (task, difficulty) and per
/// (task, difficulty, base). The result does not depend on input order.
pub fn aggregate(mut episodes: Vec<EpisodeEntry>) -> (Vec<EpisodeEntry>, Vec<Aggregate>, Vec<EnvBreakdown>) {
    episodes.sort_by(|a, b| (a.task, a.difficulty, &a.environments).cmp(&(b.task, b.difficulty, &b.environments)));
    let mut groups: BTreeMap<(TaskKind, Difficulty), Vec<&EpisodeEntry>> = BTreeMap::new();
    let mut bases: BTreeMap<(TaskKind, Difficulty, String), Vec<&EpisodeEntry>> = BTreeMap::new();
    for e in &episodes {
        groups.entry((e.task, e.difficulty)).or_default().push(e);
        bases.entry((e.task, e.difficulty, e.base.clone())).or_default().push(e);
    }
    let field = |g: &[&EpisodeEntry], f: fn(&EvalReport) -> f64| mean(g.iter().map(|e| e.report.as_ref().map_or(0.0, f)));
    let aggregates = groups
        .iter()
        .map(|(&(task, difficulty), g)| Aggregate {
            task,
            difficulty,
            n_episodes: g.len(),
            n_failed: g.iter().filter(|e| e.status == EpisodeStatus::Failed).count(),
            mean_omq: field(g, |r| r.omq),
            mean_avg_pairwise: field(g, |r| r.avg_pairwise),
            mean_avg_spatial_quality: field(g, |r| r.avg_spatial_quality),
            mean_avg_label_quality: field(g, |r| r.avg_label_quality),
            mean_avg_state_quality: (task == TaskKind::Scd).then(|| field(g, |r| r.avg_state_quality.unwrap_or(0.0))),
        })
        .collect();
    let breakdown = bases
        .iter()
        .map(|((task, difficulty, base), g)| EnvBreakdown {
            task: *task,
            difficulty: *difficulty,
            base: base.clone(),
            n_episodes: g.len(),
            mean_omq: mean(g.iter().map(|e| e.omq())),
        })
        .collect();
    (episodes, aggregates, breakdown)
}

/// Lossless machine-readable form.
pub fn report_to_bytes(report: &SuiteReport) -> Vec<u8> {
    canonical_json(&serde_json::to_value(report).expect("suite report serializes"))
}

pub fn report_from_bytes(bytes: &[u8]) -> Result<SuiteReport, HarnessError> {
    serde_json::from_slice(bytes).map_err(|e| HarnessError::Io(format!("malformed suite report: {e}")))
}

/// Human-readable table sorted by task, difficulty, environment.
pub fn render_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:<10} {:<22} {:>9} {:>9} {:>9} {:>9} {:>9} {:>5} {:>5} {:>5}  status",
        "task", "difficulty", "environment", "omq", "pairwise", "spatial", "label", "state", "tp", "fn", "fp"
    );
    for e in &report.episodes {
        let env = e.environments.join("+");
        match &e.report {
            Some(r) => {
                let state = r.avg_state_quality.map_or("-".to_string(), |s| format!("{s:.6}"));
                let _ = writeln!(
                    out,
                    "{:<14} {:<10} {:<22} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9} {:>5} {:>5} {:>5}  completed",
                    e.task.as_str(),
                    e.difficulty.as_str(),
                    env,
                    r.omq,
                    r.avg_pairwise,
                    r.avg_spatial_quality,
                    r.avg_label_quality,
                    state,
                    r.n_tp,
                    r.n_fn,
                    r.n_fp
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<14} {:<10} {:<22} {:>9.6} {:>9} {:>9} {:>9} {:>9} {:>5} {:>5} {:>5}  failed: {}",
                    e.task.as_str(),
                    e.difficulty.as_str(),
                    env,
                    0.0,
                    "-",
                    "-",
                    "-",
                    "-",
                    "-",
                    "-",
                    "-",
                    e.error.as_deref().unwrap_or("")
                );
            }
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<14} {:<10} {:>8} {:>8} {:>9}", "task", "difficulty", "episodes", "failed", "mean_omq");
    for a in &report.aggregates {
        let _ = writeln!(
            out,
            "{:<14} {:<10} {:>8} {:>8} {:>9.6}",
            a.task.as_str(),
            a.difficulty.as_str(),
            a.n_episodes,
            a.n_failed,
            a.mean_omq
        );
    }
    out
}

/// Scores a map file against a ground-truth file.
pub fn score_files(proposed: &Path, gt: &Path, task: TaskKind) -> Result<EvalReport, HarnessError> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())));
    let map = parse_map(&read(proposed)?, task)?;
    let gt = parse_gt_map(&read(gt)?, task)?;
    evaluate(&map, &gt).map_err(|e| HarnessError::Score(e.to_string()))
}
