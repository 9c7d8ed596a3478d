//! Turn-based episode protocol.
//!
//! Every message is a JSON document `{"version", "endpoint", "body"}`;
//! replies are `{"version", "status": "ok", "body"}` or
//! `{"version", "status": "error", "error": {"code", "message"}}`. Over TCP
//! each message is preceded by its length as a 4-byte big-endian integer.
//!
//! | endpoint            | body                                             |
//! |---------------------|--------------------------------------------------|
//! | `list_environments` | `{}`                                             |
//! | `task_info`         | `{"task", "difficulty"}`                         |
//! | `start_episode`     | `{"task", "difficulty", "environments", "seed"?}`|
//! | `step`              | `{"episode", "action": {"kind", "magnitude"?}}`  |
//! | `submit`            | `{"episode", "map"}`                             |
//!
//! ```
//! use omqkit::agent_api::{Request, Endpoint};
//! let req = Request::new(Endpoint::ListEnvironments, serde_json::json!({}));
//! let text = String::from_utf8(req.to_bytes()).unwrap();
//! assert!(text.contains("\"endpoint\": \"list_environments\""));
//! ```

mod matrix;
mod server;
mod wire;

pub use matrix::{matrix_allows, suite_cells, test_variations};
pub use server::{Server, ServerConfig};
pub use wire::{read_frame, serve, serve_until, write_frame, Client, ClientError, MAX_FRAME_BYTES};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::object_map::{canonical_json, TaskKind};
use crate::simworld::{ControlMode, Localization};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    PassiveGt,
    ActiveGt,
    ActiveDr,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::PassiveGt, Difficulty::ActiveGt, Difficulty::ActiveDr];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::PassiveGt => "passive_gt",
            Difficulty::ActiveGt => "active_gt",
            Difficulty::ActiveDr => "active_dr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }

    pub fn control(self) -> ControlMode {
        match self {
            Difficulty::PassiveGt => ControlMode::Passive,
            _ => ControlMode::Active,
        }
    }

    pub fn localization(self) -> Localization {
        match self {
            Difficulty::ActiveDr => Localization::DeadReckoning,
            _ => Localization::GroundTruth,
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    MoveNext,
    MoveDistance,
    Rotate,
    AdvanceScene,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub kind: ActionKind,
    /// Meters for `move_distance`, degrees for `rotate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

impl ActionRequest {
    pub fn move_next() -> Self {
        Self { kind: ActionKind::MoveNext, magnitude: None }
    }

    pub fn move_distance(m: f64) -> Self {
        Self { kind: ActionKind::MoveDistance, magnitude: Some(m) }
    }

    pub fn rotate(deg: f64) -> Self {
        Self { kind: ActionKind::Rotate, magnitude: Some(deg) }
    }

    pub fn advance_scene() -> Self {
        Self { kind: ActionKind::AdvanceScene, magnitude: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub task: TaskKind,
    pub difficulty: Difficulty,
    /// One environment for semantic SLAM, two (scene 1 then scene 2) for SCD.
    pub environments: Vec<String>,
    pub actions: Vec<ActionKind>,
    pub class_list_version: String,
}

impl TaskDescriptor {
    pub fn actions_for(task: TaskKind, difficulty: Difficulty) -> Vec<ActionKind> {
        let mut actions = match difficulty.control() {
            ControlMode::Passive => vec![ActionKind::MoveNext],
            ControlMode::Active => vec![ActionKind::MoveDistance, ActionKind::Rotate],
        };
        if task == TaskKind::Scd {
            actions.push(ActionKind::AdvanceScene);
        }
        actions
    }

    pub fn allows(&self, kind: ActionKind) -> bool {
        self.actions.contains(&kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    ListEnvironments,
    TaskInfo,
    StartEpisode,
    Step,
    Submit,
}

impl Endpoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Endpoint::ListEnvironments => "list_environments",
            Endpoint::TaskInfo => "task_info",
            Endpoint::StartEpisode => "start_episode",
            Endpoint::Step => "step",
            Endpoint::Submit => "submit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub endpoint: Endpoint,
    pub body: Value,
}

impl Request {
    pub fn new(endpoint: Endpoint, body: Value) -> Self {
        Self { endpoint, body }
    }

    pub fn to_value(&self) -> Value {
        serde_json::json!({ "version": PROTOCOL_VERSION, "endpoint": self.endpoint.as_str(), "body": self.body })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        canonical_json(&self.to_value())
    }
}

/// Protocol error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    MalformedRequest,
    UnsupportedVersion,
    UnknownEndpoint,
    UnknownEnvironment,
    UnknownEpisode,
    MatrixViolation,
    ActionNotAllowed,
    InvalidMagnitude,
    EpisodeComplete,
    EpisodeClosed,
    MalformedDocument,
    TaskMismatch,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

pub(crate) fn ok_response(body: Value) -> Value {
    serde_json::json!({ "version": PROTOCOL_VERSION, "status": "ok", "body": body })
}

pub(crate) fn error_response(err: &ApiError) -> Value {
    serde_json::json!({
        "version": PROTOCOL_VERSION,
        "status": "error",
        "error": { "code": err.code, "message": err.message },
    })
}

/// Splits a response document into its body or its error.
pub fn parse_response(bytes: &[u8]) -> Result<Value, ApiError> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| ApiError::new(ErrorCode::MalformedRequest, e.to_string()))?;
    match v.get("status").and_then(Value::as_str) {
        Some("ok") => Ok(v.get("body").cloned().unwrap_or(Value::Null)),
        Some("error") => {
            let err = v.get("error").cloned().unwrap_or(Value::Null);
            Err(serde_json::from_value(err).map_err(|e| ApiError::new(ErrorCode::MalformedRequest, e.to_string()))?)
        }
        _ => Err(ApiError::new(ErrorCode::MalformedRequest, "response lacks a status")),
    }
}
