//! Toolkit for cuboid scene-understanding benchmarks: exact object map
//! quality scoring for semantic SLAM and scene change detection, a
//! deterministic 2.5D robot simulator, procedural environment generation, a
//! turn-based episode protocol and a batch harness.

pub mod agent_api;
pub mod assignment;
pub mod classes;
pub mod envgen;
pub mod geometry;
pub mod harness;
pub mod object_map;
pub mod omq;
pub mod scene;
pub mod simworld;
