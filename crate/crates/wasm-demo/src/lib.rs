//! WebAssembly bindings behind `www/index.html`. Every entry point takes and
//! returns JSON text so the page needs no generated type glue.

use std::sync::Arc;

use omqkit::envgen::generate_suite;
use omqkit::geometry::{intersection_volume, iou_3d, volume, Cuboid};
use omqkit::object_map::{canonical_json, parse_gt_map, parse_map, TaskKind};
use omqkit::omq::{evaluate, render_report};
use omqkit::scene::{Pose, Scene};
use omqkit::simworld::{ControlMode, Localization, World, WorldConfig, LASER_BEAMS, LASER_RESOLUTION_DEG};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn cuboid(text: &str) -> Result<Cuboid, String> {
    serde_json::from_str(text).map_err(|e| format!("cuboid: {e}"))
}

/// IoU and volumes of two cuboids given as `{"center": [..], "extent": [..]}`.
pub fn iou_json(a: &str, b: &str) -> Result<String, String> {
    let (a, b) = (cuboid(a)?, cuboid(b)?);
    let v = json!({
        "iou": iou_3d(&a, &b),
        "intersection": intersection_volume(&a, &b),
        "volume_a": volume(&a),
        "volume_b": volume(&b),
    });
    Ok(String::from_utf8(canonical_json(&v)).expect("utf-8"))
}

/// Scores a map document against a ground-truth document.
pub fn score_json(map: &str, gt: &str, task: &str) -> Result<String, String> {
    let task = TaskKind::parse(task).ok_or_else(|| format!("unknown task '{task}'"))?;
    let map = parse_map(map.as_bytes(), task).map_err(|e| e.to_string())?;
    let gt = parse_gt_map(gt.as_bytes(), task).map_err(|e| e.to_string())?;
    let report = evaluate(&map, &gt).map_err(|e| e.to_string())?;
    Ok(String::from_utf8(render_report(&report, &gt)).expect("utf-8"))
}

/// One generated environment with a laser at an arbitrary pose.
#[wasm_bindgen]
pub struct SceneViewer {
    world: World,
}

impl SceneViewer {
    pub fn create(base: &str, seed: u32, variation: u8) -> Result<SceneViewer, String> {
        let suite = generate_suite(seed as u64, &[base]).map_err(|e| e.to_string())?;
        let scene: Scene = suite.scene(&format!("{base}_{variation}")).ok_or("variation must be 1 to 5")?.clone();
        let world = World::new(Arc::new(scene), WorldConfig::new(ControlMode::Passive, Localization::GroundTruth))
            .map_err(|e| e.to_string())?;
        Ok(SceneViewer { world })
    }
}

#[wasm_bindgen]
impl SceneViewer {
    #[wasm_bindgen(constructor)]
    pub fn new(base: &str, seed: u32, variation: u8) -> Result<SceneViewer, JsValue> {
        Self::create(base, seed, variation).map_err(|e| JsValue::from_str(&e))
    }

    /// The scene document.
    pub fn scene(&self) -> String {
        String::from_utf8(self.world.scene().to_bytes()).expect("utf-8")
    }

    /// Laser ranges from `(x, y)` facing `theta` radians. Beam 0 points along
    /// `theta` and later beams sweep counterclockwise.
    pub fn laser(&self, x: f64, y: f64, theta: f64) -> Vec<f64> {
        self.world.laser_scan(&Pose::new(x, y, theta))
    }

    pub fn beams(&self) -> usize {
        LASER_BEAMS
    }

    pub fn resolution_deg(&self) -> f64 {
        LASER_RESOLUTION_DEG
    }

    /// Clearance from the nearest obstacle at `(x, y)`.
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        self.world.scene().clearance(omqkit::geometry::plane::Point2::new(x, y))
    }
}

#[wasm_bindgen]
pub fn iou(a: &str, b: &str) -> Result<String, JsValue> {
    iou_json(a, b).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn score(map: &str, gt: &str, task: &str) -> Result<String, JsValue> {
    score_json(map, gt, task).map_err(|e| JsValue::from_str(&e))
}
