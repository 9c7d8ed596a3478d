use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{derive_seed, generate_base, generate_variations, preset, GenError, VARIATIONS};
use crate::classes::CLASS_LIST_VERSION;
use crate::object_map::{canonical_json, serialize_gt_map};
use crate::scene::Scene;

pub const SUITE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn of_base(base: &str) -> Split {
        match base {
            "house" | "miniroom" => Split::Dev,
            _ => Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub base: String,
    pub variation: u8,
    pub night: bool,
    pub split: Split,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub scene_file: String,
    pub gt_file: String,
    pub n_objects: usize,
    pub trajectory_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub version: u32,
    pub class_list_version: String,
    pub seed: u64,
    pub environments: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub manifest: SuiteManifest,
    pub scenes: BTreeMap<String, Scene>,
}

impl Suite {
    pub fn scene(&self, name: &str) -> Option<&Scene> {
        self.scenes.get(name)
    }

    pub fn entry(&self, name: &str) -> Option<&ManifestEntry> {
        self.manifest.environments.iter().find(|e| e.name == name)
    }
}

fn build_base(seed: u64, name: &str) -> Result<Vec<(u64, Scene)>, GenError> {
    let base_seed = derive_seed(seed, name);
    let spec = preset(name, base_seed).ok_or_else(|| GenError::InvalidSpec(format!("unknown base '{name}'")))?;
    let base = generate_base(&spec)?;
    let seeds: [u64; VARIATIONS] = std::array::from_fn(|k| derive_seed(base_seed, &format!("variation-{}", k + 1)));
    let scenes = generate_variations(&base, seeds)?;
    Ok(seeds.into_iter().zip(scenes).collect())
}

/// Generates every named base with its five variations. Several bases are
/// built in parallel; output order follows `bases`.
pub fn generate_suite(seed: u64, bases: &[&str]) -> Result<Suite, GenError> {
    let results: Vec<Result<Vec<(u64, Scene)>, GenError>> = if bases.len() < 2 {
        bases.iter().map(|name| build_base(seed, name)).collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = bases.iter().map(|&name| s.spawn(move || build_base(seed, name))).collect();
            handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
        })
    };

    let mut environments = Vec::new();
    let mut scenes = BTreeMap::new();
    for r in results {
        for (vseed, scene) in r? {
            environments.push(ManifestEntry {
                name: scene.name.clone(),
                base: scene.base.clone(),
                variation: scene.variation,
                night: scene.night,
                split: Split::of_base(&scene.base),
                seed: vseed,
                scene_file: format!("scenes/{}.json", scene.name),
                gt_file: format!("gt/{}.json", scene.name),
                n_objects: scene.objects.len(),
                trajectory_len: scene.trajectory.len(),
            });
            scenes.insert(scene.name.clone(), scene);
        }
    }
    Ok(Suite {
        manifest: SuiteManifest {
            version: SUITE_FORMAT_VERSION,
            class_list_version: CLASS_LIST_VERSION.to_string(),
            seed,
            environments,
        },
        scenes,
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> GenError {
    GenError::Io(format!("{}: {e}", path.display()))
}

/// Writes the manifest, scene files and Semantic SLAM ground-truth maps.
/// Returns the manifest path.
pub fn write_suite(suite: &Suite, dir: &Path) -> Result<PathBuf, GenError> {
    for sub in ["scenes", "gt"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
    }
    for entry in &suite.manifest.environments {
        let scene = &suite.scenes[&entry.name];
        let p = dir.join(&entry.scene_file);
        fs::write(&p, scene.to_bytes()).map_err(|e| io_err(&p, e))?;
        let p = dir.join(&entry.gt_file);
        fs::write(&p, serialize_gt_map(&scene.ground_truth())).map_err(|e| io_err(&p, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let value = serde_json::to_value(&suite.manifest).expect("manifest serializes");
    fs::write(&path, canonical_json(&value)).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Loads a suite from a manifest file or a directory containing one.
pub fn load_suite(path: &Path) -> Result<Suite, GenError> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let bytes = fs::read(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: SuiteManifest = serde_json::from_slice(&bytes).map_err(|e| io_err(&manifest_path, e))?;
    if manifest.version != SUITE_FORMAT_VERSION {
        return Err(io_err(&manifest_path, format!("unsupported manifest version {}", manifest.version)));
    }
    if manifest.class_list_version != CLASS_LIST_VERSION {
        return Err(io_err(&manifest_path, format!("class list '{}' is not {CLASS_LIST_VERSION}", manifest.class_list_version)));
    }
    let mut scenes = BTreeMap::new();
    for entry in &manifest.environments {
        let p = dir.join(&entry.scene_file);
        let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
        let scene = Scene::from_bytes(&bytes).map_err(|e| io_err(&p, e))?;
        if scene.name != entry.name {
            return Err(io_err(&p, format!("scene is named '{}', manifest expects '{}'", scene.name, entry.name)));
        }
        scenes.insert(entry.name.clone(), scene);
    }
    Ok(Suite { manifest, scenes })
}
