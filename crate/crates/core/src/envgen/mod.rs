//! Procedural environments, their variations, and passive trajectories.
//!
//! A base environment is a rectilinear floor plan holding a pool of object
//! instances placed without interpenetration. Each of the five variations
//! shows a subset of the pool; membership is chosen so that any two
//! variations differ by between [`MIN_CHANGES`] and [`MAX_CHANGES`] objects
//! and so that per-class counts summed over the variations hit the
//! configured totals exactly.

mod layout;
mod suite;
mod trajectory;
mod variations;

pub use layout::{check_interpenetration, generate_base, BaseEnvironment, FloorPlan, PoolObject};
pub use suite::{generate_suite, load_suite, write_suite, ManifestEntry, Split, Suite, SuiteManifest, SUITE_FORMAT_VERSION};
pub use trajectory::{coverage, generate_trajectory, TrajectoryParams};
pub use variations::{change_count, generate_variations, generate_variations_with, variation_specs, VariationSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::{ClassId, NUM_CLASSES};

pub const VARIATIONS: usize = 5;
pub const MIN_CHANGES: usize = 8;
pub const MAX_CHANGES: usize = 27;
pub const MIN_TRAJECTORY_LEN: usize = 33;
pub const MAX_TRAJECTORY_LEN: usize = 484;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("could not place {class} objects in '{env}' after bounded retries")]
    PlacementInfeasible { env: String, class: String },
    #[error("no variation membership for '{0}' satisfies the change budget")]
    ChangeBudgetInfeasible(String),
    #[error("trajectory for '{env}' cannot meet its constraints: {reason}")]
    CoverageInfeasible { env: String, reason: String },
    #[error("trajectory length {0} outside [{MIN_TRAJECTORY_LEN}, {MAX_TRAJECTORY_LEN}]")]
    InvalidTarget(usize),
    #[error("suite I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub size_class: SizeClass,
    pub rooms_x: usize,
    pub rooms_y: usize,
    pub room_width: f64,
    pub room_depth: f64,
    /// Instances per class summed over all five variations.
    pub class_totals: [u32; NUM_CLASSES],
    /// Trajectory length for each variation.
    pub trajectory_lengths: [usize; VARIATIONS],
    pub seed: u64,
}

impl EnvSpec {
    pub fn room_count(&self) -> usize {
        self.rooms_x * self.rooms_y
    }

    pub fn total(&self, class: ClassId) -> u32 {
        self.class_totals[class.index()]
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.name.is_empty() || self.name.contains(|c: char| !(c.is_ascii_alphanumeric() || c == '-')) {
            return Err(GenError::InvalidSpec(format!("bad base name '{}'", self.name)));
        }
        if self.rooms_x == 0 || self.rooms_y == 0 {
            return Err(GenError::InvalidSpec("need at least one room".into()));
        }
        if !(self.room_width >= 3.0 && self.room_depth >= 3.0) || !(self.room_width <= 12.0 && self.room_depth <= 12.0) {
            return Err(GenError::InvalidSpec("rooms must be between 3 m and 12 m on each side".into()));
        }
        for &len in &self.trajectory_lengths {
            if !(MIN_TRAJECTORY_LEN..=MAX_TRAJECTORY_LEN).contains(&len) {
                return Err(GenError::InvalidTarget(len));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Base names in suite order.
pub const PRESET_NAMES: [&str; 5] = ["house", "miniroom", "apartment", "company", "office"];

// Column order follows CLASS_NAMES.
const TOTALS_MINIROOM: [u32; NUM_CLASSES] = [7, 3, 4, 3, 1, 4, 3, 0, 9, 0, 0, 1, 13, 3, 10, 15, 0, 5, 0, 0, 0, 2, 0, 4, 2];
const TOTALS_HOUSE: [u32; NUM_CLASSES] = [15, 25, 42, 0, 0, 0, 1, 0, 32, 5, 5, 6, 25, 4, 47, 21, 11, 5, 14, 10, 0, 2, 3, 5, 2];
const TOTALS_APARTMENT: [u32; NUM_CLASSES] = [14, 17, 7, 0, 4, 10, 1, 0, 29, 0, 0, 3, 16, 5, 27, 25, 20, 0, 0, 3, 2, 4, 2, 10, 6];
const TOTALS_COMPANY: [u32; NUM_CLASSES] = [1, 21, 12, 0, 0, 10, 5, 3, 47, 36, 36, 5, 18, 10, 183, 57, 5, 0, 0, 39, 0, 0, 4, 0, 11];
const TOTALS_OFFICE: [u32; NUM_CLASSES] = [0, 2, 0, 0, 0, 0, 3, 0, 19, 40, 40, 2, 112, 0, 86, 20, 0, 0, 0, 39, 0, 0, 3, 0, 0];

/// Built-in base environment specs. Class totals reproduce the published
/// per-environment instance distribution.
pub fn preset(name: &str, seed: u64) -> Option<EnvSpec> {
    let (size_class, rooms_x, rooms_y, w, d, totals, lo, hi) = match name {
        "house" => (SizeClass::Large, 3, 3, 7.0, 6.0, TOTALS_HOUSE, 300, 484),
        "miniroom" => (SizeClass::Small, 1, 1, 9.0, 8.0, TOTALS_MINIROOM, 33, 64),
        "apartment" => (SizeClass::Medium, 3, 2, 7.0, 6.0, TOTALS_APARTMENT, 160, 260),
        "company" => (SizeClass::Large, 4, 3, 8.0, 7.0, TOTALS_COMPANY, 280, 420),
        "office" => (SizeClass::Medium, 3, 2, 8.0, 7.0, TOTALS_OFFICE, 140, 220),
        _ => return None,
    };
    let trajectory_lengths = std::array::from_fn(|k| lo + (hi - lo) * k / (VARIATIONS - 1));
    Some(EnvSpec {
        name: name.to_string(),
        size_class,
        rooms_x,
        rooms_y,
        room_width: w,
        room_depth: d,
        class_totals: totals,
        trajectory_lengths,
        seed,
    })
}

/// Variations 3 and 5 are night scenes.
pub fn is_night(variation: u8) -> bool {
    variation == 3 || variation == 5
}

/// 64-bit FNV-1a, used to derive stable sub-seeds from names.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(tag.as_bytes());
    fnv1a(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_span_lengths() {
        let mut lens = vec![];
        for name in PRESET_NAMES {
            let spec = preset(name, 1).unwrap();
            spec.validate().unwrap();
            lens.extend(spec.trajectory_lengths);
        }
        assert_eq!(*lens.iter().min().unwrap(), MIN_TRAJECTORY_LEN);
        assert_eq!(*lens.iter().max().unwrap(), MAX_TRAJECTORY_LEN);
        assert!(preset("garage", 1).is_none());
    }

    #[test]
    fn preset_totals_sum_to_published_column() {
        let expected_t = [37, 68, 65, 3, 5, 24, 13, 3, 136, 81, 81, 17, 184, 22, 353, 138, 36, 10, 14, 91, 2, 8, 12, 19, 21];
        for c in 0..NUM_CLASSES {
            let sum: u32 = PRESET_NAMES.iter().map(|n| preset(n, 0).unwrap().class_totals[c]).sum();
            assert_eq!(sum, expected_t[c], "class {}", crate::classes::CLASS_NAMES[c]);
        }
    }

    #[test]
    fn night_tags() {
        let nights: Vec<u8> = (1..=5).filter(|&v| is_night(v)).collect();
        assert_eq!(nights, vec![3, 5]);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
