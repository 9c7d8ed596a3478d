use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layout::BaseEnvironment;
use super::trajectory::{generate_trajectory, TrajectoryParams};
use super::{fnv1a, is_night, GenError, MAX_CHANGES, MIN_CHANGES, VARIATIONS};
use crate::classes::NUM_CLASSES;
use crate::scene::Scene;

const SEARCH_ITERATIONS: usize = 400_000;
const RANDOM_WALK: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariationSpec {
    pub base_seed: u64,
    /// 1-based.
    pub variation: u8,
    pub seed: u64,
    /// Inclusive bounds on changes against every other variation.
    pub change_budget: (usize, usize),
    pub night: bool,
    pub trajectory_len: usize,
}

impl VariationSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let (lo, hi) = self.change_budget;
        if !(1..=VARIATIONS as u8).contains(&self.variation) {
            return Err(GenError::InvalidSpec(format!("variation index {} outside 1..=5", self.variation)));
        }
        if lo < MIN_CHANGES || hi > MAX_CHANGES || lo > hi {
            return Err(GenError::InvalidSpec(format!("change budget {lo}..={hi} outside {MIN_CHANGES}..={MAX_CHANGES}")));
        }
        if self.night != is_night(self.variation) {
            return Err(GenError::InvalidSpec("only variations 3 and 5 are night scenes".into()));
        }
        Ok(())
    }
}

pub fn variation_specs(base: &BaseEnvironment, seeds: [u64; VARIATIONS]) -> [VariationSpec; VARIATIONS] {
    std::array::from_fn(|k| {
        let variation = k as u8 + 1;
        VariationSpec {
            base_seed: base.spec.seed,
            variation,
            seed: seeds[k],
            change_budget: (MIN_CHANGES, MAX_CHANGES),
            night: is_night(variation),
            trajectory_len: base.spec.trajectory_lengths[k],
        }
    })
}

/// Number of objects present in exactly one of the two scenes.
pub fn change_count(a: &Scene, b: &Scene) -> usize {
    let ia: BTreeSet<&str> = a.objects.iter().map(|o| o.instance_id.as_str()).collect();
    let ib: BTreeSet<&str> = b.objects.iter().map(|o| o.instance_id.as_str()).collect();
    ia.symmetric_difference(&ib).count()
}

/// Five variations over the base pool using the default budget.
pub fn generate_variations(base: &BaseEnvironment, seeds: [u64; VARIATIONS]) -> Result<Vec<Scene>, GenError> {
    generate_variations_with(base, &variation_specs(base, seeds))
}

pub fn generate_variations_with(base: &BaseEnvironment, specs: &[VariationSpec; VARIATIONS]) -> Result<Vec<Scene>, GenError> {
    for (k, s) in specs.iter().enumerate() {
        s.validate()?;
        if s.variation as usize != k + 1 {
            return Err(GenError::InvalidSpec("variation specs must be ordered 1..=5".into()));
        }
    }
    let masks = solve_membership(base, specs)?;
    let mut scenes = Vec::with_capacity(VARIATIONS);
    for (k, spec) in specs.iter().enumerate() {
        let present: Vec<_> = base.pool.iter().zip(&masks).filter(|(_, &m)| m & (1 << k) != 0).map(|(o, _)| o).collect();
        let mut scene = base.scene_with(&present, spec.variation, spec.night);
        scene.trajectory = generate_trajectory(&scene, &base.plan, &TrajectoryParams::new(spec.trajectory_len))?;
        scenes.push(scene);
    }
    Ok(scenes)
}

fn pair_bounds(specs: &[VariationSpec; VARIATIONS], i: usize, j: usize) -> (i64, i64) {
    let lo = specs[i].change_budget.0.max(specs[j].change_budget.0);
    let hi = specs[i].change_budget.1.min(specs[j].change_budget.1);
    (lo as i64, hi as i64)
}

struct Membership {
    masks: Vec<u8>,
    /// Pool indices per class.
    groups: Vec<Vec<usize>>,
    diffs: [[i64; VARIATIONS]; VARIATIONS],
}

impl Membership {
    fn contribution(diffs: &mut [[i64; VARIATIONS]; VARIATIONS], mask: u8, sign: i64) {
        for i in 0..VARIATIONS {
            for j in i + 1..VARIATIONS {
                if ((mask >> i) ^ (mask >> j)) & 1 == 1 {
                    diffs[i][j] += sign;
                }
            }
        }
    }

    fn set(&mut self, idx: usize, mask: u8) {
        Self::contribution(&mut self.diffs, self.masks[idx], -1);
        self.masks[idx] = mask;
        Self::contribution(&mut self.diffs, mask, 1);
    }

    fn cost(&self, specs: &[VariationSpec; VARIATIONS]) -> i64 {
        let mut c = 0;
        for i in 0..VARIATIONS {
            for j in i + 1..VARIATIONS {
                let (lo, hi) = pair_bounds(specs, i, j);
                let d = self.diffs[i][j];
                c += (lo - d).max(0) + (d - hi).max(0);
            }
        }
        c
    }
}

/// Chooses which variations show each pool instance. Per-class bit counts
/// equal the class totals; a local search over single-bit transfers within
/// a class then brings every pairwise change count inside its budget.
fn solve_membership(base: &BaseEnvironment, specs: &[VariationSpec; VARIATIONS]) -> Result<Vec<u8>, GenError> {
    let seed_bytes: Vec<u8> = specs.iter().flat_map(|s| s.seed.to_le_bytes()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&seed_bytes) ^ base.spec.seed);
    let full: u8 = (1 << VARIATIONS) - 1;

    let mut groups: Vec<Vec<usize>> = vec![vec![]; NUM_CLASSES];
    for (i, o) in base.pool.iter().enumerate() {
        groups[o.class.index()].push(i);
    }
    let mut m = Membership { masks: vec![0; base.pool.len()], groups, diffs: [[0; VARIATIONS]; VARIATIONS] };
    for c in 0..NUM_CLASSES {
        let total = base.spec.class_totals[c] as usize;
        let members = m.groups[c].clone();
        if total > members.len() * VARIATIONS {
            return Err(GenError::ChangeBudgetInfeasible(base.spec.name.clone()));
        }
        let mut left = total;
        for &idx in &members {
            let take = left.min(VARIATIONS);
            let mut mask = if take == VARIATIONS { full } else { 0 };
            while (mask.count_ones() as usize) < take {
                mask |= 1 << rng.random_range(0..VARIATIONS);
            }
            m.set(idx, mask);
            left -= take;
        }
    }

    let movable: Vec<usize> = (0..NUM_CLASSES)
        .filter(|&c| {
            let bits: u32 = m.groups[c].iter().map(|&i| m.masks[i].count_ones()).sum();
            bits > 0 && (bits as usize) < m.groups[c].len() * VARIATIONS
        })
        .collect();
    let mut cost = m.cost(specs);
    let mut iter = 0;
    while cost > 0 && !movable.is_empty() && iter < SEARCH_ITERATIONS {
        iter += 1;
        let c = movable[rng.random_range(0..movable.len())];
        let g = &m.groups[c];
        let a = g[rng.random_range(0..g.len())];
        let b = g[rng.random_range(0..g.len())];
        let (ma, mb) = (m.masks[a], m.masks[b]);
        if ma == 0 || mb == full {
            continue;
        }
        let set_bits: Vec<usize> = (0..VARIATIONS).filter(|&k| ma & (1 << k) != 0).collect();
        let i = set_bits[rng.random_range(0..set_bits.len())];
        let mb_after = if a == b { ma & !(1 << i) } else { mb };
        let clear_bits: Vec<usize> = (0..VARIATIONS).filter(|&k| mb_after & (1 << k) == 0 && !(a == b && k == i)).collect();
        if clear_bits.is_empty() {
            continue;
        }
        let j = clear_bits[rng.random_range(0..clear_bits.len())];
        if a == b {
            m.set(a, (ma & !(1 << i)) | (1 << j));
        } else {
            m.set(a, ma & !(1 << i));
            m.set(b, mb | (1 << j));
        }
        let next = m.cost(specs);
        if next <= cost || rng.random::<f64>() < RANDOM_WALK {
            cost = next;
        } else if a == b {
            m.set(a, ma);
        } else {
            m.set(a, ma);
            m.set(b, mb);
        }
    }
    if cost > 0 {
        return Err(GenError::ChangeBudgetInfeasible(base.spec.name.clone()));
    }
    Ok(m.masks)
}
