use crate::envgen::Split;
use crate::object_map::TaskKind;

use super::Difficulty;

/// Test-split variations checked for each task and difficulty. The same
/// columns apply to every test base environment.
pub fn test_variations(task: TaskKind, difficulty: Difficulty) -> &'static [u8] {
    use Difficulty::*;
    match (task, difficulty) {
        (TaskKind::SemanticSlam, PassiveGt) => &[1, 3],
        (TaskKind::SemanticSlam, ActiveGt) => &[2, 4],
        (TaskKind::SemanticSlam, ActiveDr) => &[4, 5],
        (TaskKind::Scd, PassiveGt) => &[1, 2, 3],
        (TaskKind::Scd, ActiveGt) => &[2, 3, 5],
        (TaskKind::Scd, ActiveDr) => &[1, 4, 5],
    }
}

/// Whether a strict server accepts an episode over the given variations of
/// one base. Development environments are unrestricted; for test
/// environments every variation must be checked and SCD pairs must differ.
pub fn matrix_allows(task: TaskKind, difficulty: Difficulty, split: Split, variations: &[u8]) -> bool {
    let expected = match task {
        TaskKind::SemanticSlam => 1,
        TaskKind::Scd => 2,
    };
    if variations.len() != expected {
        return false;
    }
    if split == Split::Dev {
        return true;
    }
    let checked = test_variations(task, difficulty);
    variations.iter().all(|v| checked.contains(v)) && (expected == 1 || variations[0] != variations[1])
}

/// Suite cells for a test base: each checked variation for semantic SLAM,
/// consecutive checked pairs for SCD.
pub fn suite_cells(task: TaskKind, difficulty: Difficulty) -> Vec<Vec<u8>> {
    let checked = test_variations(task, difficulty);
    match task {
        TaskKind::SemanticSlam => checked.iter().map(|&v| vec![v]).collect(),
        TaskKind::Scd => checked.windows(2).map(<[u8]>::to_vec).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_examples() {
        assert!(matrix_allows(TaskKind::Scd, Difficulty::ActiveDr, Split::Test, &[1, 4]));
        assert!(!matrix_allows(TaskKind::SemanticSlam, Difficulty::PassiveGt, Split::Test, &[2]));
        assert!(matrix_allows(TaskKind::SemanticSlam, Difficulty::PassiveGt, Split::Dev, &[2]));
        assert!(!matrix_allows(TaskKind::Scd, Difficulty::ActiveDr, Split::Test, &[4, 4]));
        assert!(!matrix_allows(TaskKind::Scd, Difficulty::ActiveDr, Split::Test, &[4]));
    }

    #[test]
    fn cells() {
        assert_eq!(suite_cells(TaskKind::SemanticSlam, Difficulty::ActiveGt), vec![vec![2], vec![4]]);
        assert_eq!(suite_cells(TaskKind::Scd, Difficulty::ActiveGt), vec![vec![2, 3], vec![3, 5]]);
    }

    #[test]
    fn every_test_cell_is_accepted() {
        for task in [TaskKind::SemanticSlam, TaskKind::Scd] {
            for d in Difficulty::ALL {
                for cell in suite_cells(task, d) {
                    assert!(matrix_allows(task, d, Split::Test, &cell));
                }
            }
        }
    }
}
