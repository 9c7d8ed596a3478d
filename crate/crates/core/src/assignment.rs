//! Optimal one-to-one assignment of proposed objects to ground-truth objects.
//!
//! The solver maximizes the summed pairwise quality with the O(n³)
//! shortest-augmenting-path form of the Hungarian method on the matrix padded
//! to square with zeros. Among optimal matchings it returns the one whose
//! column sequence (column of row 0, row 1, ...) is lexicographically
//! smallest, with padding columns ordered after real ones. Pairs of zero
//! quality are then dropped and their endpoints reported unmatched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack on reduced costs when deciding which optimal matchings tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QualityMatrixError {
    #[error("entry ({row}, {col}) = {value} is not a finite value in [0, 1]")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    Shape {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
}

/// Row-major matrix of pairwise qualities; rows are proposals, columns are
/// ground-truth objects.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl QualityMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, QualityMatrixError> {
        if data.len() != rows * cols {
            return Err(QualityMatrixError::Shape {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        for (k, &value) in data.iter().enumerate() {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(QualityMatrixError::InvalidEntry {
                    row: k / cols.max(1),
                    col: k % cols.max(1),
                    value,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, QualityMatrixError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(QualityMatrixError::Shape {
                    rows: rows.len(),
                    cols,
                    expected: rows.len() * cols,
                    got: rows.iter().map(Vec::len).sum(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn build(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, QualityMatrixError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub proposed: usize,
    pub gt: usize,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    /// Non-zero quality pairs, ordered by proposal index.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_proposed: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

impl Assignment {
    /// Sum of matched qualities, accumulated in proposal order.
    pub fn total(&self) -> f64 {
        self.pairs.iter().map(|p| p.quality).sum()
    }
}

/// Finds the maximum-total-quality one-to-one assignment.
pub fn solve(q: &QualityMatrix) -> Assignment {
    let (m, n) = (q.rows, q.cols);
    if m == 0 || n == 0 {
        return Assignment {
            pairs: Vec::new(),
            unmatched_proposed: (0..m).collect(),
            unmatched_gt: (0..n).collect(),
        };
    }
    let size = m.max(n);
    let cost = |i: usize, j: usize| if i < m && j < n { -q.get(i, j) } else { 0.0 };

    let (row_to_col, u, v) = hungarian(size, &cost);
    let row_to_col = lexicographic_optimum(size, m, &cost, &u, &v, row_to_col);

    let mut pairs = Vec::new();
    let mut unmatched_proposed = Vec::new();
    let mut gt_taken = vec![false; n];
    for (i, &j) in row_to_col.iter().enumerate().take(m) {
        if j < n && q.get(i, j) > 0.0 {
            pairs.push(MatchedPair { proposed: i, gt: j, quality: q.get(i, j) });
            gt_taken[j] = true;
        } else {
            unmatched_proposed.push(i);
        }
    }
    let unmatched_gt = (0..n).filter(|&j| !gt_taken[j]).collect();
    Assignment { pairs, unmatched_proposed, unmatched_gt }
}

/// Minimum-cost perfect matching on a dense square matrix.
///
/// Returns the column of every row together with row and column potentials
/// satisfying `cost(i, j) - u[i] - v[j] >= 0`, with equality on matched edges.
fn hungarian(size: usize, cost: &impl Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based working arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for row in 1..=size {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; size];
    for j in 1..=size {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites an optimal matching into the lexicographically smallest optimal
/// one by rerouting along alternating paths of tight edges.
fn lexicographic_optimum(
    size: usize,
    real_rows: usize,
    cost: &impl Fn(usize, usize) -> f64,
    u: &[f64],
    v: &[f64],
    mut row_to_col: Vec<usize>,
) -> Vec<usize> {
    let tight = |i: usize, j: usize| cost(i, j) - u[i] - v[j] <= TIE_TOLERANCE;
    let mut col_to_row = vec![0usize; size];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut col_fixed = vec![false; size];
    for i in 0..real_rows {
        let current = row_to_col[i];
        for j in 0..current {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            // Move row i to column j; the displaced row must reach `current`.
            let displaced = col_to_row[j];
            if let Some(path) = alternating_path(size, i, displaced, current, &tight, &col_fixed, &col_to_row) {
                row_to_col[i] = j;
                col_to_row[j] = i;
                for (r, c) in path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                break;
            }
        }
        col_fixed[row_to_col[i]] = true;
    }
    row_to_col
}

/// Depth-first search for reassignments letting `start_row` end up on
/// `target_col`, using only tight edges into unfixed columns and never
/// touching `pinned_row`. Returns the `(row, new column)` moves.
fn alternating_path(
    size: usize,
    pinned_row: usize,
    start_row: usize,
    target_col: usize,
    tight: &impl Fn(usize, usize) -> bool,
    col_fixed: &[bool],
    col_to_row: &[usize],
) -> Option<Vec<(usize, usize)>> {
    let mut visited = vec![false; size];
    // Stack frames are (row, next column to try); `via[k]` is the column
    // row `stack[k]` moves to.
    let mut stack: Vec<(usize, usize)> = vec![(start_row, 0)];
    let mut via: Vec<usize> = Vec::new();
    while let Some(top) = stack.len().checked_sub(1) {
        let row = stack[top].0;
        let mut descend = None;
        while stack[top].1 < size {
            let c = stack[top].1;
            stack[top].1 += 1;
            if visited[c] || col_fixed[c] || !tight(row, c) {
                continue;
            }
            if c == target_col {
                via.push(c);
                return Some(stack.iter().map(|&(r, _)| r).zip(via).collect());
            }
            let owner = col_to_row[c];
            if owner == pinned_row {
                continue;
            }
            descend = Some((c, owner));
            break;
        }
        match descend {
            Some((c, owner)) => {
                visited[c] = true;
                via.push(c);
                stack.push((owner, 0));
            }
            None => {
                stack.pop();
                via.pop();
            }
        }
    }
    None
}
