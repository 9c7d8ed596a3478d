use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use super::layout::FloorPlan;
use super::{GenError, MAX_TRAJECTORY_LEN, MIN_TRAJECTORY_LEN};
use crate::geometry::plane::{Point2, Rect, Segment};
use crate::scene::{wrap_angle, Pose, Scene};
use crate::simworld::SensorConfig;

const GRID_RES: f64 = 0.1;
const COVERAGE_RES: f64 = 0.5;
/// Extra clearance kept by planned paths beyond the robot radius.
const PATH_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    pub target_len: usize,
    pub min_coverage: f64,
    pub max_step: f64,
    pub max_turn_deg: f64,
    pub robot_radius: f64,
    pub sensor: SensorConfig,
}

impl TrajectoryParams {
    pub fn new(target_len: usize) -> Self {
        Self {
            target_len,
            min_coverage: 0.8,
            max_step: 1.0,
            max_turn_deg: 90.0,
            robot_radius: 0.25,
            sensor: SensorConfig::default(),
        }
    }
}

/// Centre of the planning cell containing `p`, for a grid anchored at
/// `area.min`.
pub(crate) fn snap_to_cell(area: Rect, p: Point2) -> Point2 {
    let ix = ((p.x - area.min.x) / GRID_RES).floor();
    let iy = ((p.y - area.min.y) / GRID_RES).floor();
    Point2::new(area.min.x + (ix + 0.5) * GRID_RES, area.min.y + (iy + 0.5) * GRID_RES)
}

/// Occupancy grid of robot centre positions.
pub(crate) struct Grid {
    origin: Point2,
    nx: usize,
    ny: usize,
    free: Vec<bool>,
}

impl Grid {
    /// Cells whose centre keeps at least `inflate` from every collision
    /// outline are free.
    pub(crate) fn build(area: Rect, scene: &Scene, inflate: f64) -> Self {
        let nx = (area.width() / GRID_RES).ceil().max(1.0) as usize;
        let ny = (area.height() / GRID_RES).ceil().max(1.0) as usize;
        let mut grid = Grid { origin: area.min, nx, ny, free: vec![true; nx * ny] };
        for poly in scene.collision_polygons() {
            let b = poly.bounds().inflate(inflate);
            let ix0 = (((b.min.x - area.min.x) / GRID_RES).floor().max(0.0) as usize).min(nx);
            let ix1 = (((b.max.x - area.min.x) / GRID_RES).ceil().max(0.0) as usize).min(nx);
            let iy0 = (((b.min.y - area.min.y) / GRID_RES).floor().max(0.0) as usize).min(ny);
            let iy1 = (((b.max.y - area.min.y) / GRID_RES).ceil().max(0.0) as usize).min(ny);
            for iy in iy0..iy1 {
                for ix in ix0..ix1 {
                    let c = iy * nx + ix;
                    if grid.free[c] && poly.distance_to(grid.center(c)) < inflate {
                        grid.free[c] = false;
                    }
                }
            }
        }
        grid
    }

    pub(crate) fn len(&self) -> usize {
        self.free.len()
    }

    pub(crate) fn free(&self, c: usize) -> bool {
        self.free[c]
    }

    pub(crate) fn center(&self, c: usize) -> Point2 {
        let (ix, iy) = (c % self.nx, c / self.nx);
        Point2::new(self.origin.x + (ix as f64 + 0.5) * GRID_RES, self.origin.y + (iy as f64 + 0.5) * GRID_RES)
    }

    pub(crate) fn cell_of(&self, p: Point2) -> Option<usize> {
        let fx = (p.x - self.origin.x) / GRID_RES;
        let fy = (p.y - self.origin.y) / GRID_RES;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.nx && iy < self.ny).then(|| iy * self.nx + ix)
    }

    fn point_free(&self, p: Point2) -> bool {
        self.cell_of(p).is_some_and(|c| self.free[c])
    }

    /// 8-connected neighbours; diagonals need both side cells free.
    fn neighbours(&self, c: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let (ix, iy) = ((c % self.nx) as i64, (c / self.nx) as i64);
        const STEPS: [(i64, i64, u32); 8] =
            [(1, 0, 10), (-1, 0, 10), (0, 1, 10), (0, -1, 10), (1, 1, 14), (1, -1, 14), (-1, 1, 14), (-1, -1, 14)];
        STEPS.iter().filter_map(move |&(dx, dy, cost)| {
            let (x, y) = (ix + dx, iy + dy);
            if x < 0 || y < 0 || x >= self.nx as i64 || y >= self.ny as i64 {
                return None;
            }
            let n = y as usize * self.nx + x as usize;
            if !self.free[n] {
                return None;
            }
            if dx != 0 && dy != 0 {
                let a = iy as usize * self.nx + x as usize;
                let b = y as usize * self.nx + ix as usize;
                if !self.free[a] || !self.free[b] {
                    return None;
                }
            }
            Some((n, cost))
        })
    }

    pub(crate) fn reachable(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        if !self.free[start] {
            return seen;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            for (n, _) in self.neighbours(c) {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        seen
    }

    fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut prev = vec![usize::MAX; self.len()];
        let mut heap = BinaryHeap::new();
        dist[from] = 0;
        heap.push(Reverse((0u32, from)));
        while let Some(Reverse((d, c))) = heap.pop() {
            if c == to {
                break;
            }
            if d > dist[c] {
                continue;
            }
            for (n, w) in self.neighbours(c) {
                let nd = d + w;
                if nd < dist[n] {
                    dist[n] = nd;
                    prev[n] = c;
                    heap.push(Reverse((nd, n)));
                }
            }
        }
        if dist[to] == u32::MAX {
            return None;
        }
        let mut path = vec![to];
        while *path.last().expect("non-empty") != from {
            path.push(prev[*path.last().expect("non-empty")]);
        }
        path.reverse();
        Some(path)
    }

    fn segment_clear(&self, a: Point2, b: Point2) -> bool {
        let n = ((a.distance(b) / (0.5 * GRID_RES)).ceil() as usize).max(1);
        (0..=n).all(|k| {
            let t = k as f64 / n as f64;
            self.point_free(a + (b - a).scale(t))
        })
    }

    /// Shortest grid path, shortened greedily to visible corners.
    fn polyline(&self, from: usize, to: usize) -> Option<Vec<Point2>> {
        let cells = self.shortest_path(from, to)?;
        let pts: Vec<Point2> = cells.iter().map(|&c| self.center(c)).collect();
        let mut out = vec![pts[0]];
        let mut i = 0;
        while i + 1 < pts.len() {
            let mut j = pts.len() - 1;
            while j > i + 1 && !self.segment_clear(pts[i], pts[j]) {
                j -= 1;
            }
            out.push(pts[j]);
            i = j;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Copy)]
struct Target {
    cell: usize,
    spin: bool,
    optional: bool,
}

#[derive(Debug, Clone, Copy)]
enum Item {
    Rotate { at: Point2, from: f64, delta: f64, k: usize },
    Translate { from: Point2, to: Point2, heading: f64, k: usize },
}

impl Item {
    fn min_nodes(&self, p: &TrajectoryParams) -> usize {
        match *self {
            Item::Rotate { delta, .. } => (delta.abs() / p.max_turn_deg.to_radians() - 1e-9).ceil().max(1.0) as usize,
            Item::Translate { from, to, .. } => (from.distance(to) / p.max_step - 1e-9).ceil().max(1.0) as usize,
        }
    }

    fn k(&self) -> usize {
        match *self {
            Item::Rotate { k, .. } | Item::Translate { k, .. } => k,
        }
    }

    fn bump(&mut self) {
        match self {
            Item::Rotate { k, .. } | Item::Translate { k, .. } => *k += 1,
        }
    }

    /// Per-node step as a fraction of its bound.
    fn load(&self, p: &TrajectoryParams) -> f64 {
        match *self {
            Item::Rotate { delta, k, .. } => delta.abs() / k as f64 / p.max_turn_deg.to_radians(),
            Item::Translate { from, to, k, .. } => from.distance(to) / k as f64 / p.max_step,
        }
    }
}

struct Planner<'a> {
    grid: &'a Grid,
    cache: HashMap<(usize, usize), Option<Vec<Point2>>>,
}

impl Planner<'_> {
    fn path(&mut self, a: usize, b: usize) -> Option<Vec<Point2>> {
        let grid = self.grid;
        self.cache.entry((a, b)).or_insert_with(|| grid.polyline(a, b)).clone()
    }

    fn items(&mut self, start: Pose, targets: &[Target], params: &TrajectoryParams) -> Vec<Item> {
        let mut items = Vec::new();
        let mut cell = self.grid.cell_of(start.position()).expect("start inside the grid");
        let mut heading = start.theta;
        let turn = |items: &mut Vec<Item>, at: Point2, heading: &mut f64, goal: f64| {
            let delta = wrap_angle(goal - *heading);
            if delta.abs() > 1e-9 {
                items.push(Item::Rotate { at, from: *heading, delta, k: 0 });
                *heading += delta;
            }
        };
        for t in targets {
            if t.cell != cell {
                let Some(line) = self.path(cell, t.cell) else { continue };
                for w in line.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let goal = (b.y - a.y).atan2(b.x - a.x);
                    turn(&mut items, a, &mut heading, goal);
                    items.push(Item::Translate { from: a, to: b, heading, k: 0 });
                }
                cell = t.cell;
            }
            if t.spin {
                let at = self.grid.center(cell);
                items.push(Item::Rotate { at, from: heading, delta: 1.5 * PI, k: 0 });
                heading += 1.5 * PI;
            }
        }
        for it in &mut items {
            let k = it.min_nodes(params);
            match it {
                Item::Rotate { k: slot, .. } | Item::Translate { k: slot, .. } => *slot = k,
            }
        }
        items
    }
}

fn node_count(items: &[Item]) -> usize {
    1 + items.iter().map(Item::k).sum::<usize>()
}

/// Passive trajectory of exactly `params.target_len` poses starting at the
/// scene's start pose. The route visits every room, turning a full circle
/// at room centres, and is padded with finer steps to reach the length.
pub fn generate_trajectory(scene: &Scene, plan: &FloorPlan, params: &TrajectoryParams) -> Result<Vec<Pose>, GenError> {
    if !(MIN_TRAJECTORY_LEN..=MAX_TRAJECTORY_LEN).contains(&params.target_len) {
        return Err(GenError::InvalidTarget(params.target_len));
    }
    let infeasible = |reason: String| GenError::CoverageInfeasible { env: scene.name.clone(), reason };
    let grid = Grid::build(plan.interior, scene, params.robot_radius + PATH_MARGIN + GRID_RES * 0.5 * 2f64.sqrt());
    let start = scene.start;
    let start_cell = grid
        .cell_of(start.position())
        .filter(|&c| grid.free(c))
        .ok_or_else(|| infeasible("start pose lacks clearance".into()))?;
    let reach = grid.reachable(start_cell);

    let snap = |room: &Rect, p: Point2| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        let r = room.inflate(-GRID_RES);
        let mut y = r.min.y;
        while y <= r.max.y {
            let mut x = r.min.x;
            while x <= r.max.x {
                if let Some(c) = grid.cell_of(Point2::new(x, y)) {
                    if reach[c] {
                        let d = grid.center(c).distance(p);
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, c));
                        }
                    }
                }
                x += GRID_RES;
            }
            y += GRID_RES;
        }
        best.map(|(_, c)| c)
    };

    let mut targets = vec![Target { cell: start_cell, spin: true, optional: false }];
    for (k, &room_idx) in plan.room_order.iter().enumerate() {
        let room = plan.rooms[room_idx];
        if k > 0 {
            if let Some(c) = snap(&room, room.center()) {
                targets.push(Target { cell: c, spin: true, optional: false });
            }
        }
        let (qx, qy) = (0.25 * room.width(), 0.25 * room.height());
        for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            let want = room.center() + Point2::new(sx * qx, sy * qy);
            if let Some(c) = snap(&room, want) {
                if grid.center(c).distance(want) <= 0.75 {
                    targets.push(Target { cell: c, spin: false, optional: true });
                }
            }
        }
    }

    let mut planner = Planner { grid: &grid, cache: HashMap::new() };
    let mut items = planner.items(start, &targets, params);
    while node_count(&items) > params.target_len {
        let Some(pos) = targets.iter().rposition(|t| t.optional) else {
            return Err(infeasible(format!(
                "{} poses needed to visit every room, target is {}",
                node_count(&items),
                params.target_len
            )));
        };
        targets.remove(pos);
        items = planner.items(start, &targets, params);
    }
    if items.is_empty() {
        items.push(Item::Rotate { at: start.position(), from: start.theta, delta: 2.0 * PI, k: 4 });
    }
    for _ in node_count(&items)..params.target_len {
        let mut best = 0;
        for i in 1..items.len() {
            if items[i].load(params) > items[best].load(params) {
                best = i;
            }
        }
        items[best].bump();
    }

    let mut poses = vec![start];
    for it in &items {
        match *it {
            Item::Rotate { at, from, delta, k } => {
                for s in 1..=k {
                    poses.push(Pose::new(at.x, at.y, from + delta * s as f64 / k as f64));
                }
            }
            Item::Translate { from, to, heading, k } => {
                for s in 1..=k {
                    let p = from + (to - from).scale(s as f64 / k as f64);
                    poses.push(Pose::new(p.x, p.y, heading));
                }
            }
        }
    }
    debug_assert_eq!(poses.len(), params.target_len);

    let cov = coverage(scene, plan.interior, &poses, params);
    if cov < params.min_coverage {
        return Err(infeasible(format!("coverage {cov:.3} below {}", params.min_coverage)));
    }
    Ok(poses)
}

/// Fraction of free interior cells that some pose sees within sensing
/// range, inside the field of view, with walls blocking sight.
pub fn coverage(scene: &Scene, interior: Rect, poses: &[Pose], params: &TrajectoryParams) -> f64 {
    let robot_grid = Grid::build(interior, scene, params.robot_radius);
    let walls = scene.occluding_edges();
    let half_fov = 0.5 * params.sensor.fov_deg.to_radians();
    let nx = (interior.width() / COVERAGE_RES).ceil() as usize;
    let ny = (interior.height() / COVERAGE_RES).ceil() as usize;
    let (mut free, mut seen) = (0usize, 0usize);
    for iy in 0..ny {
        for ix in 0..nx {
            let p = Point2::new(
                interior.min.x + (ix as f64 + 0.5) * COVERAGE_RES,
                interior.min.y + (iy as f64 + 0.5) * COVERAGE_RES,
            );
            if !interior.contains(p) || !robot_grid.point_free(p) {
                continue;
            }
            free += 1;
            let visible = poses.iter().any(|pose| {
                let local = pose.to_local(p);
                local.norm() <= params.sensor.detection_range
                    && local.y.atan2(local.x).abs() <= half_fov + 1e-9
                    && {
                        let sight = Segment::new(pose.position(), p);
                        !walls.iter().any(|w| w.intersects(&sight))
                    }
            });
            if visible {
                seen += 1;
            }
        }
    }
    if free == 0 {
        1.0
    } else {
        seen as f64 / free as f64
    }
}
