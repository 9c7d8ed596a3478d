use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::{snap_to_cell, Grid};
use super::{derive_seed, EnvSpec, GenError, VARIATIONS};
use crate::classes::{ClassId, NUM_CLASSES};
use crate::geometry::plane::{Point2, Rect};
use crate::geometry::{intersection_volume, Cuboid, Vec3};
use crate::scene::{Fixture, Pose, Scene};

pub(crate) const WALL_THICKNESS: f64 = 0.1;
pub(crate) const DOOR_WIDTH: f64 = 1.2;
const DOOR_APPROACH: f64 = 1.0;
const WALL_GAP: f64 = 0.02;
/// Minimum clear gap between free-standing obstacles; wider than the robot.
const OBSTACLE_GAP: f64 = 0.65;
const START_CLEARANCE: f64 = 0.9;
const SURFACE_CELL: f64 = 0.3;
const FIXTURE_DEPTH: f64 = 0.6;
const ROBOT_RADIUS: f64 = 0.25;
const SAMPLES_PER_OBJECT: usize = 3000;
const LAYOUT_ATTEMPTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Free,
    Wall,
    Surface,
}

/// Placement kind and nominal size (x, y, z) per class.
fn class_shape(class: ClassId) -> (Kind, [f64; 3]) {
    use Kind::*;
    match class.name() {
        "bottle" => (Surface, [0.07, 0.07, 0.25]),
        "cup" => (Surface, [0.08, 0.08, 0.10]),
        "bowl" => (Surface, [0.16, 0.16, 0.07]),
        "spoon" => (Surface, [0.15, 0.03, 0.02]),
        "banana" => (Surface, [0.18, 0.06, 0.04]),
        "apple" => (Surface, [0.08, 0.08, 0.08]),
        "orange" => (Surface, [0.08, 0.08, 0.08]),
        "cake" => (Surface, [0.25, 0.25, 0.10]),
        "plant" => (Free, [0.4, 0.4, 1.0]),
        "mouse" => (Surface, [0.10, 0.06, 0.04]),
        "keyboard" => (Surface, [0.45, 0.15, 0.03]),
        "laptop" => (Surface, [0.35, 0.25, 0.03]),
        "book" => (Surface, [0.23, 0.16, 0.04]),
        "clock" => (Surface, [0.25, 0.08, 0.25]),
        "chair" => (Free, [0.5, 0.5, 0.9]),
        "table" => (Free, [1.2, 0.8, 0.75]),
        "couch" => (Wall, [2.0, 0.9, 0.8]),
        "bed" => (Wall, [2.0, 1.6, 0.6]),
        "toilet" => (Wall, [0.7, 0.45, 0.8]),
        "tv" => (Surface, [0.85, 0.2, 0.55]),
        "microwave" => (Surface, [0.5, 0.35, 0.3]),
        "toaster" => (Surface, [0.3, 0.2, 0.2]),
        "fridge" => (Wall, [0.75, 0.7, 1.8]),
        "sink" => (Wall, [0.6, 0.5, 0.9]),
        "person" => (Free, [0.5, 0.35, 1.7]),
        other => unreachable!("no shape for class {other}"),
    }
}

/// Pool size for a class: enough instances that the variation solver can
/// move membership around, but no more than the total requires.
pub(crate) fn pool_size(total: u32) -> usize {
    if total == 0 {
        return 0;
    }
    let per_variation = (total as usize).div_ceil(VARIATIONS);
    (per_variation + 1).min(total as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolObject {
    pub instance_id: String,
    pub class: ClassId,
    pub cuboid: Cuboid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloorPlan {
    pub rooms: Vec<Rect>,
    pub walls: Vec<Rect>,
    pub door_zones: Vec<Rect>,
    /// Room pairs joined by a doorway.
    pub doors: Vec<(usize, usize)>,
    /// Inside faces of the outer walls.
    pub interior: Rect,
    /// Depth-first visiting order over the doorway graph from the start room.
    pub room_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseEnvironment {
    pub spec: EnvSpec,
    pub plan: FloorPlan,
    pub fixtures: Vec<Fixture>,
    pub pool: Vec<PoolObject>,
    pub start: Pose,
}

impl BaseEnvironment {
    /// Scene holding every pool object; used for checks and as the
    /// template for variations.
    pub fn full_scene(&self) -> Scene {
        self.scene_with(&self.pool.iter().collect::<Vec<_>>(), 0, false)
    }

    pub(crate) fn scene_with(&self, objects: &[&PoolObject], variation: u8, night: bool) -> Scene {
        Scene {
            version: crate::scene::SCENE_FORMAT_VERSION,
            name: if variation == 0 { format!("{}_base", self.spec.name) } else { format!("{}_{}", self.spec.name, variation) },
            base: self.spec.name.clone(),
            variation,
            night,
            walls: self.plan.walls.iter().map(Rect::to_polygon).collect(),
            fixtures: self.fixtures.clone(),
            objects: objects
                .iter()
                .map(|o| crate::scene::SceneObject {
                    instance_id: o.instance_id.clone(),
                    class: o.class,
                    cuboid: o.cuboid,
                })
                .collect(),
            start: self.start,
            trajectory: vec![self.start],
        }
    }
}

fn build_plan(spec: &EnvSpec, rng: &mut ChaCha8Rng) -> FloorPlan {
    let (nx, ny, w, d) = (spec.rooms_x, spec.rooms_y, spec.room_width, spec.room_depth);
    let t = WALL_THICKNESS;
    let half = 0.5 * t;
    let room_index = |i: usize, j: usize| j * nx + i;
    let mut rooms = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x0, y0) = (i as f64 * w, j as f64 * d);
            rooms.push(Rect::new(x0 + half, y0 + half, x0 + w - half, y0 + d - half));
        }
    }

    // Random depth-first spanning tree over the room grid.
    let mut adjacency: Vec<Vec<usize>> = vec![vec![]; rooms.len()];
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                adjacency[room_index(i, j)].push(room_index(i + 1, j));
                adjacency[room_index(i + 1, j)].push(room_index(i, j));
            }
            if j + 1 < ny {
                adjacency[room_index(i, j)].push(room_index(i, j + 1));
                adjacency[room_index(i, j + 1)].push(room_index(i, j));
            }
        }
    }
    let mut visited = vec![false; rooms.len()];
    let mut tree: HashSet<(usize, usize)> = HashSet::new();
    let mut room_order = vec![0];
    let mut stack = vec![0usize];
    visited[0] = true;
    while let Some(&top) = stack.last() {
        let mut options: Vec<usize> = adjacency[top].iter().copied().filter(|&n| !visited[n]).collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        options.sort_unstable();
        let next = *options.choose(rng).expect("non-empty");
        visited[next] = true;
        tree.insert((top.min(next), top.max(next)));
        room_order.push(next);
        stack.push(next);
    }
    let mut doors: Vec<(usize, usize)> = tree.iter().copied().collect();
    doors.sort_unstable();
    // A few extra doorways create loops.
    for a in 0..rooms.len() {
        for &b in &adjacency[a] {
            if a < b && !tree.contains(&(a, b)) && rng.random::<f64>() < 0.25 {
                doors.push((a, b));
            }
        }
    }
    doors.sort_unstable();

    let mut walls = Vec::new();
    let mut door_zones = Vec::new();
    let w_total = nx as f64 * w;
    let d_total = ny as f64 * d;
    walls.push(Rect::new(-half, -half, w_total + half, half));
    walls.push(Rect::new(-half, d_total - half, w_total + half, d_total + half));
    walls.push(Rect::new(-half, -half, half, d_total + half));
    walls.push(Rect::new(w_total - half, -half, w_total + half, d_total + half));

    let margin = 0.5 * DOOR_WIDTH + 0.9;
    for j in 0..ny {
        for i in 0..nx {
            let a = room_index(i, j);
            // Vertical wall to the right of room a.
            if i + 1 < nx {
                let b = room_index(i + 1, j);
                let x = (i + 1) as f64 * w;
                let (y0, y1) = (j as f64 * d, (j + 1) as f64 * d);
                if doors.binary_search(&(a, b)).is_ok() {
                    let c = rng.random_range(y0 + margin..y1 - margin);
                    let (g0, g1) = (c - 0.5 * DOOR_WIDTH, c + 0.5 * DOOR_WIDTH);
                    walls.push(Rect::new(x - half, y0, x + half, g0));
                    walls.push(Rect::new(x - half, g1, x + half, y1));
                    door_zones.push(Rect::new(x - half - DOOR_APPROACH, g0, x + half + DOOR_APPROACH, g1));
                } else {
                    walls.push(Rect::new(x - half, y0, x + half, y1));
                }
            }
            // Horizontal wall above room a.
            if j + 1 < ny {
                let b = room_index(i, j + 1);
                let y = (j + 1) as f64 * d;
                let (x0, x1) = (i as f64 * w, (i + 1) as f64 * w);
                if doors.binary_search(&(a, b)).is_ok() {
                    let c = rng.random_range(x0 + margin..x1 - margin);
                    let (g0, g1) = (c - 0.5 * DOOR_WIDTH, c + 0.5 * DOOR_WIDTH);
                    walls.push(Rect::new(x0, y - half, g0, y + half));
                    walls.push(Rect::new(g1, y - half, x1, y + half));
                    door_zones.push(Rect::new(g0, y - half - DOOR_APPROACH, g1, y + half + DOOR_APPROACH));
                } else {
                    walls.push(Rect::new(x0, y - half, x1, y + half));
                }
            }
        }
    }

    FloorPlan {
        rooms,
        walls,
        door_zones,
        doors,
        interior: Rect::new(half, half, w_total - half, d_total - half),
        room_order,
    }
}

struct Placer<'a> {
    plan: &'a FloorPlan,
    reserved: Vec<Rect>,
    footprints: Vec<Rect>,
}

impl Placer<'_> {
    fn clear_of_all(&self, r: &Rect) -> bool {
        !self.reserved.iter().any(|z| z.overlaps(r)) && self.footprints.iter().all(|f| f.distance(r) >= OBSTACLE_GAP)
    }

    /// Rectangle of size `along` x `depth` against one side of a room.
    fn sample_wall(&self, rng: &mut ChaCha8Rng, along: f64, depth: f64) -> Option<(Rect, usize)> {
        let room = *self.plan.rooms.choose(rng)?;
        let side = rng.random_range(0..4usize);
        let horizontal = side < 2;
        let span = if horizontal { room.width() } else { room.height() };
        let lo = OBSTACLE_GAP;
        let hi = span - OBSTACLE_GAP - along;
        if hi <= lo {
            return None;
        }
        let u = rng.random_range(lo..hi);
        let r = match side {
            0 => Rect::new(room.min.x + u, room.min.y + WALL_GAP, room.min.x + u + along, room.min.y + WALL_GAP + depth),
            1 => Rect::new(room.min.x + u, room.max.y - WALL_GAP - depth, room.min.x + u + along, room.max.y - WALL_GAP),
            2 => Rect::new(room.min.x + WALL_GAP, room.min.y + u, room.min.x + WALL_GAP + depth, room.min.y + u + along),
            _ => Rect::new(room.max.x - WALL_GAP - depth, room.min.y + u, room.max.x - WALL_GAP, room.min.y + u + along),
        };
        // The side opposite the wall must leave room to pass.
        let opposite = if horizontal { room.height() - depth - WALL_GAP } else { room.width() - depth - WALL_GAP };
        (opposite >= OBSTACLE_GAP && self.clear_of_all(&r)).then_some((r, side))
    }

    fn sample_free(&self, rng: &mut ChaCha8Rng, sx: f64, sy: f64) -> Option<Rect> {
        let room = *self.plan.rooms.choose(rng)?;
        let inner = room.inflate(-OBSTACLE_GAP);
        if inner.width() <= sx || inner.height() <= sy {
            return None;
        }
        let x = rng.random_range(inner.min.x..inner.max.x - sx);
        let y = rng.random_range(inner.min.y..inner.max.y - sy);
        let r = Rect::new(x, y, x + sx, y + sy);
        self.clear_of_all(&r).then_some(r)
    }
}

struct Surface {
    rect: Rect,
    /// Cells along and across the fixture top.
    along_x: bool,
    cells: (usize, usize),
    used: Vec<bool>,
    height: f64,
}

impl Surface {
    fn origin_cell(&self, i: usize, j: usize) -> Point2 {
        if self.along_x {
            Point2::new(self.rect.min.x + i as f64 * SURFACE_CELL, self.rect.min.y + j as f64 * SURFACE_CELL)
        } else {
            Point2::new(self.rect.min.x + j as f64 * SURFACE_CELL, self.rect.min.y + i as f64 * SURFACE_CELL)
        }
    }

    /// Free block of `ca` x `cd` cells, scanning from a random offset.
    fn take(&mut self, rng: &mut ChaCha8Rng, ca: usize, cd: usize) -> Option<(usize, usize)> {
        let (na, nd) = self.cells;
        if ca > na || cd > nd {
            return None;
        }
        let positions: Vec<(usize, usize)> = (0..=na - ca).flat_map(|i| (0..=nd - cd).map(move |j| (i, j))).collect();
        let offset = rng.random_range(0..positions.len());
        for k in 0..positions.len() {
            let (i, j) = positions[(k + offset) % positions.len()];
            let free = (i..i + ca).all(|a| (j..j + cd).all(|b| !self.used[a * nd + b]));
            if free {
                for a in i..i + ca {
                    for b in j..j + cd {
                        self.used[a * nd + b] = true;
                    }
                }
                return Some((i, j));
            }
        }
        None
    }
}

fn jittered(rng: &mut ChaCha8Rng, dims: [f64; 3]) -> [f64; 3] {
    dims.map(|v| v * rng.random_range(0.9..1.1))
}

fn cells_for(len: f64) -> usize {
    ((len / SURFACE_CELL) - 1e-9).ceil().max(1.0) as usize
}

/// Lays out a base environment: walls, doorways, fixtures and the full
/// object pool.
pub fn generate_base(spec: &EnvSpec) -> Result<BaseEnvironment, GenError> {
    spec.validate()?;
    let mut last_err = None;
    for attempt in 0..LAYOUT_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("layout-{attempt}")));
        match try_layout(spec, &mut rng) {
            Ok(base) => return Ok(base),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn try_layout(spec: &EnvSpec, rng: &mut ChaCha8Rng) -> Result<BaseEnvironment, GenError> {
    let plan = build_plan(spec, rng);
    let start_room = plan.rooms[0];
    let start_point = snap_to_cell(plan.interior, start_room.center());
    let start = Pose::new(start_point.x, start_point.y, 0.0);
    let mut reserved = plan.door_zones.clone();
    reserved.push(Rect::new(start.x, start.y, start.x, start.y).inflate(START_CLEARANCE));
    let mut placer = Placer { plan: &plan, reserved, footprints: vec![] };

    // Instance list by class, in class order.
    let mut wanted: Vec<(ClassId, Kind, [f64; 3])> = Vec::new();
    for class in ClassId::all() {
        let (kind, dims) = class_shape(class);
        for _ in 0..pool_size(spec.total(class)) {
            wanted.push((class, kind, jittered(rng, dims)));
        }
    }

    let fail = |class: ClassId| GenError::PlacementInfeasible { env: spec.name.clone(), class: class.name().to_string() };

    // Fixtures sized to the surface demand.
    let demand: usize = wanted
        .iter()
        .filter(|w| w.1 == Kind::Surface)
        .map(|(_, _, d)| cells_for(d[0].max(d[1])) * cells_for(d[0].min(d[1])))
        .sum();
    let mut surfaces: Vec<Surface> = Vec::new();
    let mut fixtures = Vec::new();
    let mut capacity = 0usize;
    let mut tries = 0;
    while capacity * 100 < demand * 135 {
        tries += 1;
        if tries > SAMPLES_PER_OBJECT * 4 {
            return Err(GenError::PlacementInfeasible { env: spec.name.clone(), class: "fixture".into() });
        }
        let len_cells = rng.random_range(6..=8usize);
        let along = len_cells as f64 * SURFACE_CELL;
        let Some((rect, side)) = placer.sample_wall(rng, along, FIXTURE_DEPTH) else { continue };
        let (kind, height) = if rng.random::<bool>() { ("desk", 0.75) } else { ("counter", 0.9) };
        let along_x = side < 2;
        let depth_cells = (FIXTURE_DEPTH / SURFACE_CELL).round() as usize;
        surfaces.push(Surface { rect, along_x, cells: (len_cells, depth_cells), used: vec![false; len_cells * depth_cells], height });
        fixtures.push(Fixture { kind: kind.to_string(), footprint: rect.to_polygon(), height });
        placer.footprints.push(rect);
        capacity += len_cells * depth_cells;
    }

    let mut pool: Vec<PoolObject> = Vec::new();
    let mut counters = [0usize; NUM_CLASSES];
    let mut push = |pool: &mut Vec<PoolObject>, class: ClassId, cuboid: Cuboid| {
        let k = &mut counters[class.index()];
        *k += 1;
        pool.push(PoolObject { instance_id: format!("{}_{:03}", class.name(), k), class, cuboid });
    };

    // Large wall-backed items first, then free-standing, then surface items.
    let mut order: Vec<usize> = (0..wanted.len()).collect();
    let rank = |k: Kind| match k {
        Kind::Wall => 0,
        Kind::Free => 1,
        Kind::Surface => 2,
    };
    order.sort_by(|&i, &j| {
        let area = |k: usize| wanted[k].2[0] * wanted[k].2[1];
        rank(wanted[i].1).cmp(&rank(wanted[j].1)).then(area(j).total_cmp(&area(i)))
    });
    let mut placed: Vec<Option<Cuboid>> = vec![None; wanted.len()];
    for &i in &order {
        let (class, kind, [a, b, h]) = wanted[i];
        let cuboid = match kind {
            Kind::Wall => {
                let mut found = None;
                for _ in 0..SAMPLES_PER_OBJECT {
                    if let Some((r, _)) = placer.sample_wall(rng, a, b) {
                        found = Some(r);
                        break;
                    }
                }
                let r = found.ok_or_else(|| fail(class))?;
                placer.footprints.push(r);
                floor_cuboid(r, h)
            }
            Kind::Free => {
                let (sx, sy) = if rng.random::<bool>() { (a, b) } else { (b, a) };
                let mut found = None;
                for _ in 0..SAMPLES_PER_OBJECT {
                    if let Some(r) = placer.sample_free(rng, sx, sy) {
                        found = Some(r);
                        break;
                    }
                }
                let r = found.ok_or_else(|| fail(class))?;
                placer.footprints.push(r);
                floor_cuboid(r, h)
            }
            Kind::Surface => {
                let (long, short) = (a.max(b), a.min(b));
                let (ca, cd) = (cells_for(long), cells_for(short));
                let mut idx: Vec<usize> = (0..surfaces.len()).collect();
                idx.shuffle(rng);
                let mut found = None;
                for s in idx {
                    if let Some((ci, cj)) = surfaces[s].take(rng, ca, cd) {
                        found = Some((s, ci, cj));
                        break;
                    }
                }
                let (s, ci, cj) = found.ok_or_else(|| fail(class))?;
                let surf = &surfaces[s];
                let o = surf.origin_cell(ci, cj);
                let (bw, bd) = (ca as f64 * SURFACE_CELL, cd as f64 * SURFACE_CELL);
                let (cx, cy, ex, ey) = if surf.along_x {
                    (o.x + 0.5 * bw, o.y + 0.5 * bd, long, short)
                } else {
                    (o.x + 0.5 * bd, o.y + 0.5 * bw, short, long)
                };
                Cuboid::new(Vec3::new(cx, cy, surf.height + 0.5 * h), Vec3::new(ex, ey, h)).expect("positive dims")
            }
        };
        placed[i] = Some(cuboid);
    }
    for (i, (class, _, _)) in wanted.iter().enumerate() {
        push(&mut pool, *class, placed[i].expect("every instance placed"));
    }

    let base = BaseEnvironment { spec: spec.clone(), plan, fixtures, pool, start };
    let scene = base.full_scene();
    check_interpenetration(&scene).map_err(|e| GenError::PlacementInfeasible { env: spec.name.clone(), class: e })?;
    if !free_space_connected(&scene, base.plan.interior) {
        return Err(GenError::PlacementInfeasible { env: spec.name.clone(), class: "connectivity".into() });
    }
    Ok(base)
}

fn floor_cuboid(r: Rect, h: f64) -> Cuboid {
    let c = r.center();
    Cuboid::new(Vec3::new(c.x, c.y, 0.5 * h), Vec3::new(r.width(), r.height(), h)).expect("positive dims")
}

/// Checks that no object overlaps another object, a wall, or a fixture
/// body. Objects resting on a fixture top are allowed.
pub fn check_interpenetration(scene: &Scene) -> Result<(), String> {
    let objs = &scene.objects;
    for i in 0..objs.len() {
        for j in i + 1..objs.len() {
            if intersection_volume(&objs[i].cuboid, &objs[j].cuboid) > 0.0 {
                return Err(format!("{} intersects {}", objs[i].instance_id, objs[j].instance_id));
            }
        }
        let fp = objs[i].cuboid.footprint();
        if scene.walls.iter().any(|w| w.bounds().overlaps(&fp)) {
            return Err(format!("{} intersects a wall", objs[i].instance_id));
        }
        let bottom = objs[i].cuboid.min_corner().z;
        if bottom < -1e-9 {
            return Err(format!("{} is below the floor", objs[i].instance_id));
        }
        for f in &scene.fixtures {
            if f.footprint.bounds().overlaps(&fp) && bottom < f.height - 1e-9 {
                return Err(format!("{} intersects a {}", objs[i].instance_id, f.kind));
            }
        }
    }
    Ok(())
}

/// Every robot-reachable cell of the interior must connect to the start.
pub(crate) fn free_space_connected(scene: &Scene, interior: Rect) -> bool {
    let grid = Grid::build(interior, scene, ROBOT_RADIUS);
    let Some(start) = grid.cell_of(scene.start.position()) else { return false };
    if !grid.free(start) {
        return false;
    }
    let reach = grid.reachable(start);
    (0..grid.len()).all(|c| !grid.free(c) || reach[c])
}
