//! Dense-grid reference simulator.
//!
//! Deliberately naive: every cell of the machine box is stored, solids are
//! point-sampled at voxel centres, linear moves are walked in small parameter
//! steps and the tool and margin are stamped cell by cell. It shares only the
//! domain types with the discretizer and prover, so agreement between the two
//! is meaningful.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::gcode::{CommandKind, GCodeCommand, MachineState};
use crate::geometry::{Point3, Shape, Voxel};
use crate::heap::OccupancyStatus;
use crate::workspace::{ToolGeometry, ToolId, WorkspaceTopology};

pub const MAX_CELLS: usize = 64 * 64 * 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("dense grid of {0} cells exceeds the {MAX_CELLS}-cell limit")]
    TooLarge(usize),
    #[error("unknown tool {0}")]
    UnknownTool(ToolId),
}

type Cell = (i32, i32, i32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseGrid {
    pub origin: Voxel,
    pub dims: [usize; 3],
    cells: Vec<OccupancyStatus>,
}

impl DenseGrid {
    fn new(lo: Cell, hi: Cell) -> Result<Self, OracleError> {
        let dims = [(hi.0 - lo.0 + 1) as usize, (hi.1 - lo.1 + 1) as usize, (hi.2 - lo.2 + 1) as usize];
        let n = dims[0] * dims[1] * dims[2];
        if n > MAX_CELLS {
            return Err(OracleError::TooLarge(n));
        }
        Ok(DenseGrid { origin: Voxel::new(lo.0, lo.1, lo.2), dims, cells: vec![OccupancyStatus::Empty; n] })
    }

    fn index(&self, c: Cell) -> Option<usize> {
        let (x, y, z) = (c.0 - self.origin.x, c.1 - self.origin.y, c.2 - self.origin.z);
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return None;
        }
        Some((x * self.dims[1] + y) * self.dims[2] + z)
    }

    /// Status of `v`; outside the grid is `Environment`.
    pub fn get(&self, v: Voxel) -> OccupancyStatus {
        match self.index((v.x, v.y, v.z)) {
            Some(i) => self.cells[i],
            None => OccupancyStatus::Environment,
        }
    }

    fn set(&mut self, c: Cell, s: OccupancyStatus) {
        if let Some(i) = self.index(c) {
            self.cells[i] = s;
        }
    }

    pub fn total_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn count(&self, s: OccupancyStatus) -> usize {
        self.cells.iter().filter(|c| **c == s).count()
    }

    /// Non-empty cells in index order.
    pub fn occupied(&self) -> Vec<(Voxel, OccupancyStatus)> {
        let mut out = Vec::new();
        for x in 0..self.dims[0] {
            for y in 0..self.dims[1] {
                for z in 0..self.dims[2] {
                    let v = Voxel::new(self.origin.x + x as i32, self.origin.y + y as i32, self.origin.z + z as i32);
                    let s = self.cells[(x * self.dims[1] + y) * self.dims[2] + z];
                    if s != OccupancyStatus::Empty {
                        out.push((v, s));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleCollision {
    /// Index into the command list; `None` for the start placement.
    pub step: Option<usize>,
    pub source_line: usize,
    pub voxels: BTreeSet<Voxel>,
}

#[derive(Clone, Debug)]
pub struct OracleRun {
    pub collisions: Vec<OracleCollision>,
    pub final_grid: DenseGrid,
    pub initial_grid: DenseGrid,
}

impl OracleRun {
    pub fn first_collision_line(&self) -> Option<usize> {
        self.collisions.first().map(|c| c.source_line)
    }
}

struct Lattice {
    res: f64,
}

impl Lattice {
    fn index(&self, x: f64) -> i32 {
        let r = x / self.res;
        let r = (r * 1e9).round() / 1e9;
        let m = r.abs().floor();
        let k = if r.abs() - m >= 0.5 { m + 1.0 } else { m };
        (k * r.signum()) as i32
    }

    fn centre(&self, i: i32) -> f64 {
        i as f64 * self.res
    }

    fn first_at_or_above(&self, x: f64) -> i32 {
        (x / self.res - 1e-9).ceil() as i32
    }

    fn last_at_or_below(&self, x: f64) -> i32 {
        (x / self.res + 1e-9).floor() as i32
    }

    fn cell_of(&self, p: Point3) -> Cell {
        (self.index(p.x), self.index(p.y), self.index(p.z))
    }
}

/// Centre-sampled cells of a solid. A solid thinner than a voxel along some
/// axis keeps the layer nearest its middle there.
fn solid_cells(shape: &Shape, l: &Lattice) -> HashSet<Cell> {
    let layers = |lo: f64, hi: f64| {
        let (f, t) = (l.first_at_or_above(lo), l.last_at_or_below(hi));
        if f <= t {
            (f, t)
        } else {
            let m = l.index((lo + hi) / 2.0);
            (m, m)
        }
    };
    let mut out = HashSet::new();
    match shape {
        Shape::Box { min, max } => {
            let (rx, ry, rz) = (layers(min[0], max[0]), layers(min[1], max[1]), layers(min[2], max[2]));
            for x in rx.0..=rx.1 {
                for y in ry.0..=ry.1 {
                    for z in rz.0..=rz.1 {
                        out.insert((x, y, z));
                    }
                }
            }
        }
        Shape::Cylinder { center, axis, radius, height } => {
            let a = axis.index();
            let (f, t) = layers(center[a] - height / 2.0, center[a] + height / 2.0);
            let (u, v) = match a {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let reach = (radius / l.res).ceil() as i32 + 2;
            let (cu, cv) = (l.index(center[u]), l.index(center[v]));
            for i in cu - reach..=cu + reach {
                for j in cv - reach..=cv + reach {
                    let d2 = (l.centre(i) - center[u]).powi(2) + (l.centre(j) - center[v]).powi(2);
                    if d2 > radius * radius + 1e-9 && (i, j) != (cu, cv) {
                        continue;
                    }
                    for k in f..=t {
                        let mut c = [0; 3];
                        c[a] = k;
                        c[u] = i;
                        c[v] = j;
                        out.insert((c[0], c[1], c[2]));
                    }
                }
            }
        }
        Shape::Sphere { center, radius } => {
            let c = [l.index(center[0]), l.index(center[1]), l.index(center[2])];
            let reach = (radius / l.res).ceil() as i32 + 2;
            for x in c[0] - reach..=c[0] + reach {
                for y in c[1] - reach..=c[1] + reach {
                    for z in c[2] - reach..=c[2] + reach {
                        let d2 = (l.centre(x) - center[0]).powi(2)
                            + (l.centre(y) - center[1]).powi(2)
                            + (l.centre(z) - center[2]).powi(2);
                        if d2 <= radius * radius + 1e-9 {
                            out.insert((x, y, z));
                        }
                    }
                }
            }
            out.insert((c[0], c[1], c[2]));
        }
    }
    out
}

/// Tool cells relative to the controlled point.
fn tool_cells(t: &ToolGeometry, l: &Lattice) -> Vec<Cell> {
    let reach = (t.radius_mm / l.res).ceil() as i32 + 1;
    let top = ((t.length_mm / l.res - 1e-9).ceil() as i32).max(0);
    let mut out = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            let d2 = l.centre(i).powi(2) + l.centre(j).powi(2);
            if (i, j) == (0, 0) || d2 <= t.radius_mm * t.radius_mm + 1e-9 {
                for k in 0..=top {
                    out.push((i, j, k));
                }
            }
        }
    }
    out
}

fn grow(cells: &HashSet<Cell>, eps: i32) -> HashSet<Cell> {
    let mut out = HashSet::new();
    for &(x, y, z) in cells {
        for dx in -eps..=eps {
            for dy in -eps..=eps {
                for dz in -eps..=eps {
                    out.insert((x + dx, y + dy, z + dz));
                }
            }
        }
    }
    out
}

fn stamp(centres: &HashSet<Cell>, tool: &[Cell], eps: i32) -> HashSet<Cell> {
    let mut body = HashSet::new();
    for c in centres {
        for t in tool {
            body.insert((c.0 + t.0, c.1 + t.1, c.2 + t.2));
        }
    }
    grow(&body, eps)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    if a == 0 {
        b
    } else if b == 0 {
        a
    } else {
        a / gcd(a, b) * b
    }
}

/// Cells whose closed cube meets the segment between two cell centres.
///
/// The parameter step divides every half-integer crossing and is at most a
/// quarter voxel, so no crossing falls between samples.
fn walk(p0: Cell, p1: Cell) -> HashSet<Cell> {
    let d = [(p1.0 - p0.0) as i64, (p1.1 - p0.1) as i64, (p1.2 - p0.2) as i64];
    let a = [p0.0 as i64, p0.1 as i64, p0.2 as i64];
    let mut n = d.iter().fold(1, |acc, di| lcm(acc, 2 * di.abs()));
    let longest = d.iter().map(|x| x.abs()).max().unwrap_or(0);
    while n < 4 * longest {
        n *= 2;
    }
    let mut out = HashSet::new();
    for i in 0..=n {
        // coordinate * n = a * n + d * i; closed cells satisfy |x - c| <= 1/2.
        let ranges: Vec<(i64, i64)> = (0..3)
            .map(|k| {
                let x = a[k] * n + d[k] * i;
                let lo = (2 * x - n).div_euclid(2 * n) + i64::from((2 * x - n).rem_euclid(2 * n) != 0);
                let hi = (2 * x + n).div_euclid(2 * n);
                (lo, hi)
            })
            .collect();
        for x in ranges[0].0..=ranges[0].1 {
            for y in ranges[1].0..=ranges[1].1 {
                for z in ranges[2].0..=ranges[2].1 {
                    out.insert((x as i32, y as i32, z as i32));
                }
            }
        }
    }
    out
}

fn aabb_cells(p0: Cell, p1: Cell) -> HashSet<Cell> {
    let mut out = HashSet::new();
    for x in p0.0.min(p1.0)..=p0.0.max(p1.0) {
        for y in p0.1.min(p1.1)..=p0.1.max(p1.1) {
            for z in p0.2.min(p1.2)..=p0.2.max(p1.2) {
                out.insert((x, y, z));
            }
        }
    }
    out
}

/// Initial dense grid: margin-grown obstacles, then stock where free.
pub fn initial_grid(w: &WorkspaceTopology) -> Result<DenseGrid, OracleError> {
    let l = Lattice { res: w.grid_resolution_mm };
    let lim = &w.machine_limits;
    let lo = (l.first_at_or_above(lim.x[0]), l.first_at_or_above(lim.y[0]), l.first_at_or_above(lim.z[0]));
    let hi = (l.last_at_or_below(lim.x[1]), l.last_at_or_below(lim.y[1]), l.last_at_or_below(lim.z[1]));
    let mut grid = DenseGrid::new(lo, hi)?;
    let eps = eps_cells(w);
    if let Some(s) = &w.stock {
        for c in solid_cells(s, &l) {
            grid.set(c, OccupancyStatus::Stock);
        }
    }
    for o in &w.obstacles {
        for c in grow(&solid_cells(&o.shape, &l), eps) {
            grid.set(c, OccupancyStatus::Environment);
        }
    }
    Ok(grid)
}

fn eps_cells(w: &WorkspaceTopology) -> i32 {
    ((w.epsilon_mm / w.grid_resolution_mm - 1e-9).ceil() as i32).max(0)
}

/// Runs `cmds` from `start`, recording every forbidden contact and carrying on.
pub fn simulate(cmds: &[GCodeCommand], w: &WorkspaceTopology, start: &MachineState) -> Result<OracleRun, OracleError> {
    let l = Lattice { res: w.grid_resolution_mm };
    let eps = eps_cells(w);
    let initial_grid = initial_grid(w)?;
    let mut grid = initial_grid.clone();
    let tool_of = |id: ToolId| -> Result<Vec<Cell>, OracleError> {
        w.tools.get(&id).map(|t| tool_cells(t, &l)).ok_or(OracleError::UnknownTool(id))
    };

    let mut collisions = Vec::new();
    let mut pos = start.position;
    let mut tool = tool_of(start.active_tool)?;
    let mut held: HashSet<Cell> = stamp(&HashSet::from([l.cell_of(pos)]), &tool, eps);
    let rapid_forbidden = |s: OccupancyStatus| matches!(s, OccupancyStatus::Environment | OccupancyStatus::Stock);
    let feed_forbidden = |s: OccupancyStatus| s == OccupancyStatus::Environment;

    let hits = |grid: &DenseGrid, cells: &HashSet<Cell>, bad: &dyn Fn(OccupancyStatus) -> bool| -> BTreeSet<Voxel> {
        cells
            .iter()
            .map(|c| Voxel::new(c.0, c.1, c.2))
            .filter(|v| bad(grid.get(*v)))
            .collect()
    };

    let first = hits(&grid, &held, &rapid_forbidden);
    if !first.is_empty() {
        collisions.push(OracleCollision { step: None, source_line: 0, voxels: first });
    }
    for c in &held {
        grid.set(*c, OccupancyStatus::Tool);
    }

    for (step, cmd) in cmds.iter().enumerate() {
        let (swept, rapid) = match &cmd.kind {
            CommandKind::Passive => continue,
            CommandKind::ToolChange(id) => {
                tool = tool_of(*id)?;
                (stamp(&HashSet::from([l.cell_of(pos)]), &tool, eps), true)
            }
            CommandKind::Rapid | CommandKind::Linear => {
                let target = cmd.target.expect("motion target");
                let (a, b) = (l.cell_of(pos), l.cell_of(target));
                let rapid = cmd.kind == CommandKind::Rapid;
                let centres = if rapid { aabb_cells(a, b) } else { walk(a, b) };
                pos = target;
                (stamp(&centres, &tool, eps), rapid)
            }
        };
        let bad = hits(&grid, &swept, if rapid { &rapid_forbidden } else { &feed_forbidden });
        if !bad.is_empty() {
            collisions.push(OracleCollision { step: Some(step), source_line: cmd.source_line, voxels: bad });
        }
        if !rapid {
            for c in &swept {
                let v = Voxel::new(c.0, c.1, c.2);
                if grid.get(v) == OccupancyStatus::Stock {
                    grid.set(*c, OccupancyStatus::Empty);
                }
            }
        }
        for c in &held {
            if grid.get(Voxel::new(c.0, c.1, c.2)) == OccupancyStatus::Tool {
                grid.set(*c, OccupancyStatus::Empty);
            }
        }
        held = match &cmd.kind {
            CommandKind::ToolChange(_) => swept,
            _ => stamp(&HashSet::from([l.cell_of(pos)]), &tool, eps),
        };
        for c in &held {
            let v = Voxel::new(c.0, c.1, c.2);
            if grid.get(v) == OccupancyStatus::Empty {
                grid.set(*c, OccupancyStatus::Tool);
            }
        }
    }
    Ok(OracleRun { collisions, final_grid: grid, initial_grid })
}
