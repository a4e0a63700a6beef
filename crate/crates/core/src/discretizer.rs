//! Swept-volume footprints: `V_path = path ⊕ V_tool ⊕ B_ε`.
//!
//! Linear moves use the supercover of the segment between the discretized
//! endpoints; rapids use the full axis-aligned box between them, since the
//! controller is free to dogleg.

use num_rational::Ratio;
use serde::Serialize;

use crate::diag::Diagnostic;
use crate::gcode::{CommandKind, GCodeCommand};
use crate::geometry::{GridScale, Point3, Voxel, VoxelBox, TOL};
use crate::voxel_set::{dilate_chebyshev, minkowski_sum, sweep_prism, VoxelSet};
use crate::workspace::{ToolGeometry, ToolId, WorkspaceError, WorkspaceTopology};

/// A discretized tool: a disk cross-section stacked from the tip (z = 0) up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolVolume {
    pub disk: Vec<(i32, i32)>,
    /// Index of the topmost slice; slices are `0..=height`.
    pub height: i32,
}

impl ToolVolume {
    pub fn from_geometry(t: &ToolGeometry, g: GridScale) -> (ToolVolume, Option<Diagnostic>) {
        let r_cells = (t.radius_mm / g.resolution_mm).floor() as i32 + 1;
        let r2 = t.radius_mm * t.radius_mm;
        let mut disk = Vec::new();
        for i in -r_cells..=r_cells {
            for j in -r_cells..=r_cells {
                if i == 0 && j == 0 || g.to_mm(i).powi(2) + g.to_mm(j).powi(2) <= r2 + TOL {
                    disk.push((i, j));
                }
            }
        }
        disk.sort_unstable();
        let height = g.cells_ceil(t.length_mm);
        let diag = (t.radius_mm * 2.0 < g.resolution_mm)
            .then(|| Diagnostic::warning("tool radius below half a voxel; modelled as a single-voxel column"));
        (ToolVolume { disk, height }, diag)
    }

    pub fn to_voxels(&self) -> VoxelSet {
        self.disk
            .iter()
            .flat_map(|&(x, y)| (0..=self.height).map(move |z| Voxel::new(x, y, z)))
            .collect()
    }

    /// `points ⊕ V_tool ⊕ B_eps`.
    pub fn sweep(&self, points: &VoxelSet, eps: u32) -> VoxelSet {
        dilate_chebyshev(&sweep_prism(points, &self.disk, 0, self.height), eps)
    }

    /// Tool volume padded by `eps`, placed with its controlled point at `at`.
    pub fn placed(&self, at: Voxel, eps: u32) -> VoxelSet {
        self.sweep(&VoxelSet::singleton(at), eps)
    }
}

/// Voxels of the tool cylinder in tool-local coordinates, controlled point at the origin.
pub fn voxelize_tool(t: &ToolGeometry, g: GridScale) -> (VoxelSet, Option<Diagnostic>) {
    let (v, d) = ToolVolume::from_geometry(t, g);
    (v.to_voxels(), d)
}

/// All voxels in the box spanned by `p0` and `p1`.
pub fn path_box(p0: Voxel, p1: Voxel) -> VoxelSet {
    VoxelSet::from_box(&VoxelBox::spanning(p0, p1))
}

type Q = Ratio<i64>;

/// Supercover of the segment `p0 -> p1`: every voxel whose closed unit cell
/// (`[c - 1/2, c + 1/2]` per axis) the segment touches.
pub fn path_lin(p0: Voxel, p1: Voxel) -> VoxelSet {
    let a = p0.to_array().map(i64::from);
    let d = [0, 1, 2].map(|i| i64::from(p1.to_array()[i]) - a[i]);
    let mut out = VoxelSet::new();
    let mut prefix = [0i32; 3];
    supercover_axis(0, Q::from_integer(0), Q::from_integer(1), &a, &d, &mut prefix, &mut out);
    out
}

/// Enumerates cells along `axis` touched for `t in [t0, t1]`, recursing into
/// the sub-interval spent in each cell.
fn supercover_axis(axis: usize, t0: Q, t1: Q, a: &[i64; 3], d: &[i64; 3], prefix: &mut [i32; 3], out: &mut VoxelSet) {
    if axis == 3 {
        out.insert(Voxel::from(*prefix));
        return;
    }
    if d[axis] == 0 {
        prefix[axis] = a[axis] as i32;
        supercover_axis(axis + 1, t0, t1, a, d, prefix, out);
        return;
    }
    let half = Q::new(1, 2);
    let at = |t: Q| Q::from_integer(a[axis]) + Q::from_integer(d[axis]) * t;
    let (v0, v1) = (at(t0), at(t1));
    let (lo, hi) = if v0 <= v1 { (v0, v1) } else { (v1, v0) };
    let c_min = (lo - half).ceil().to_integer();
    let c_max = (hi + half).floor().to_integer();
    for c in c_min..=c_max {
        let ta = (Q::from_integer(c) - half - Q::from_integer(a[axis])) / Q::from_integer(d[axis]);
        let tb = (Q::from_integer(c) + half - Q::from_integer(a[axis])) / Q::from_integer(d[axis]);
        let (ta, tb) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        let s0 = ta.max(t0);
        let s1 = tb.min(t1);
        if s0 <= s1 {
            prefix[axis] = c as i32;
            supercover_axis(axis + 1, s0, s1, a, d, prefix, out);
        }
    }
}

/// Identifies the command a footprint was computed for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommandRef {
    pub source_line: usize,
    pub line_no: Option<u32>,
    pub label: Option<String>,
    pub text: String,
}

impl From<&GCodeCommand> for CommandRef {
    fn from(c: &GCodeCommand) -> Self {
        CommandRef { source_line: c.source_line, line_no: c.line_no, label: c.label.clone(), text: c.text.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweptFootprint {
    pub v_start: VoxelSet,
    pub v_final: VoxelSet,
    pub v_path: VoxelSet,
    pub command_ref: CommandRef,
    pub rapid: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum FootprintError {
    #[error("command at line {0} is not a motion")]
    NotMotion(usize),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

/// Footprint of a motion starting from `start` (mm) with `tool` active.
pub fn footprint_between(
    start: Point3,
    cmd: &GCodeCommand,
    tool: &ToolVolume,
    g: GridScale,
    eps: u32,
) -> Result<SweptFootprint, FootprintError> {
    let (Some(target), rapid) = (cmd.target, cmd.kind == CommandKind::Rapid) else {
        return Err(FootprintError::NotMotion(cmd.source_line));
    };
    if !cmd.is_motion() {
        return Err(FootprintError::NotMotion(cmd.source_line));
    }
    let p0 = g.point_to_grid(start);
    let p1 = g.point_to_grid(target);
    let path = if rapid { path_box(p0, p1) } else { path_lin(p0, p1) };
    Ok(SweptFootprint {
        v_start: tool.placed(p0, eps),
        v_final: tool.placed(p1, eps),
        v_path: tool.sweep(&path, eps),
        command_ref: CommandRef::from(cmd),
        rapid,
    })
}

/// Footprint of `cmd` executed from `state` in workspace `w`.
pub fn footprint(
    cmd: &GCodeCommand,
    state: &crate::gcode::MachineState,
    w: &WorkspaceTopology,
) -> Result<SweptFootprint, FootprintError> {
    let tool = tool_volume(w, state.active_tool)?;
    footprint_between(state.position, cmd, &tool, w.grid(), w.epsilon_voxels())
}

pub fn tool_volume(w: &WorkspaceTopology, id: ToolId) -> Result<ToolVolume, WorkspaceError> {
    Ok(ToolVolume::from_geometry(w.tool(id)?, w.grid()).0)
}

/// Literal `path ⊕ V_tool ⊕ B_eps` by pairwise sums; reference for small inputs.
pub fn footprint_literal(path: &VoxelSet, tool: &VoxelSet, eps: u32) -> VoxelSet {
    minkowski_sum(&minkowski_sum(path, tool), &crate::voxel_set::chebyshev_ball(eps))
}
