//! Symbolic execution of a command sequence over the spatial heap.
//!
//! Each motion is a triple `{P} C {Q}` whose precondition is a separating
//! conjunction between the requested footprint and the heap. The first
//! motion whose footprint cannot be joined halts the proof with a
//! [`ConflictReport`].

use serde::Serialize;
use thiserror::Error;

use crate::discretizer::{footprint_between, CommandRef, FootprintError, SweptFootprint, ToolVolume};
use crate::gcode::{CommandKind, GCodeCommand, MachineState};
use crate::geometry::{GridScale, Voxel, VoxelBox};
use crate::heap::{disjoint_union, OccupancyStatus, SpatialHeap};
use crate::voxel_set::VoxelSet;
use crate::workspace::{build_initial_heap, ToolId, WorkspaceError, WorkspaceTopology};

#[derive(Debug, Error)]
pub enum ProverError {
    #[error("unknown tool {tool} at line {line}")]
    UnknownTool { tool: ToolId, line: usize },
    #[error("prover invariant violated at line {line}: {what}")]
    Invariant { line: usize, what: String },
    #[error("frame precondition violated: {0} frame voxel(s) overlap the program or heap")]
    FrameOverlap(usize),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

impl From<FootprintError> for ProverError {
    fn from(e: FootprintError) -> Self {
        match e {
            FootprintError::NotMotion(line) => ProverError::Invariant { line, what: "footprint of non-motion".into() },
            FootprintError::Workspace(w) => ProverError::Workspace(w),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProofState {
    pub heap: SpatialHeap,
    pub machine: MachineState,
    /// Motions and tool changes verified so far.
    pub step_index: usize,
    /// Cells currently owned by `Tool`; mirrors the heap.
    pub tool_domain: VoxelSet,
}

/// Axis-aligned conflict bounds in both voxel and machine units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConflictBox {
    pub voxel: VoxelBox,
    /// `[[x_lo, x_hi], [y_lo, y_hi], [z_lo, z_hi]]` in mm, `index * resolution`.
    pub mm: [[f64; 2]; 3],
}

impl ConflictBox {
    pub fn new(voxel: VoxelBox, g: GridScale) -> Self {
        let mm = [0, 1, 2].map(|i| [g.to_mm(voxel.min.to_array()[i]), g.to_mm(voxel.max.to_array()[i])]);
        ConflictBox { voxel, mm }
    }
}

/// A spatial data race: the footprint of `command` claims owned cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ConflictReport {
    pub command: CommandRef,
    pub v_conflict: VoxelSet,
    pub conflicting_status: OccupancyStatus,
    pub b_conflict: ConflictBox,
    /// Labels of the neighbouring commands, for the regeneration window.
    pub window: (String, String),
    /// Motions verified before the fault.
    pub steps_verified: usize,
}

impl ConflictReport {
    fn new(command: CommandRef, partition: ConflictParts, g: GridScale, steps: usize) -> Self {
        let status = partition.most_severe();
        let v_conflict = partition.all;
        let bb = v_conflict.bounding_box().expect("conflict set is non-empty");
        let label = command.label.clone().unwrap_or_else(|| format!("line {}", command.source_line));
        ConflictReport {
            command,
            v_conflict,
            conflicting_status: status,
            b_conflict: ConflictBox::new(bb, g),
            window: (label.clone(), label),
            steps_verified: steps,
        }
    }
}

struct ConflictParts {
    all: VoxelSet,
    env: bool,
    stock: bool,
}

impl ConflictParts {
    fn most_severe(&self) -> OccupancyStatus {
        if self.env {
            OccupancyStatus::Environment
        } else if self.stock {
            OccupancyStatus::Stock
        } else {
            OccupancyStatus::Tool
        }
    }
}

/// Cells of `cells` whose status makes them forbidden; `own` tool cells are allowed.
fn forbidden(heap: &SpatialHeap, cells: &VoxelSet, own: &VoxelSet, stock_forbidden: bool) -> Option<ConflictParts> {
    let mut parts = ConflictParts { all: VoxelSet::new(), env: false, stock: false };
    for c in cells {
        let hit = match heap.status_of(*c) {
            OccupancyStatus::Environment => {
                parts.env = true;
                true
            }
            OccupancyStatus::Stock if stock_forbidden => {
                parts.stock = true;
                true
            }
            OccupancyStatus::Tool => !own.contains(c),
            _ => false,
        };
        if hit {
            parts.all.insert(*c);
        }
    }
    (!parts.all.is_empty()).then_some(parts)
}

/// What a verified step did to the heap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub source_line: usize,
    pub kind: &'static str,
    pub footprint_voxels: usize,
    pub stock_removed: usize,
}

fn check_start(fp: &SweptFootprint, state: &ProofState) -> Result<(), ProverError> {
    if state.tool_domain != fp.v_start {
        return Err(ProverError::Invariant {
            line: fp.command_ref.source_line,
            what: "tool domain differs from the footprint start volume".into(),
        });
    }
    Ok(())
}

fn move_tool(state: &mut ProofState, v_final: &VoxelSet) {
    let old = std::mem::take(&mut state.tool_domain);
    state.heap.release_in_place(&old);
    state
        .heap
        .alloc_in_place(v_final, OccupancyStatus::Tool)
        .expect("final volume lies in the verified footprint");
    state.tool_domain = v_final.clone();
}

/// Rapid rule: `V_path ∩ (C_env ∪ C_stock) = ∅`. On success the tool
/// vacates `V_start` and owns `V_final`.
pub fn check_g00(
    fp: &SweptFootprint,
    mut state: ProofState,
    g: GridScale,
) -> Result<Result<(ProofState, StepStats), ConflictReport>, ProverError> {
    check_start(fp, &state)?;
    if let Some(parts) = forbidden(&state.heap, &fp.v_path, &fp.v_start, true) {
        return Ok(Err(ConflictReport::new(fp.command_ref.clone(), parts, g, state.step_index)));
    }
    move_tool(&mut state, &fp.v_final);
    state.step_index += 1;
    let stats = StepStats {
        source_line: fp.command_ref.source_line,
        kind: "G00",
        footprint_voxels: fp.v_path.len(),
        stock_removed: 0,
    };
    Ok(Ok((state, stats)))
}

/// Linear rule: `V_path \ V_start ⊆ C_stock ∪ C_empty`. On success traversed
/// stock and the trailing volume become `Empty` and the tool owns `V_final`.
pub fn check_g01(
    fp: &SweptFootprint,
    mut state: ProofState,
    g: GridScale,
) -> Result<Result<(ProofState, StepStats), ConflictReport>, ProverError> {
    check_start(fp, &state)?;
    if let Some(parts) = forbidden(&state.heap, &fp.v_path, &fp.v_start, false) {
        return Ok(Err(ConflictReport::new(fp.command_ref.clone(), parts, g, state.step_index)));
    }
    let removed = state.heap.release_status_in_place(&fp.v_path, OccupancyStatus::Stock);
    move_tool(&mut state, &fp.v_final);
    state.step_index += 1;
    let stats = StepStats {
        source_line: fp.command_ref.source_line,
        kind: "G01",
        footprint_voxels: fp.v_path.len(),
        stock_removed: removed,
    };
    Ok(Ok((state, stats)))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProofOutcome {
    Verified { final_state: ProofState, steps: usize, stats: Vec<StepStats> },
    Refuted { conflict: ConflictReport, stats: Vec<StepStats> },
}

impl ProofOutcome {
    pub fn is_verified(&self) -> bool {
        matches!(self, ProofOutcome::Verified { .. })
    }

    pub fn conflict(&self) -> Option<&ConflictReport> {
        match self {
            ProofOutcome::Refuted { conflict, .. } => Some(conflict),
            _ => None,
        }
    }

    pub fn stats(&self) -> &[StepStats] {
        match self {
            ProofOutcome::Verified { stats, .. } | ProofOutcome::Refuted { stats, .. } => stats,
        }
    }
}

/// Per-step callback payload for instrumentation.
pub struct StepEvent<'a> {
    pub command: &'a GCodeCommand,
    pub footprint: Option<&'a SweptFootprint>,
    pub before: &'a ProofState,
    pub after: &'a ProofState,
    pub stats: &'a StepStats,
}

/// Proves command sequences against one workspace.
pub struct Prover<'w> {
    workspace: &'w WorkspaceTopology,
    grid: GridScale,
    eps: u32,
}

impl<'w> Prover<'w> {
    pub fn new(workspace: &'w WorkspaceTopology) -> Self {
        Prover { workspace, grid: workspace.grid(), eps: workspace.epsilon_voxels() }
    }

    pub fn workspace(&self) -> &WorkspaceTopology {
        self.workspace
    }

    pub fn tool(&self, id: ToolId, line: usize) -> Result<ToolVolume, ProverError> {
        let geom = self.workspace.tool(id).map_err(|_| ProverError::UnknownTool { tool: id, line })?;
        Ok(ToolVolume::from_geometry(geom, self.grid).0)
    }

    /// Workspace heap with the padded tool allocated at `start`. A start
    /// volume that cannot be allocated is refuted at a synthetic line 0.
    pub fn initial_state(&self, start: MachineState) -> Result<Result<ProofState, ConflictReport>, ProverError> {
        self.initial_state_on(build_initial_heap(self.workspace), start)
    }

    pub fn initial_state_on(
        &self,
        heap: SpatialHeap,
        start: MachineState,
    ) -> Result<Result<ProofState, ConflictReport>, ProverError> {
        let tool = self.tool(start.active_tool, 0)?;
        let at = self.grid.point_to_grid(start.position);
        let volume = tool.placed(at, self.eps);
        let command = CommandRef {
            source_line: 0,
            line_no: None,
            label: None,
            text: format!(
                "(start position X{} Y{} Z{} with {})",
                start.position.x, start.position.y, start.position.z, start.active_tool
            ),
        };
        let mut state = ProofState { heap, machine: start, step_index: 0, tool_domain: VoxelSet::new() };
        if let Some(parts) = forbidden(&state.heap, &volume, &VoxelSet::new(), true) {
            return Ok(Err(ConflictReport::new(command, parts, self.grid, 0)));
        }
        move_tool(&mut state, &volume);
        Ok(Ok(state))
    }

    /// Footprint of `cmd` from the machine state in `state`.
    pub fn footprint(&self, cmd: &GCodeCommand, machine: &MachineState) -> Result<SweptFootprint, ProverError> {
        let tool = self.tool(machine.active_tool, cmd.source_line)?;
        Ok(footprint_between(machine.position, cmd, &tool, self.grid, self.eps)?)
    }

    /// One step. Passive commands pass through unchanged.
    pub fn step(
        &self,
        cmd: &GCodeCommand,
        state: ProofState,
    ) -> Result<Result<(ProofState, Option<StepStats>, Option<SweptFootprint>), ConflictReport>, ProverError> {
        match &cmd.kind {
            CommandKind::Passive => Ok(Ok((state, None, None))),
            CommandKind::ToolChange(id) => self.tool_change(cmd, *id, state).map(|r| r.map(|(s, st)| (s, Some(st), None))),
            CommandKind::Rapid | CommandKind::Linear => {
                let fp = self.footprint(cmd, &state.machine)?;
                let target = cmd.target.expect("motion commands carry targets");
                let checked = if fp.rapid {
                    check_g00(&fp, state, self.grid)?
                } else {
                    check_g01(&fp, state, self.grid)?
                };
                Ok(checked.map(|(mut s, st)| {
                    s.machine.position = target;
                    (s, Some(st), Some(fp))
                }))
            }
        }
    }

    /// The new tool volume must be allocatable where the old one stood.
    fn tool_change(
        &self,
        cmd: &GCodeCommand,
        id: ToolId,
        mut state: ProofState,
    ) -> Result<Result<(ProofState, StepStats), ConflictReport>, ProverError> {
        let tool = self.tool(id, cmd.source_line)?;
        let at = self.grid.point_to_grid(state.machine.position);
        let volume = tool.placed(at, self.eps);
        if let Some(parts) = forbidden(&state.heap, &volume, &state.tool_domain, true) {
            return Ok(Err(ConflictReport::new(CommandRef::from(cmd), parts, self.grid, state.step_index)));
        }
        move_tool(&mut state, &volume);
        state.machine.active_tool = id;
        state.step_index += 1;
        let stats =
            StepStats { source_line: cmd.source_line, kind: "T", footprint_voxels: volume.len(), stock_removed: 0 };
        Ok(Ok((state, stats)))
    }

    pub fn prove(&self, cmds: &[GCodeCommand], initial: ProofState) -> Result<ProofOutcome, ProverError> {
        self.prove_observed(cmds, initial, |_| {})
    }

    /// As [`Prover::prove`], calling `observer` after every verified step.
    pub fn prove_observed(
        &self,
        cmds: &[GCodeCommand],
        initial: ProofState,
        mut observer: impl FnMut(&StepEvent<'_>),
    ) -> Result<ProofOutcome, ProverError> {
        let mut state = initial;
        let mut stats = Vec::new();
        for (i, cmd) in cmds.iter().enumerate() {
            let before = matches!(cmd.kind, CommandKind::Passive).then(|| None).unwrap_or_else(|| Some(state.clone()));
            match self.step(cmd, state)? {
                Ok((next, st, fp)) => {
                    if let (Some(st), Some(before)) = (st, before) {
                        observer(&StepEvent { command: cmd, footprint: fp.as_ref(), before: &before, after: &next, stats: &st });
                        stats.push(st);
                    }
                    state = next;
                }
                Err(mut conflict) => {
                    conflict.window = regeneration_window(cmds, i);
                    return Ok(ProofOutcome::Refuted { conflict, stats });
                }
            }
        }
        let steps = state.step_index;
        Ok(ProofOutcome::Verified { final_state: state, steps, stats })
    }
}

/// Labels of the commands immediately before and after index `i`.
fn regeneration_window(cmds: &[GCodeCommand], i: usize) -> (String, String) {
    let before = if i > 0 { &cmds[i - 1] } else { &cmds[i] };
    let after = cmds.get(i + 1).unwrap_or(&cmds[i]);
    (before.display_label(), after.display_label())
}

/// Parses nothing: proves already-parsed commands from a start state.
/// A start-volume conflict comes back as `Refuted` with no steps.
pub fn prove_program(
    cmds: &[GCodeCommand],
    start: MachineState,
    w: &WorkspaceTopology,
) -> Result<ProofOutcome, ProverError> {
    let prover = Prover::new(w);
    match prover.initial_state(start)? {
        Ok(state) => prover.prove(cmds, state),
        Err(conflict) => Ok(ProofOutcome::Refuted { conflict, stats: Vec::new() }),
    }
}

/// Every footprint the program could request, following the parsed targets
/// and tool changes regardless of verdict.
pub fn program_footprints(
    cmds: &[GCodeCommand],
    start: &MachineState,
    w: &WorkspaceTopology,
) -> Result<VoxelSet, ProverError> {
    let prover = Prover::new(w);
    let mut machine = start.clone();
    let mut all = prover.tool(machine.active_tool, 0)?.placed(w.grid().point_to_grid(machine.position), w.epsilon_voxels());
    for cmd in cmds {
        match &cmd.kind {
            CommandKind::Rapid | CommandKind::Linear => {
                let fp = prover.footprint(cmd, &machine)?;
                all.extend(fp.v_path);
                machine.position = cmd.target.expect("motion target");
            }
            CommandKind::ToolChange(id) => {
                machine.active_tool = *id;
                let at = w.grid().point_to_grid(machine.position);
                all.extend(prover.tool(*id, cmd.source_line)?.placed(at, w.epsilon_voxels()));
            }
            CommandKind::Passive => {}
        }
    }
    Ok(all)
}

/// Executable frame rule: proves the program with `extra_env` added as
/// `Environment`. `extra_env` must miss every footprint and the initial heap.
pub fn frame_check(
    cmds: &[GCodeCommand],
    start: MachineState,
    w: &WorkspaceTopology,
    extra_env: &VoxelSet,
) -> Result<ProofOutcome, ProverError> {
    let prover = Prover::new(w);
    let base = build_initial_heap(w);
    let footprints = program_footprints(cmds, &start, w)?;
    let overlap = extra_env.iter().filter(|c| footprints.contains(c) || base.owns(c)).count();
    if overlap > 0 {
        return Err(ProverError::FrameOverlap(overlap));
    }
    let frame = SpatialHeap::new().alloc(extra_env, OccupancyStatus::Environment).expect("fresh heap");
    let heap = disjoint_union(&base, &frame).map_err(|f| ProverError::FrameOverlap(f.intersection.len()))?;
    match prover.initial_state_on(heap, start)? {
        Ok(state) => prover.prove(cmds, state),
        Err(conflict) => Ok(ProofOutcome::Refuted { conflict, stats: Vec::new() }),
    }
}

/// Cell in the heap bounds closest to `v`; used when placing frames.
pub fn clamp_to(b: &VoxelBox, v: Voxel) -> Voxel {
    Voxel::new(v.x.clamp(b.min.x, b.max.x), v.y.clamp(b.min.y, b.max.y), v.z.clamp(b.min.z, b.max.z))
}
