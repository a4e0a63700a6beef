//! Voxel-level collision verifier for 3-axis G-code.
//!
//! The workspace is discretized into a [`SpatialHeap`] and each motion is
//! checked as a separating conjunction against it. Refutations carry a
//! conflict bounding box that can be fed back to a toolpath generator.

pub mod diag;
pub mod discretizer;
pub mod driver;
pub mod feedback;
pub mod gcode;
pub mod geometry;
pub mod heap;
pub mod oracle;
pub mod prover;
pub mod voxel_set;
pub mod workspace;

pub use diag::{Diagnostic, Severity};
pub use driver::{run_loop, verify_once, Generator, LoopConfig, LoopTranscript, ProcessGenerator, ScriptedGenerator, Terminal};
pub use discretizer::{footprint, path_box, path_lin, voxelize_tool, CommandRef, SweptFootprint, ToolVolume};
pub use feedback::{render_signal, FeedbackSignal};
pub use gcode::{parse_program, CommandKind, GCodeCommand, MachineState, ParseError, ParsedProgram};
pub use geometry::{s_grid, Axis, GridScale, Point3, Shape, Voxel, VoxelBox};
pub use heap::{disjoint, disjoint_union, OccupancyStatus, SpatialHeap};
pub use oracle::{simulate, DenseGrid, OracleRun};
pub use prover::{prove_program, ConflictReport, ProofOutcome, ProofState, Prover, ProverError};
pub use voxel_set::{chebyshev_ball, dilate_chebyshev, minkowski_sum, VoxelSet};
pub use workspace::{
    build_initial_heap, emit_generator_context, ToolGeometry, ToolId, WorkspaceError, WorkspaceFragment,
    WorkspaceTopology,
};
