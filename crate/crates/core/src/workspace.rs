//! Workspace description: machine limits, fixtures, stock and tools, plus its
//! discretization into the initial spatial heap and the generator context text.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::diag::Diagnostic;
use crate::geometry::{s_grid, Axis, GridScale, Point3, Shape, Voxel, VoxelBox, TOL};
use crate::heap::{OccupancyStatus, SpatialHeap};
use crate::voxel_set::{dilate_chebyshev, VoxelSet};

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("cannot read {path}: {cause}")]
    Io { path: String, cause: std::io::Error },
    #[error("malformed workspace document: {0}")]
    Parse(serde_json::Error),
    #[error("invalid workspace: {0}")]
    Validation(String),
    #[error("unknown tool {0}")]
    UnknownTool(ToolId),
}

impl From<serde_json::Error> for WorkspaceError {
    fn from(e: serde_json::Error) -> Self {
        WorkspaceError::Parse(e)
    }
}

/// Tool-table key, written `T01` in documents and programs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToolId(pub u32);

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{:02}", self.0)
    }
}

impl FromStr for ToolId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix(['T', 't']).unwrap_or(s);
        digits.parse::<u32>().map(ToolId).map_err(|_| format!("invalid tool id {s:?}"))
    }
}

impl Serialize for ToolId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ToolId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Cylinder along +Z whose controlled point is the centre of the tip face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolGeometry {
    pub radius_mm: f64,
    pub length_mm: f64,
    #[serde(default = "default_tool_kind")]
    pub kind: String,
}

fn default_tool_kind() -> String {
    "Endmill".to_string()
}

impl ToolGeometry {
    pub fn new(radius_mm: f64, length_mm: f64) -> Self {
        ToolGeometry { radius_mm, length_mm, kind: default_tool_kind() }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineLimits {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl MachineLimits {
    pub fn axis(&self, a: Axis) -> [f64; 2] {
        match a {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    fn contains_box(&self, lo: [f64; 3], hi: [f64; 3]) -> bool {
        Axis::ALL.iter().all(|a| {
            let [min, max] = self.axis(*a);
            lo[a.index()] >= min - TOL && hi[a.index()] <= max + TOL
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub label: String,
    /// Provenance shown in the generator context, e.g. `CAD Feature #006`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceTopology {
    pub machine_limits: MachineLimits,
    pub grid_resolution_mm: f64,
    pub epsilon_mm: f64,
    pub safe_z_mm: f64,
    /// Tool tip position before the first command; see [`WorkspaceTopology::home`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_mm: Option<[f64; 3]>,
    pub tools: BTreeMap<ToolId, ToolGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stock: Option<Shape>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

/// Obstacles produced by the CAD extractor, without machine limits or tools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceFragment {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(flatten)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

pub fn load_workspace(path: impl AsRef<Path>) -> Result<WorkspaceTopology, WorkspaceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|cause| WorkspaceError::Io { path: path.display().to_string(), cause })?;
    WorkspaceTopology::from_json_str(&text)
}

pub fn load_fragment(path: impl AsRef<Path>) -> Result<WorkspaceFragment, WorkspaceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|cause| WorkspaceError::Io { path: path.display().to_string(), cause })?;
    Ok(serde_json::from_str(&text)?)
}

impl WorkspaceTopology {
    pub fn from_json_str(text: &str) -> Result<Self, WorkspaceError> {
        let w: WorkspaceTopology = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("workspace serializes")
    }

    pub fn validate(&self) -> Result<(), WorkspaceError> {
        let bad = |m: String| Err(WorkspaceError::Validation(m));
        for a in Axis::ALL {
            let [lo, hi] = self.machine_limits.axis(a);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("machine limit on {a:?} must satisfy min < max"));
            }
        }
        if !(self.grid_resolution_mm.is_finite() && self.grid_resolution_mm > 0.0) {
            return bad("grid_resolution_mm must be positive".into());
        }
        if !(self.epsilon_mm.is_finite() && self.epsilon_mm >= 0.0) {
            return bad("epsilon_mm must be non-negative".into());
        }
        if !self.safe_z_mm.is_finite() {
            return bad("safe_z_mm must be finite".into());
        }
        if let Some(h) = self.home_mm {
            if !self.machine_limits.contains_box(h, h) {
                return bad("home_mm lies outside machine limits".into());
            }
        }
        let g = self.grid();
        for a in Axis::ALL {
            let [lo, hi] = self.machine_limits.axis(a);
            if g.center_range(lo, hi).is_none() {
                return bad(format!("machine limit on {a:?} is narrower than one voxel"));
            }
        }
        if self.tools.is_empty() {
            return bad("tool table is empty".into());
        }
        for (id, t) in &self.tools {
            if !(t.radius_mm.is_finite() && t.radius_mm > 0.0 && t.length_mm.is_finite() && t.length_mm > 0.0) {
                return bad(format!("tool {id} must have positive radius and length"));
            }
        }
        if let Some(stock) = &self.stock {
            stock.check().or_else(|m| bad(format!("stock: {m}")))?;
            let (lo, hi) = stock.aabb();
            if !self.machine_limits.contains_box(lo, hi) {
                return bad("stock extends beyond machine limits".into());
            }
        }
        let mut labels = std::collections::BTreeSet::new();
        for o in &self.obstacles {
            if !labels.insert(o.label.as_str()) {
                return bad(format!("duplicate obstacle label {:?}", o.label));
            }
            o.shape.check().or_else(|m| bad(format!("obstacle {:?}: {m}", o.label)))?;
            let (lo, hi) = o.shape.aabb();
            if !self.machine_limits.contains_box(lo, hi) {
                return bad(format!("obstacle {:?} extends beyond machine limits", o.label));
            }
        }
        Ok(())
    }

    /// Center-sampled discretization needs at least one voxel of margin to be sound.
    pub fn margin_diagnostic(&self) -> Option<Diagnostic> {
        (self.epsilon_mm + TOL < self.grid_resolution_mm).then(|| {
            Diagnostic::warning(format!(
                "epsilon_mm ({}) is smaller than grid_resolution_mm ({}); sub-voxel discretization error is not covered",
                self.epsilon_mm, self.grid_resolution_mm
            ))
        })
    }

    pub fn grid(&self) -> GridScale {
        GridScale::new(self.grid_resolution_mm)
    }

    /// Margin in voxels, `ceil(epsilon / resolution)`.
    pub fn epsilon_voxels(&self) -> u32 {
        self.grid().cells_ceil(self.epsilon_mm) as u32
    }

    /// Voxels whose centres lie inside the machine limits.
    pub fn machine_box(&self) -> VoxelBox {
        let g = self.grid();
        let r = |a: Axis| {
            let [lo, hi] = self.machine_limits.axis(a);
            g.center_range(lo, hi).expect("validated machine limits")
        };
        let (x, y, z) = (r(Axis::X), r(Axis::Y), r(Axis::Z));
        VoxelBox::new(Voxel::new(x.0, y.0, z.0), Voxel::new(x.1, y.1, z.1))
    }

    pub fn tool(&self, id: ToolId) -> Result<&ToolGeometry, WorkspaceError> {
        self.tools.get(&id).ok_or(WorkspaceError::UnknownTool(id))
    }

    /// Start position: `home_mm`, or the XY centre of the limits at safe Z.
    pub fn home(&self) -> Point3 {
        match self.home_mm {
            Some([x, y, z]) => Point3::new(x, y, z),
            None => {
                let mid = |[lo, hi]: [f64; 2]| (lo + hi) / 2.0;
                Point3::new(mid(self.machine_limits.x), mid(self.machine_limits.y), self.safe_z_mm)
            }
        }
    }

    /// Lowest-numbered tool; the active tool before any tool change.
    pub fn default_tool(&self) -> ToolId {
        *self.tools.keys().next().expect("validated non-empty tool table")
    }

    /// Appends fragment obstacles and re-validates against this workspace's limits.
    pub fn merge_fragment(&self, fragment: &WorkspaceFragment) -> Result<WorkspaceTopology, WorkspaceError> {
        let mut merged = self.clone();
        merged.obstacles.extend(fragment.obstacles.iter().cloned());
        merged.validate()?;
        Ok(merged)
    }
}

/// Voxels whose centres lie inside or on `shape`.
///
/// Parts thinner than one voxel snap to the nearest voxel layer so that no
/// solid disappears from the heap; such cases come back with a warning.
pub fn discretize_shape(shape: &Shape, g: GridScale) -> (VoxelSet, Option<Diagnostic>) {
    let mut thin = shape.is_degenerate();
    let mut axis_range = |lo: f64, hi: f64| match g.center_range(lo, hi) {
        Some(r) => r,
        None => {
            thin = true;
            let mid = s_grid((lo + hi) / 2.0, g);
            (mid, mid)
        }
    };
    let mut out = VoxelSet::new();
    match shape {
        Shape::Box { min, max } => {
            let rx = axis_range(min[0], max[0]);
            let ry = axis_range(min[1], max[1]);
            let rz = axis_range(min[2], max[2]);
            let b = VoxelBox::new(Voxel::new(rx.0, ry.0, rz.0), Voxel::new(rx.1, ry.1, rz.1));
            out = VoxelSet::from_box(&b);
        }
        Shape::Cylinder { center, axis, radius, height } => {
            let a = axis.index();
            let (lo, hi) = axis_range(center[a] - height / 2.0, center[a] + height / 2.0);
            let (u, v) = axis.cross_axes();
            let disk = disk_cells(center[u.index()], center[v.index()], *radius, g);
            if *radius * 2.0 < g.resolution_mm {
                thin = true;
            }
            for k in lo..=hi {
                for &(i, j) in &disk {
                    let mut c = [0i32; 3];
                    c[a] = k;
                    c[u.index()] = i;
                    c[v.index()] = j;
                    out.insert(Voxel::from(c));
                }
            }
        }
        Shape::Sphere { center, radius } => {
            let r2 = radius * radius;
            let ix = index_span(center[0], *radius, g);
            let iy = index_span(center[1], *radius, g);
            let iz = index_span(center[2], *radius, g);
            for i in ix.0..=ix.1 {
                for j in iy.0..=iy.1 {
                    for k in iz.0..=iz.1 {
                        let d2 = (g.to_mm(i) - center[0]).powi(2)
                            + (g.to_mm(j) - center[1]).powi(2)
                            + (g.to_mm(k) - center[2]).powi(2);
                        if d2 <= r2 + TOL {
                            out.insert(Voxel::new(i, j, k));
                        }
                    }
                }
            }
            out.insert(Voxel::new(s_grid(center[0], g), s_grid(center[1], g), s_grid(center[2], g)));
            if *radius * 2.0 < g.resolution_mm {
                thin = true;
            }
        }
    }
    let warning = thin.then(|| Diagnostic::warning("shape thinner than one voxel snapped to the nearest voxel layer"));
    (out, warning)
}

fn index_span(c: f64, r: f64, g: GridScale) -> (i32, i32) {
    (((c - r) / g.resolution_mm).floor() as i32 - 1, ((c + r) / g.resolution_mm).ceil() as i32 + 1)
}

/// Centre-sampled disk in a plane, always including the cell under the centre.
fn disk_cells(cu: f64, cv: f64, radius: f64, g: GridScale) -> Vec<(i32, i32)> {
    let r2 = radius * radius;
    let (u0, u1) = index_span(cu, radius, g);
    let (v0, v1) = index_span(cv, radius, g);
    let mut cells = Vec::new();
    for i in u0..=u1 {
        for j in v0..=v1 {
            if (g.to_mm(i) - cu).powi(2) + (g.to_mm(j) - cv).powi(2) <= r2 + TOL {
                cells.push((i, j));
            }
        }
    }
    let centre = (s_grid(cu, g), s_grid(cv, g));
    if !cells.contains(&centre) {
        cells.push(centre);
    }
    cells
}

/// Initial heap: ε-dilated obstacles as `Environment`, the remaining stock as
/// `Stock`, everything else unmapped. Cells outside the machine box are not
/// stored; they read as `Environment` through the heap bounds.
pub fn build_initial_heap(w: &WorkspaceTopology) -> SpatialHeap {
    build_initial_heap_with_diagnostics(w).0
}

pub fn build_initial_heap_with_diagnostics(w: &WorkspaceTopology) -> (SpatialHeap, Vec<Diagnostic>) {
    let g = w.grid();
    let bounds = w.machine_box();
    let eps = w.epsilon_voxels();
    let mut diags = Vec::new();

    let mut env = VoxelSet::new();
    for o in &w.obstacles {
        let (raw, warn) = discretize_shape(&o.shape, g);
        if let Some(d) = warn {
            diags.push(Diagnostic::warning(format!("obstacle {:?}: {}", o.label, d.message)));
        }
        env.extend(dilate_chebyshev(&raw, eps).into_iter().filter(|c| bounds.contains(*c)));
    }
    let mut stock = VoxelSet::new();
    if let Some(s) = &w.stock {
        let (raw, warn) = discretize_shape(s, g);
        if let Some(d) = warn {
            diags.push(Diagnostic::warning(format!("stock: {}", d.message)));
        }
        stock.extend(raw.into_iter().filter(|c| bounds.contains(*c) && !env.contains(c)));
    }

    let mut heap = SpatialHeap::with_bounds(bounds);
    heap.alloc_in_place(&env, OccupancyStatus::Environment).expect("fresh heap");
    heap.alloc_in_place(&stock, OccupancyStatus::Stock).expect("stock excludes environment");
    (heap, diags)
}

/// Obstacle bounds as reported to the generator: the shape's box grown by the
/// effective voxel margin, clipped to the machine limits.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBounds {
    pub label: String,
    pub source: Option<String>,
    /// Per axis `(value, clamped_to_machine_limit)`.
    pub lo: [(f64, bool); 3],
    pub hi: [(f64, bool); 3],
}

pub fn padded_obstacle_bounds(w: &WorkspaceTopology) -> Vec<PaddedBounds> {
    let pad = f64::from(w.epsilon_voxels()) * w.grid_resolution_mm;
    let mut out: Vec<PaddedBounds> = w
        .obstacles
        .iter()
        .map(|o| {
            let (lo, hi) = o.shape.aabb();
            let mut plo = [(0.0, false); 3];
            let mut phi = [(0.0, false); 3];
            for a in Axis::ALL {
                let [mlo, mhi] = w.machine_limits.axis(a);
                let i = a.index();
                let l = lo[i] - pad;
                let h = hi[i] + pad;
                plo[i] = if l <= mlo + TOL { (mlo, true) } else { (l, false) };
                phi[i] = if h >= mhi - TOL { (mhi, true) } else { (h, false) };
            }
            PaddedBounds { label: o.label.clone(), source: o.source.clone(), lo: plo, hi: phi }
        })
        .collect();
    out.sort_by(|a, b| a.label.cmp(&b.label));
    out
}

/// Machine limit values: integers without a fractional part.
fn fmt_limit(v: f64) -> String {
    if v == v.trunc() {
        format!("{v:.0}")
    } else {
        trim_decimal(format!("{v:.3}"))
    }
}

/// At least one decimal, at most three.
fn fmt_mm(v: f64) -> String {
    trim_decimal(format!("{v:.3}"))
}

fn trim_decimal(mut s: String) -> String {
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    s
}

fn fmt_bound(v: (f64, bool), lower: bool) -> String {
    if v.1 {
        return fmt_limit(v.0);
    }
    // round outward so the printed box never shrinks
    let scaled = v.0 * 1000.0;
    let r = if lower { (scaled + TOL * 1e3).floor() } else { (scaled - TOL * 1e3).ceil() };
    fmt_mm(r / 1000.0)
}

/// The structured constraint block injected ahead of the user's intent.
pub fn emit_generator_context(w: &WorkspaceTopology, active_tool: ToolId) -> Result<String, WorkspaceError> {
    let tool = w.tool(active_tool)?;
    let mut s = String::new();
    let axis_pair = |lo: &str, hi: &str, name: &str| format!("{name} ∈ [{lo}, {hi}]");
    s.push_str("System Constraints:\n");
    let lim: Vec<String> = Axis::ALL
        .iter()
        .zip(["X", "Y", "Z"])
        .map(|(a, n)| {
            let [lo, hi] = w.machine_limits.axis(*a);
            axis_pair(&fmt_limit(lo), &fmt_limit(hi), n)
        })
        .collect();
    s.push_str(&format!("MACHINE_LIMITS: {}\n", lim.join(", ")));
    s.push_str(&format!("ACTIVE_TOOL: {} ({}, Radius={}mm)\n", active_tool, tool.kind, fmt_mm(tool.radius_mm)));
    s.push_str(&format!("SAFE_Z_RETRACT: Z{}\n", fmt_mm(w.safe_z_mm)));
    if let Some(stock) = &w.stock {
        let (lo, hi) = stock.aabb();
        let parts: Vec<String> =
            (0..3).zip(["X", "Y", "Z"]).map(|(i, n)| axis_pair(&fmt_mm(lo[i]), &fmt_mm(hi[i]), n)).collect();
        s.push_str(&format!("STOCK_BOUNDS: {}\n", parts.join(", ")));
    }
    s.push_str(&format!("OBSTACLE_BOUNDS (Pre-expanded via B_ε margin, ε={}mm):\n", fmt_mm(w.epsilon_mm)));
    let padded = padded_obstacle_bounds(w);
    if padded.is_empty() {
        s.push_str("- (none)\n");
    }
    for p in padded {
        let parts: Vec<String> = (0..3)
            .zip(["X", "Y", "Z"])
            .map(|(i, n)| axis_pair(&fmt_bound(p.lo[i], true), &fmt_bound(p.hi[i], false), n))
            .collect();
        match &p.source {
            Some(src) => s.push_str(&format!("- {} (Derived from {}): {}\n", p.label, src, parts.join(", "))),
            None => s.push_str(&format!("- {}: {}\n", p.label, parts.join(", "))),
        }
    }
    s.push_str("Directive: Route all G00 rapid movements to strictly avoid the OBSTACLE_BOUNDS.\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn clamp_workspace(eps: f64) -> WorkspaceTopology {
        WorkspaceTopology {
            machine_limits: MachineLimits { x: [0.0, 500.0], y: [0.0, 500.0], z: [0.0, 500.0] },
            grid_resolution_mm: 1.0,
            epsilon_mm: eps,
            safe_z_mm: 50.0,
            home_mm: None,
            tools: [(ToolId(1), ToolGeometry::new(5.0, 40.0))].into_iter().collect(),
            stock: None,
            obstacles: vec![Obstacle {
                label: "Clamp_1".into(),
                source: Some("CAD Feature #006".into()),
                shape: Shape::Box { min: [10.0, 10.0, 0.0], max: [30.0, 30.0, 20.0] },
            }],
        }
    }

    #[test]
    fn tool_id_parsing() {
        assert_eq!("T01".parse::<ToolId>().unwrap(), ToolId(1));
        assert_eq!("t2".parse::<ToolId>().unwrap(), ToolId(2));
        assert_eq!(ToolId(3).to_string(), "T03");
        assert!("Tx".parse::<ToolId>().is_err());
    }

    #[test]
    fn json_round_trip_preserves_fields() {
        let w = clamp_workspace(2.0);
        let back = WorkspaceTopology::from_json_str(&w.to_json_pretty()).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.obstacles.len(), 1);
    }

    #[test]
    fn obstacle_outside_limits_is_rejected() {
        let mut w = clamp_workspace(2.0);
        w.obstacles[0].shape = Shape::Box { min: [490.0, 0.0, 0.0], max: [510.0, 10.0, 10.0] };
        assert!(matches!(w.validate(), Err(WorkspaceError::Validation(_))));
    }

    #[test]
    fn non_positive_resolution_is_rejected() {
        let mut w = clamp_workspace(2.0);
        w.grid_resolution_mm = 0.0;
        assert!(w.validate().is_err());
        w.grid_resolution_mm = -1.0;
        assert!(w.validate().is_err());
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(WorkspaceTopology::from_json_str("{\"machine_limits\": 3"), Err(WorkspaceError::Parse(_))));
    }

    #[test]
    fn unit_box_at_unit_resolution() {
        let (s, warn) = discretize_shape(&Shape::Box { min: [0.0; 3], max: [1.0; 3] }, GridScale::new(1.0));
        assert!(warn.is_none());
        let expected: VoxelSet = (0..2)
            .flat_map(|x| (0..2).flat_map(move |y| (0..2).map(move |z| Voxel::new(x, y, z))))
            .collect();
        assert_eq!(s, expected);
    }

    #[test]
    fn zero_radius_sphere_is_its_centre_voxel() {
        let (s, warn) = discretize_shape(&Shape::Sphere { center: [3.2, -1.0, 7.6], radius: 0.0 }, GridScale::new(1.0));
        assert_eq!(s, VoxelSet::singleton(Voxel::new(3, -1, 8)));
        assert!(warn.is_some());
    }

    #[test]
    fn flat_box_keeps_a_layer() {
        let (s, warn) =
            discretize_shape(&Shape::Box { min: [0.0, 0.0, 2.2], max: [2.0, 2.0, 2.4] }, GridScale::new(1.0));
        assert_eq!(s.len(), 9);
        assert!(s.iter().all(|v| v.z == 2));
        assert!(warn.is_some());
    }

    #[test]
    fn empty_obstacle_list_builds_empty_heap() {
        let mut w = clamp_workspace(2.0);
        w.obstacles.clear();
        let h = build_initial_heap(&w);
        assert!(h.is_empty());
        assert_eq!(h.status_of(Voxel::new(1, 1, 1)), OccupancyStatus::Empty);
        assert_eq!(h.status_of(Voxel::new(-1, 1, 1)), OccupancyStatus::Environment);
    }

    #[test]
    fn padded_clamp_environment_bounds() {
        let w = clamp_workspace(2.0);
        let h = build_initial_heap(&w);
        let env = h.domain_of(OccupancyStatus::Environment);
        let b = env.bounding_box().unwrap();
        // the Z floor is clipped at the machine minimum
        assert_eq!(b, VoxelBox::new(Voxel::new(8, 8, 0), Voxel::new(32, 32, 22)));
        assert_eq!(env.len(), 25 * 25 * 23);
    }

    #[test]
    fn environment_wins_over_stock() {
        let mut w = clamp_workspace(1.0);
        w.stock = Some(Shape::Box { min: [0.0, 0.0, 0.0], max: [15.0, 15.0, 5.0] });
        let h = build_initial_heap(&w);
        assert_eq!(h.status_of(Voxel::new(12, 12, 3)), OccupancyStatus::Environment);
        assert_eq!(h.status_of(Voxel::new(9, 9, 3)), OccupancyStatus::Environment);
        assert_eq!(h.status_of(Voxel::new(8, 8, 3)), OccupancyStatus::Stock);
    }

    #[test]
    fn context_with_zero_margin_reports_raw_bounds() {
        let w = clamp_workspace(0.0);
        let doc = emit_generator_context(&w, ToolId(1)).unwrap();
        assert!(doc.contains("- Clamp_1 (Derived from CAD Feature #006): X ∈ [10.0, 30.0], Y ∈ [10.0, 30.0], Z ∈ [0, 20.0]"));
    }

    #[test]
    fn context_unknown_tool() {
        let w = clamp_workspace(2.0);
        assert!(matches!(emit_generator_context(&w, ToolId(7)), Err(WorkspaceError::UnknownTool(ToolId(7)))));
    }

    #[test]
    fn context_lists_obstacles_in_label_order() {
        let mut w = clamp_workspace(2.0);
        w.obstacles.insert(
            0,
            Obstacle {
                label: "Vise".into(),
                source: None,
                shape: Shape::Box { min: [100.0, 100.0, 0.0], max: [150.5, 120.25, 30.0] },
            },
        );
        let doc = emit_generator_context(&w, ToolId(1)).unwrap();
        let expected = "\
System Constraints:
MACHINE_LIMITS: X ∈ [0, 500], Y ∈ [0, 500], Z ∈ [0, 500]
ACTIVE_TOOL: T01 (Endmill, Radius=5.0mm)
SAFE_Z_RETRACT: Z50.0
OBSTACLE_BOUNDS (Pre-expanded via B_ε margin, ε=2.0mm):
- Clamp_1 (Derived from CAD Feature #006): X ∈ [8.0, 32.0], Y ∈ [8.0, 32.0], Z ∈ [0, 22.0]
- Vise: X ∈ [98.0, 152.5], Y ∈ [98.0, 122.25], Z ∈ [0, 32.0]
Directive: Route all G00 rapid movements to strictly avoid the OBSTACLE_BOUNDS.
";
        assert_eq!(doc, expected);
    }

    #[test]
    fn fragment_merges_and_validates() {
        let w = clamp_workspace(2.0);
        let frag: WorkspaceFragment = serde_json::from_str(
            r#"{"source_file": "part.stp", "obstacles": [
                {"label": "Feature_008", "shape": {"type": "cylinder", "center": [480, 480, 10], "axis": "z", "radius": 10.0, "height": 20.0, "height_source": "config"}}
            ]}"#,
        )
        .unwrap();
        let merged = w.merge_fragment(&frag).unwrap();
        assert_eq!(merged.obstacles.len(), 2);
        assert_eq!(frag.metadata["source_file"], "part.stp");

        let outside: WorkspaceFragment = serde_json::from_str(
            r#"{"obstacles": [{"label": "F", "shape": {"type": "sphere", "center": [-245, 0, -100], "radius": 20}}]}"#,
        )
        .unwrap();
        assert!(w.merge_fragment(&outside).is_err());
    }
}
