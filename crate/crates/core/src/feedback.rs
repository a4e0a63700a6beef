//! Conflict reports rendered as generator feedback: a JSON payload and a
//! fixed natural-language template.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcode::ParseError;
use crate::geometry::{GridScale, VoxelBox};
use crate::prover::ConflictReport;
use crate::voxel_set::VoxelSet;

const RACE_TEMPLATE: &str = include_str!("../templates/spatial_data_race.txt");
const PARSE_TEMPLATE: &str = include_str!("../templates/parse_error.txt");

const CLEARANCE_HINT: &str =
    " Consider increasing the Z-axis clearance height (G00 Z...) prior to lateral XY translation.";

const START_DIRECTIVE: &str =
    "The start position already violates the stated conflict bounds. Move the start position clear of them; no program can be verified from here.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeedbackError {
    #[error("bounding box of an empty conflict set")]
    EmptyConflict,
    #[error("condense budget must be at least one box")]
    ZeroBudget,
}

/// Tightest box around `v`.
pub fn bounding_box(v: &VoxelSet) -> Result<VoxelBox, FeedbackError> {
    v.bounding_box().ok_or(FeedbackError::EmptyConflict)
}

/// Covers `v` with at most `budget` boxes. Only the single bounding box is
/// produced for now, whatever the budget.
pub fn condense(v: &VoxelSet, budget: usize) -> Result<Vec<VoxelBox>, FeedbackError> {
    if budget == 0 {
        return Err(FeedbackError::ZeroBudget);
    }
    Ok(vec![bounding_box(v)?])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBounds<T> {
    pub x: [T; 2],
    pub y: [T; 2],
    pub z: [T; 2],
}

impl<T: Copy> AxisBounds<T> {
    fn from_fn(mut f: impl FnMut(usize) -> [T; 2]) -> Self {
        AxisBounds { x: f(0), y: f(1), z: f(2) }
    }

    fn axes(&self) -> [(&'static str, [T; 2]); 3] {
        [("X", self.x), ("Y", self.y), ("Z", self.z)]
    }
}

/// Machine-readable half of a spatial data race signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RacePayload {
    pub error: String,
    pub iteration: usize,
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_word: Option<u32>,
    pub command: String,
    pub status: String,
    pub bounds_mm: AxisBounds<f64>,
    pub bounds_voxel: AxisBounds<i32>,
    pub window: [String; 2],
    pub directive: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsePayload {
    pub error: String,
    pub iteration: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub directive: String,
    pub text: String,
}

/// Feedback for one failed iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeedbackSignal {
    pub machine_payload: serde_json::Value,
    pub human_text: String,
    pub iteration: usize,
}

/// Shortest decimal rendering with at least one fractional digit.
pub fn fmt_decimal(v: f64) -> String {
    let v = v + 0.0;
    let one = format!("{v:.1}");
    if one.parse::<f64>() == Ok(v) {
        one
    } else {
        format!("{v}")
    }
}

fn fmt_integer_bounds(b: &AxisBounds<i32>) -> String {
    let parts: Vec<String> = b.axes().iter().map(|(a, [lo, hi])| format!("{a} ∈ [{lo}, {hi}]")).collect();
    parts.join(", ")
}

fn fmt_mm_bounds(b: &AxisBounds<f64>) -> String {
    let parts: Vec<String> = b
        .axes()
        .iter()
        .map(|(a, [lo, hi])| format!("{a} ∈ [{}, {}]", fmt_decimal(*lo), fmt_decimal(*hi)))
        .collect();
    parts.join(", ")
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out.trim_end().to_string()
}

/// Directive sentence for a conflict, with the Z hint when it lies below `safe_z`.
pub fn directive_text(window: &(String, String), z_max_mm: f64, safe_z_mm: f64) -> String {
    let mut d = format!(
        "Regenerate the toolpath between lines {} and {}. You must route the tool to strictly avoid the stated conflict bounds.",
        window.0, window.1
    );
    if z_max_mm < safe_z_mm {
        d.push_str(CLEARANCE_HINT);
    }
    d
}

/// Renders `c` as the spatial data race template plus payload.
pub fn render_signal(c: &ConflictReport, g: GridScale, safe_z_mm: f64, iteration: usize) -> FeedbackSignal {
    let vb = c.b_conflict.voxel;
    let bounds_voxel = AxisBounds::from_fn(|i| [vb.min.to_array()[i], vb.max.to_array()[i]]);
    let bounds_mm = AxisBounds::from_fn(|i| [g.to_mm(bounds_voxel.axes()[i].1[0]), g.to_mm(bounds_voxel.axes()[i].1[1])]);
    let directive = if c.command.source_line == 0 {
        START_DIRECTIVE.to_string()
    } else {
        directive_text(&c.window, bounds_mm.z[1], safe_z_mm)
    };
    let mut bounds = fmt_integer_bounds(&bounds_voxel);
    if g.resolution_mm != 1.0 {
        bounds.push_str(&format!("\n(voxel indices at {} mm resolution; in mm: {})", fmt_decimal(g.resolution_mm), fmt_mm_bounds(&bounds_mm)));
    }
    let status = c.conflicting_status.name();
    let human_text = fill(
        RACE_TEMPLATE,
        &[("command", c.command.text.as_str()), ("status", status), ("bounds", &bounds), ("directive", &directive)],
    );
    let payload = RacePayload {
        error: "spatial_data_race".into(),
        iteration,
        line: c.command.source_line,
        n_word: c.command.line_no,
        command: c.command.text.clone(),
        status: status.into(),
        bounds_mm,
        bounds_voxel,
        window: [c.window.0.clone(), c.window.1.clone()],
        directive,
        text: human_text.clone(),
    };
    FeedbackSignal {
        machine_payload: serde_json::to_value(payload).expect("payload serializes"),
        human_text,
        iteration,
    }
}

/// Feedback for generated text that failed to parse.
pub fn render_parse_error(e: &ParseError, source: &str, iteration: usize) -> FeedbackSignal {
    let line_text = source.lines().nth(e.line.saturating_sub(1)).unwrap_or("").trim().to_string();
    let directive = "Regenerate the complete program. Use absolute G90 coordinates with G00, G01 and T words only, \
                     and fix the reported line."
        .to_string();
    let human_text = fill(
        PARSE_TEMPLATE,
        &[
            ("line", &e.line.to_string()),
            ("column", &e.column.to_string()),
            ("message", &e.message),
            ("source", &line_text),
            ("directive", &directive),
        ],
    );
    let payload = ParsePayload {
        error: "parse_error".into(),
        iteration,
        line: e.line,
        column: e.column,
        message: e.message.clone(),
        directive,
        text: human_text.clone(),
    };
    FeedbackSignal {
        machine_payload: serde_json::to_value(payload).expect("payload serializes"),
        human_text,
        iteration,
    }
}
