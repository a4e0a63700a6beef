//! RS-274 subset parser: G00/G01 under absolute positioning, tool changes,
//! and passive F/S/M words. Every line is resolved against the modal state so
//! each motion carries a full absolute target.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Diagnostic;
use crate::geometry::Point3;
use crate::workspace::ToolId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at line {line}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError { line, column, message: message.into() }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.to_string()).at(self.line, self.column)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionMode {
    Rapid,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CommandKind {
    Rapid,
    Linear,
    ToolChange(ToolId),
    Passive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GCodeCommand {
    /// 1-based line in the source text.
    pub source_line: usize,
    /// Numeric value of the N-word, if any.
    pub line_no: Option<u32>,
    /// The N-word as written, upper-cased (`N045`).
    pub label: Option<String>,
    /// Source line with surrounding whitespace trimmed.
    pub text: String,
    pub kind: CommandKind,
    /// Resolved absolute end point; present for motion kinds only.
    pub target: Option<Point3>,
}

impl GCodeCommand {
    pub fn is_motion(&self) -> bool {
        matches!(self.kind, CommandKind::Rapid | CommandKind::Linear)
    }

    /// `N045` when labelled, otherwise `line 7`.
    pub fn display_label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => format!("line {}", self.source_line),
        }
    }
}

/// Positioning is always absolute; G91 is rejected at parse time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineState {
    pub position: Point3,
    pub active_tool: ToolId,
    pub modal_motion: Option<MotionMode>,
}

impl MachineState {
    pub fn new(position: Point3, active_tool: ToolId) -> Self {
        MachineState { position, active_tool, modal_motion: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Word {
    pub letter: char,
    pub value: f64,
    /// Letter plus number as written, upper-cased.
    pub raw: String,
    /// 1-based column of the letter.
    pub column: usize,
}

/// One non-blank line after comment stripping.
#[derive(Clone, Debug, PartialEq)]
pub struct LexedLine {
    pub source_line: usize,
    pub text: String,
    pub words: Vec<Word>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedProgram {
    pub commands: Vec<GCodeCommand>,
    pub diagnostics: Vec<Diagnostic>,
    pub final_state: MachineState,
}

impl ParsedProgram {
    pub fn motion_count(&self) -> usize {
        self.commands.iter().filter(|c| c.is_motion()).count()
    }
}

/// Removes `( ... )` and `;` comments. Returns `None` for an unterminated paren.
fn strip_comments(line: &str) -> Option<String> {
    let mut out = String::with_capacity(line.len());
    let mut depth = 0usize;
    for ch in line.chars() {
        match ch {
            '(' => depth += 1,
            ')' if depth > 0 => depth -= 1,
            ';' if depth == 0 => break,
            _ if depth == 0 => out.push(ch),
            _ => {}
        }
    }
    (depth == 0).then_some(out)
}

/// Splits one source line into words.
pub fn lex_line(line: &str, source_line: usize) -> Result<Option<LexedLine>, ParseError> {
    let body = strip_comments(line).ok_or_else(|| ParseError::new(source_line, 1, "unterminated comment"))?;
    let trimmed = body.trim();
    if trimmed.is_empty() || trimmed.chars().all(|c| c == '%') {
        return Ok(None);
    }
    let chars: Vec<char> = body.chars().collect();
    let mut words = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let column = i + 1;
        if !c.is_ascii_alphabetic() {
            return Err(ParseError::new(source_line, column, format!("unexpected character {c:?}")));
        }
        let letter = c.to_ascii_uppercase();
        i += 1;
        while i < chars.len() && chars[i] == ' ' {
            i += 1;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_digit() || matches!(chars[i], '.' | '+' | '-')) {
            i += 1;
        }
        let num: String = chars[start..i].iter().collect();
        let value = parse_number(&num)
            .ok_or_else(|| ParseError::new(source_line, column, format!("malformed number in word {letter}{num}")))?;
        words.push(Word { letter, value, raw: format!("{letter}{num}"), column });
    }
    Ok(Some(LexedLine { source_line, text: line.trim().to_string(), words }))
}

/// Decimal with optional sign: `-5`, `50.`, `.25`, `+1.5`.
fn parse_number(s: &str) -> Option<f64> {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || digits.contains(['+', '-']) || digits.matches('.').count() > 1 {
        return None;
    }
    if !digits.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

const PASSIVE_G: [u32; 8] = [4, 17, 21, 40, 49, 80, 90, 94];

fn g_code(w: &Word) -> Option<u32> {
    (w.value >= 0.0 && w.value == w.value.trunc()).then_some(w.value as u32)
}

/// Resolves one lexed line against `state`. Pure: returns the successor state.
pub fn resolve_modal(
    line: &LexedLine,
    state: &MachineState,
) -> Result<(GCodeCommand, MachineState, Vec<Diagnostic>), ParseError> {
    let ln = line.source_line;
    let mut next = state.clone();
    let mut diags = Vec::new();
    let mut motion_word: Option<(MotionMode, &Word)> = None;
    let mut axes: [Option<f64>; 3] = [None; 3];
    let mut tool: Option<ToolId> = None;
    let mut line_no = None;
    let mut label = None;
    let mut unknown: Vec<&Word> = Vec::new();

    for w in &line.words {
        match w.letter {
            'G' => {
                let code = g_code(w);
                let mode = match code {
                    Some(0) => Some(MotionMode::Rapid),
                    Some(1) => Some(MotionMode::Linear),
                    Some(c) if PASSIVE_G.contains(&c) => None,
                    _ => return Err(ParseError::new(ln, w.column, format!("unsupported motion word {}", w.raw))),
                };
                if let Some(m) = mode {
                    if motion_word.is_some() {
                        return Err(ParseError::new(ln, w.column, "conflicting motion words on one line"));
                    }
                    motion_word = Some((m, w));
                }
            }
            'X' | 'Y' | 'Z' => {
                let idx = (w.letter as u8 - b'X') as usize;
                if axes[idx].replace(w.value).is_some() {
                    return Err(ParseError::new(ln, w.column, format!("duplicate {} word", w.letter)));
                }
            }
            'T' => {
                if w.value < 0.0 || w.value != w.value.trunc() {
                    return Err(ParseError::new(ln, w.column, format!("invalid tool word {}", w.raw)));
                }
                tool = Some(ToolId(w.value as u32));
            }
            'N' => {
                if w.value < 0.0 || w.value != w.value.trunc() {
                    return Err(ParseError::new(ln, w.column, format!("invalid line number {}", w.raw)));
                }
                line_no = Some(w.value as u32);
                label = Some(w.raw.clone());
            }
            'F' | 'S' | 'M' => {}
            _ => unknown.push(w),
        }
    }

    let has_axes = axes.iter().any(Option::is_some);
    let is_motion = has_axes;
    if let Some(w) = unknown.first() {
        if is_motion || motion_word.is_some() {
            return Err(ParseError::new(ln, w.column, format!("unsupported word {} on motion line", w.raw)));
        }
        for w in &unknown {
            diags.push(Diagnostic::warning(format!("ignoring word {}", w.raw)).at(ln, w.column));
        }
    }
    if let Some((m, _)) = motion_word {
        next.modal_motion = Some(m);
    }

    let base = GCodeCommand {
        source_line: ln,
        line_no,
        label,
        text: line.text.clone(),
        kind: CommandKind::Passive,
        target: None,
    };

    if let Some(id) = tool {
        if has_axes {
            return Err(ParseError::new(ln, 1, "tool change combined with axis motion"));
        }
        next.active_tool = id;
        return Ok((GCodeCommand { kind: CommandKind::ToolChange(id), ..base }, next, diags));
    }

    if !has_axes {
        return Ok((base, next, diags));
    }
    let mode = next
        .modal_motion
        .ok_or_else(|| ParseError::new(ln, 1, "axis words without an active motion mode (G00/G01)"))?;
    let target = Point3::new(
        axes[0].unwrap_or(state.position.x),
        axes[1].unwrap_or(state.position.y),
        axes[2].unwrap_or(state.position.z),
    );
    next.position = target;
    let kind = match mode {
        MotionMode::Rapid => CommandKind::Rapid,
        MotionMode::Linear => CommandKind::Linear,
    };
    Ok((GCodeCommand { kind, target: Some(target), ..base }, next, diags))
}

/// Parses a whole program, folding [`resolve_modal`] from `initial`.
pub fn parse_program(text: &str, initial: &MachineState) -> Result<ParsedProgram, ParseError> {
    let mut state = initial.clone();
    let mut commands = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let Some(line) = lex_line(raw, i + 1)? else { continue };
        let (cmd, next, diags) = resolve_modal(&line, &state)?;
        diagnostics.extend(diags);
        commands.push(cmd);
        state = next;
    }
    Ok(ParsedProgram { commands, diagnostics, final_state: state })
}
