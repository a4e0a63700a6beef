//! Generate, verify, feed back, repeat.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Diagnostic;
use crate::feedback::{render_parse_error, render_signal, FeedbackSignal};
use crate::gcode::{parse_program, MachineState, ParseError};
use crate::geometry::Point3;
use crate::prover::{prove_program, ProofOutcome, ProverError, StepStats};
use crate::workspace::{emit_generator_context, ToolId, WorkspaceError, WorkspaceTopology};

pub const DEFAULT_MAX_ITERS: usize = 5;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("generator timed out after {0:?}")]
    Timeout(Duration),
    #[error("generator exited with {code:?}: {stderr}")]
    Failed { code: Option<i32>, stderr: String },
    #[error("generator output is not UTF-8")]
    Encoding,
    #[error("generator script is empty")]
    EmptyScript,
    #[error("generator i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("max_iters must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Prover(#[from] ProverError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub gcode: String,
    pub feedback: serde_json::Value,
}

/// Document sent to the generator on each iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub context: String,
    pub intent: String,
    pub history: Vec<HistoryEntry>,
    pub iteration: usize,
}

impl GeneratorRequest {
    /// Flat prompt: context, intent, then every earlier attempt with its feedback.
    pub fn render_prompt(&self) -> String {
        let mut out = format!("{}\n\nUser Intent:\n{}\n", self.context, self.intent);
        for (i, h) in self.history.iter().enumerate() {
            let text = h.feedback.get("text").and_then(|t| t.as_str()).unwrap_or_default();
            out.push_str(&format!("\nAttempt {}:\n{}\n\nVerifier Feedback:\n{}\n", i + 1, h.gcode.trim_end(), text));
        }
        out
    }
}

pub trait Generator {
    fn generate(&mut self, request: &GeneratorRequest) -> Result<String, GeneratorError>;
}

/// Replays fixed responses in order; the last one repeats once the script runs out.
#[derive(Clone, Debug)]
pub struct ScriptedGenerator {
    responses: Vec<String>,
    calls: usize,
}

impl ScriptedGenerator {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedGenerator { responses, calls: 0 }
    }

    /// Responses separated by lines consisting of `---`.
    pub fn from_script(text: &str) -> Self {
        let mut responses = vec![String::new()];
        for line in text.lines() {
            if line.trim() == "---" {
                responses.push(String::new());
            } else {
                let cur = responses.last_mut().expect("non-empty");
                cur.push_str(line);
                cur.push('\n');
            }
        }
        responses.retain(|r| !r.trim().is_empty());
        ScriptedGenerator::new(responses)
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&mut self, _request: &GeneratorRequest) -> Result<String, GeneratorError> {
        let r = self.responses.get(self.calls).or(self.responses.last()).cloned().ok_or(GeneratorError::EmptyScript)?;
        self.calls += 1;
        Ok(r)
    }
}

/// Runs a shell command per iteration: request JSON on stdin, G-code on stdout.
#[derive(Clone, Debug)]
pub struct ProcessGenerator {
    pub command: String,
    pub timeout: Duration,
}

impl ProcessGenerator {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        ProcessGenerator { command: command.into(), timeout }
    }
}

impl Generator for ProcessGenerator {
    fn generate(&mut self, request: &GeneratorRequest) -> Result<String, GeneratorError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let body = serde_json::to_vec(request).expect("request serializes");
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            // A generator may exit without reading its input.
            let _ = stdin.write_all(&body);
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            if let Some(s) = child.try_wait()? {
                break s;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(GeneratorError::Timeout(self.timeout));
            }
            std::thread::sleep(Duration::from_millis(10));
        };
        let _ = writer.join();
        let out = out_reader.join().expect("reader thread")?;
        let err = err_reader.join().expect("reader thread");
        if !status.success() {
            let stderr = String::from_utf8_lossy(&err).trim().chars().take(500).collect();
            return Err(GeneratorError::Failed { code: status.code(), stderr });
        }
        String::from_utf8(out).map_err(|_| GeneratorError::Encoding)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationOutcome {
    Verified,
    Refuted,
    ParseError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopIteration {
    pub iteration: usize,
    pub gcode: String,
    pub outcome: IterationOutcome,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feedback: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Terminal {
    Proved,
    Exhausted { max_iters: usize },
    GeneratorError { message: String },
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopTranscript {
    pub intent: String,
    pub context: String,
    pub iterations: Vec<LoopIteration>,
    pub terminal: Terminal,
}

impl LoopTranscript {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn proved(&self) -> bool {
        self.terminal == Terminal::Proved
    }

    /// The verified program, when the loop ended with a proof.
    pub fn verified_gcode(&self) -> Option<&str> {
        self.proved().then(|| self.iterations.last().map(|i| i.gcode.as_str())).flatten()
    }
}

#[derive(Clone, Debug)]
pub struct LoopConfig {
    pub max_iters: usize,
    pub start: MachineState,
}

impl LoopConfig {
    pub fn for_workspace(w: &WorkspaceTopology) -> Self {
        LoopConfig { max_iters: DEFAULT_MAX_ITERS, start: default_start(w) }
    }
}

/// Tool tip at the workspace home holding the lowest-numbered tool.
pub fn default_start(w: &WorkspaceTopology) -> MachineState {
    MachineState::new(w.home(), w.default_tool())
}

/// Verdict and feedback for one candidate program.
enum Judgement {
    Verified,
    Refuted(FeedbackSignal),
    Unparsable(FeedbackSignal),
}

fn judge(w: &WorkspaceTopology, gcode: &str, start: &MachineState, iteration: usize) -> Result<Judgement, LoopError> {
    let parsed = match parse_program(gcode, start) {
        Ok(p) => p,
        Err(e) => return Ok(Judgement::Unparsable(render_parse_error(&e, gcode, iteration))),
    };
    match prove_program(&parsed.commands, start.clone(), w) {
        Ok(ProofOutcome::Verified { .. }) => Ok(Judgement::Verified),
        Ok(ProofOutcome::Refuted { conflict, .. }) => {
            Ok(Judgement::Refuted(render_signal(&conflict, w.grid(), w.safe_z_mm, iteration)))
        }
        Err(ProverError::UnknownTool { tool, line }) => {
            let e = ParseError { line, column: 1, message: format!("unknown tool {tool}") };
            Ok(Judgement::Unparsable(render_parse_error(&e, gcode, iteration)))
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the refinement loop until a proof, the iteration budget, a generator
/// failure, or `cancel` being raised between iterations.
pub fn run_loop(
    w: &WorkspaceTopology,
    intent: &str,
    generator: &mut dyn Generator,
    cfg: &LoopConfig,
    cancel: Option<&AtomicBool>,
) -> Result<LoopTranscript, LoopError> {
    if cfg.max_iters == 0 {
        return Err(LoopError::ZeroBudget);
    }
    let context = emit_generator_context(w, cfg.start.active_tool)?;
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut iterations = Vec::new();
    let finish = |iterations, terminal| LoopTranscript { intent: intent.to_string(), context: context.clone(), iterations, terminal };

    for iteration in 1..=cfg.max_iters {
        if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
            return Ok(finish(iterations, Terminal::Cancelled));
        }
        let request =
            GeneratorRequest { context: context.clone(), intent: intent.to_string(), history: history.clone(), iteration };
        let gcode = match generator.generate(&request) {
            Ok(g) => g,
            Err(e) => return Ok(finish(iterations, Terminal::GeneratorError { message: e.to_string() })),
        };
        let (outcome, signal) = match judge(w, &gcode, &cfg.start, iteration)? {
            Judgement::Verified => (IterationOutcome::Verified, None),
            Judgement::Refuted(s) => (IterationOutcome::Refuted, Some(s)),
            Judgement::Unparsable(s) => (IterationOutcome::ParseError, Some(s)),
        };
        let feedback = signal.map(|s| s.machine_payload);
        iterations.push(LoopIteration { iteration, gcode: gcode.clone(), outcome: outcome.clone(), feedback: feedback.clone() });
        match feedback {
            None => return Ok(finish(iterations, Terminal::Proved)),
            Some(f) => history.push(HistoryEntry { gcode, feedback: f }),
        }
    }
    Ok(finish(iterations, Terminal::Exhausted { max_iters: cfg.max_iters }))
}

/// Single-shot verification report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub outcome: String,
    pub steps_verified: usize,
    pub steps: Vec<StepStats>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<serde_json::Value>,
    #[serde(skip)]
    pub feedback_text: Option<String>,
}

impl VerifyReport {
    pub fn verified(&self) -> bool {
        self.outcome == "verified"
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Prover(#[from] ProverError),
}

/// Parse, footprint and prove one program.
pub fn verify_once(w: &WorkspaceTopology, gcode: &str, start: &MachineState) -> Result<(ProofOutcome, VerifyReport), VerifyError> {
    let parsed = parse_program(gcode, start)?;
    let mut diagnostics: Vec<Diagnostic> = w.margin_diagnostic().into_iter().collect();
    diagnostics.extend(parsed.diagnostics.iter().cloned());
    let outcome = prove_program(&parsed.commands, start.clone(), w)?;
    let steps = outcome.stats().to_vec();
    let report = match &outcome {
        ProofOutcome::Verified { .. } => VerifyReport {
            outcome: "verified".into(),
            steps_verified: steps.len(),
            steps,
            diagnostics,
            feedback: None,
            feedback_text: None,
        },
        ProofOutcome::Refuted { conflict, .. } => {
            let s = render_signal(conflict, w.grid(), w.safe_z_mm, 1);
            VerifyReport {
                outcome: "refuted".into(),
                steps_verified: conflict.steps_verified,
                steps,
                diagnostics,
                feedback: Some(s.machine_payload),
                feedback_text: Some(s.human_text),
            }
        }
    };
    Ok((outcome, report))
}

/// Default start with optional position and tool overrides.
pub fn start_with(w: &WorkspaceTopology, position: Option<Point3>, tool: Option<ToolId>) -> MachineState {
    let base = default_start(w);
    MachineState::new(position.unwrap_or(base.position), tool.unwrap_or(base.active_tool))
}
