//! `slcnc` command-line front end.
//!
//! Exit codes: 0 verified or proved, 2 refuted, 3 loop budget exhausted,
//! 1 for usage, input and generator errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use slcnc::driver::{
    run_loop, start_with, verify_once, Generator, LoopConfig, ProcessGenerator, ScriptedGenerator, Terminal,
    DEFAULT_MAX_ITERS,
};
use slcnc::gcode::{parse_program, MachineState};
use slcnc::geometry::Point3;
use slcnc::oracle::simulate;
use slcnc::workspace::{emit_generator_context, load_fragment, load_workspace, ToolId, WorkspaceTopology};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_REFUTED: u8 = 2;
const EXIT_EXHAUSTED: u8 = 3;

#[derive(Parser)]
#[command(name = "slcnc", version, about = "Voxel separation-logic verifier for 3-axis G-code")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
}

#[derive(Args)]
struct Common {
    /// Workspace description (JSON).
    #[arg(short, long)]
    workspace: PathBuf,
    /// Start position of the tool tip as `x,y,z` in mm.
    #[arg(long, value_parser = parse_point)]
    start: Option<Point3>,
    /// Active tool at start, e.g. `T01`.
    #[arg(long)]
    tool: Option<ToolId>,
    /// Treat a margin smaller than one voxel as an error.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "text")]
    output: Output,
}

#[derive(Subcommand)]
enum Cmd {
    /// Prove one program against a workspace.
    Verify {
        #[command(flatten)]
        common: Common,
        /// G-code program.
        #[arg(short, long)]
        gcode: PathBuf,
        /// Also run the dense-grid reference simulator and compare.
        #[arg(long)]
        cross_check: bool,
    },
    /// Run the generate/verify/feedback loop.
    Loop {
        #[command(flatten)]
        common: Common,
        /// Task description passed to the generator.
        #[arg(long)]
        intent: String,
        /// Shell command: request JSON on stdin, G-code on stdout.
        #[arg(long, conflicts_with = "mock", required_unless_present = "mock")]
        generator: Option<String>,
        /// Scripted responses separated by `---` lines instead of a generator process.
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        /// Seconds allowed per generator call.
        #[arg(long, default_value_t = 120)]
        timeout: u64,
        /// Write the JSON transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Print the constraint document given to generators.
    Context {
        #[command(flatten)]
        common: Common,
    },
    /// Merge an extracted obstacle fragment into a workspace.
    #[command(alias = "extract-ingest")]
    Ingest {
        /// Base workspace providing limits, tools and stock.
        #[arg(short, long)]
        workspace: PathBuf,
        /// Fragment JSON with an `obstacles` array.
        #[arg(short, long)]
        fragment: PathBuf,
        /// Write the merged workspace here instead of stdout.
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Compare the prover with the dense reference simulator on one program.
    CrossCheck {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        gcode: PathBuf,
    },
}

fn parse_point(s: &str) -> Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Point3::new(*x, *y, *z)),
        _ => Err("expected x,y,z".into()),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json(v: &serde_json::Value) {
    emit(&(serde_json::to_string_pretty(v).expect("json") + "\n"));
}

/// Loads and checks the workspace, reporting the margin warning on stderr.
fn setup(c: &Common) -> Result<(WorkspaceTopology, MachineState)> {
    let w = load_workspace(&c.workspace)?;
    if let Some(d) = w.margin_diagnostic() {
        if c.strict {
            bail!("{}", d.message);
        }
        eprintln!("{d}");
    }
    let start = start_with(&w, c.start, c.tool);
    w.tool(start.active_tool)?;
    Ok((w, start))
}

fn cross_check_json(w: &WorkspaceTopology, text: &str, start: &MachineState, prover_verified: bool) -> Result<serde_json::Value> {
    let cmds = parse_program(text, start)?.commands;
    match simulate(&cmds, w, start) {
        Ok(run) => {
            let clean = run.collisions.is_empty();
            let verdict = match (prover_verified, clean) {
                (true, false) => "unsound",
                (false, true) => "prover_stricter",
                _ => "agree",
            };
            Ok(json!({
                "verdict": verdict,
                "oracle_collisions": run.collisions.iter().map(|c| json!({"line": c.source_line, "voxels": c.voxels.len()})).collect::<Vec<_>>(),
            }))
        }
        Err(e) => Ok(json!({ "verdict": "skipped", "reason": e.to_string() })),
    }
}

fn cmd_verify(common: &Common, gcode: &Path, cross_check: bool) -> Result<u8> {
    let (w, start) = setup(common)?;
    let text = read(gcode)?;
    let (_, report) = verify_once(&w, &text, &start).map_err(|e| anyhow!("{}: {e}", gcode.display()))?;
    for d in &report.diagnostics {
        eprintln!("{d}");
    }
    let mut doc = serde_json::to_value(&report)?;
    if cross_check {
        let cc = cross_check_json(&w, &text, &start, report.verified())?;
        match cc["reason"].as_str() {
            Some(r) => eprintln!("cross-check: skipped ({r})"),
            None => eprintln!("cross-check: {}", cc["verdict"].as_str().unwrap_or("?")),
        }
        if cc["verdict"] == "unsound" {
            eprintln!("error: the reference simulator found a collision in a verified program");
        }
        doc["cross_check"] = cc;
    }
    match common.output {
        Output::Json => print_json(&doc),
        Output::Text => match &report.feedback_text {
            None => emit(&format!("VERIFIED: {} step(s) proved safe\n", report.steps_verified)),
            Some(t) => emit(&format!("{t}\n")),
        },
    }
    if doc.get("cross_check").is_some_and(|c| c["verdict"] == "unsound") {
        return Ok(EXIT_ERROR);
    }
    Ok(if report.verified() { EXIT_OK } else { EXIT_REFUTED })
}

#[allow(clippy::too_many_arguments)]
fn cmd_loop(
    common: &Common,
    intent: &str,
    generator: Option<&str>,
    mock: Option<&Path>,
    max_iters: usize,
    timeout: u64,
    transcript_path: Option<&Path>,
) -> Result<u8> {
    let (w, start) = setup(common)?;
    let mut gen: Box<dyn Generator> = match (generator, mock) {
        (Some(cmd), _) => Box::new(ProcessGenerator::new(cmd, Duration::from_secs(timeout))),
        (None, Some(p)) => Box::new(ScriptedGenerator::from_script(&read(p)?)),
        (None, None) => bail!("one of --generator or --mock is required"),
    };
    let cfg = LoopConfig { max_iters, start };
    let t = run_loop(&w, intent, gen.as_mut(), &cfg, None)?;
    if let Some(p) = transcript_path {
        std::fs::write(p, t.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    for it in &t.iterations {
        let status = serde_json::to_value(&it.outcome)?;
        let line = it.feedback.as_ref().and_then(|f| f["line"].as_u64());
        match line {
            Some(l) => eprintln!("iteration {}: {} at line {l}", it.iteration, status.as_str().unwrap_or("?")),
            None => eprintln!("iteration {}: {}", it.iteration, status.as_str().unwrap_or("?")),
        }
    }
    match common.output {
        Output::Json => emit(&t.to_json()),
        Output::Text => {
            if let Some(g) = t.verified_gcode() {
                emit(g);
            }
        }
    }
    Ok(match &t.terminal {
        Terminal::Proved => EXIT_OK,
        Terminal::Exhausted { max_iters } => {
            eprintln!("no verified program after {max_iters} iteration(s)");
            EXIT_EXHAUSTED
        }
        Terminal::GeneratorError { message } => {
            eprintln!("error: {message}");
            EXIT_ERROR
        }
        Terminal::Cancelled => EXIT_ERROR,
    })
}

fn cmd_context(common: &Common) -> Result<u8> {
    let (w, start) = setup(common)?;
    let ctx = emit_generator_context(&w, start.active_tool)?;
    match common.output {
        Output::Json => print_json(&json!({ "tool": start.active_tool, "context": ctx })),
        Output::Text => emit(&ctx),
    }
    Ok(EXIT_OK)
}

fn cmd_ingest(workspace: &Path, fragment: &Path, out: Option<&Path>) -> Result<u8> {
    let w = load_workspace(workspace)?;
    let f = load_fragment(fragment)?;
    let merged = w.merge_fragment(&f).context("merged workspace is invalid")?;
    let text = merged.to_json_pretty() + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => emit(&text),
    }
    eprintln!("merged {} obstacle(s)", f.obstacles.len());
    Ok(EXIT_OK)
}

fn cmd_cross_check(common: &Common, gcode: &Path) -> Result<u8> {
    let (w, start) = setup(common)?;
    let text = read(gcode)?;
    let (_, report) = verify_once(&w, &text, &start).map_err(|e| anyhow!("{}: {e}", gcode.display()))?;
    let cc = cross_check_json(&w, &text, &start, report.verified())?;
    let doc = json!({ "prover": report.outcome, "cross_check": cc });
    match common.output {
        Output::Json => print_json(&doc),
        Output::Text => emit(&format!("prover {}, cross-check {}\n", report.outcome, cc["verdict"].as_str().unwrap_or("?"))),
    }
    Ok(match cc["verdict"].as_str() {
        Some("unsound") => EXIT_ERROR,
        _ => EXIT_OK,
    })
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Cmd::Verify { common, gcode, cross_check } => cmd_verify(common, gcode, *cross_check),
        Cmd::Loop { common, intent, generator, mock, max_iters, timeout, transcript } => cmd_loop(
            common,
            intent,
            generator.as_deref(),
            mock.as_deref(),
            *max_iters,
            *timeout,
            transcript.as_deref(),
        ),
        Cmd::Context { common } => cmd_context(common),
        Cmd::Ingest { workspace, fragment, out } => cmd_ingest(workspace, fragment, out.as_deref()),
        Cmd::CrossCheck { common, gcode } => cmd_cross_check(common, gcode),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
