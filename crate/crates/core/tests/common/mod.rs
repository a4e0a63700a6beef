#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slcnc::gcode::{parse_program, GCodeCommand, MachineState};
use slcnc::geometry::{Axis, Point3, Shape, Voxel};
use slcnc::heap::OccupancyStatus;
use slcnc::oracle::simulate;
use slcnc::prover::{prove_program, ProofOutcome};
use slcnc::workspace::{MachineLimits, Obstacle, ToolGeometry, ToolId, WorkspaceTopology};

pub fn demo(p: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(p)
}

pub fn golden(p: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(p)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub workspace: WorkspaceTopology,
    pub start: MachineState,
    pub program: String,
    pub commands: Vec<GCodeCommand>,
}

/// Random desk-scale scenario: grid at most 40 cells per axis, 1 to 4 box or
/// cylinder obstacles, optional stock, 3 to 10 rapid or feed moves.
pub fn scenario(seed: u64) -> Scenario {
    let mut r = rng(seed);
    loop {
        if let Some(s) = try_scenario(seed, &mut r) {
            return s;
        }
    }
}

fn try_scenario(seed: u64, r: &mut ChaCha8Rng) -> Option<Scenario> {
    let u = if r.gen_bool(0.75) { 1.0 } else { 0.5 };
    let nx = r.gen_range(20..=40);
    let ny = r.gen_range(20..=40);
    let nz = r.gen_range(16..=32);
    let lim = |n: i32| [0.0, f64::from(n - 1) * u];
    let limits = MachineLimits { x: lim(nx), y: lim(ny), z: lim(nz) };
    let eps_cells = r.gen_range(1..=2);
    let eps_mm = if r.gen_bool(0.2) { (f64::from(eps_cells) - 0.5) * u } else { f64::from(eps_cells) * u };
    let radius = u * r.gen_range(0.3..2.6);
    let length = u * f64::from(r.gen_range(2..=7));

    let mut obstacles = Vec::new();
    let mut top = 0.0f64;
    for i in 0..r.gen_range(1..=4) {
        let shape = if r.gen_bool(0.6) {
            let x0 = r.gen_range(0..nx - 2);
            let y0 = r.gen_range(0..ny - 2);
            let w = r.gen_range(1..=6).min(nx - 1 - x0);
            let d = r.gen_range(1..=6).min(ny - 1 - y0);
            let h = r.gen_range(1..=nz / 3);
            let inset = if r.gen_bool(0.25) { 0.3 * u } else { 0.0 };
            Shape::Box {
                min: [f64::from(x0) * u + inset, f64::from(y0) * u, 0.0],
                max: [f64::from(x0 + w) * u, f64::from(y0 + d) * u - inset, f64::from(h) * u],
            }
        } else {
            let rad = u * r.gen_range(0.4..3.0);
            let height = u * r.gen_range(1.0..8.0);
            let axis = [Axis::X, Axis::Y, Axis::Z][r.gen_range(0..3)];
            let c = [
                u * r.gen_range(4.0..f64::from(nx - 5)),
                u * r.gen_range(4.0..f64::from(ny - 5)),
                u * r.gen_range(4.0..f64::from(nz / 2)),
            ];
            let c = c.map(|v| (v * 4.0).round() / 4.0);
            Shape::Cylinder { center: c, axis, radius: rad, height }
        };
        top = top.max(shape.aabb().1[2]);
        obstacles.push(Obstacle { label: format!("Obstacle_{i}"), source: None, shape });
    }
    let stock = r.gen_bool(0.5).then(|| {
        let x0 = r.gen_range(0..nx / 2);
        let y0 = r.gen_range(0..ny / 2);
        Shape::Box {
            min: [f64::from(x0) * u, f64::from(y0) * u, 0.0],
            max: [f64::from(x0 + r.gen_range(2..10)) * u, f64::from(y0 + r.gen_range(2..10)) * u, f64::from(r.gen_range(1..5)) * u],
        }
    });

    let workspace = WorkspaceTopology {
        machine_limits: limits,
        grid_resolution_mm: u,
        epsilon_mm: eps_mm,
        safe_z_mm: limits.z[1] - length - eps_mm - u,
        home_mm: None,
        tools: [(ToolId(1), ToolGeometry::new(radius, length)), (ToolId(2), ToolGeometry::new(radius * 0.5 + u * 0.3, length))]
            .into_iter()
            .collect(),
        stock,
        obstacles,
    };
    workspace.validate().ok()?;

    let zmax = limits.z[1] - length - eps_mm - u;
    let careful = r.gen_bool(0.5);
    let coord = |r: &mut ChaCha8Rng, hi: f64| {
        let v = r.gen_range(0.0..hi);
        if r.gen_bool(0.6) {
            (v / u).round() * u
        } else {
            (v * 100.0).round() / 100.0
        }
    };
    let m = radius + eps_mm + u;
    let inset = |r: &mut ChaCha8Rng, hi: f64| {
        if r.gen_bool(0.9) && hi > 2.0 * m + u {
            m + coord(r, hi - 2.0 * m)
        } else {
            coord(r, hi)
        }
    };
    let start = MachineState::new(
        Point3::new(inset(r, limits.x[1]), inset(r, limits.y[1]), zmax.max(0.0)),
        ToolId(1),
    );
    let mut program = String::new();
    for _ in 0..r.gen_range(3..=10) {
        if r.gen_bool(0.08) {
            program.push_str(&format!("T0{}\n", r.gen_range(1..=2)));
            continue;
        }
        let word = if r.gen_bool(0.5) { "G00" } else { "G01" };
        let z_lo = if careful { (top + eps_mm + u).min(zmax) } else { 0.0 };
        let z = if zmax > z_lo { z_lo + coord(r, zmax - z_lo) } else { zmax.max(0.0) };
        let (x, y) = (inset(r, limits.x[1]), inset(r, limits.y[1]));
        match r.gen_range(0..4) {
            0 => program.push_str(&format!("{word} Z{z:.3}\n")),
            1 => program.push_str(&format!("{word} X{x:.3} Y{y:.3}\n")),
            _ => program.push_str(&format!("{word} X{x:.3} Y{y:.3} Z{z:.3}\n")),
        }
    }
    let commands = parse_program(&program, &start).ok()?.commands;
    Some(Scenario { seed, workspace, start, program, commands })
}

#[derive(Debug)]
pub struct Agreement {
    pub prover_verified: bool,
    pub oracle_clean: bool,
    /// Same first fault line and voxels, or the same final grid when both are clean.
    pub exact: bool,
    pub detail: String,
}

/// Runs prover and oracle on one scenario and compares them.
pub fn compare(s: &Scenario) -> Agreement {
    let outcome = prove_program(&s.commands, s.start.clone(), &s.workspace).expect("prover runs");
    let run = simulate(&s.commands, &s.workspace, &s.start).expect("oracle runs");
    let oracle_clean = run.collisions.is_empty();
    match outcome {
        ProofOutcome::Verified { final_state, .. } => {
            let mut detail = String::new();
            let mut exact = oracle_clean;
            if oracle_clean {
                for st in [OccupancyStatus::Tool, OccupancyStatus::Stock, OccupancyStatus::Environment] {
                    let a: BTreeSet<Voxel> = final_state.heap.domain_of(st).into_iter().collect();
                    let b: BTreeSet<Voxel> =
                        run.final_grid.occupied().into_iter().filter(|(_, s)| *s == st).map(|(v, _)| v).collect();
                    if a != b {
                        exact = false;
                        detail = format!("final {st} domains differ: prover {} oracle {}", a.len(), b.len());
                    }
                }
            } else {
                detail = format!("oracle collision at line {:?}", run.first_collision_line());
            }
            Agreement { prover_verified: true, oracle_clean, exact, detail }
        }
        ProofOutcome::Refuted { conflict, .. } => {
            let first = run.collisions.first();
            let same_line = first.map(|c| c.source_line) == Some(conflict.command.source_line);
            let same_set = first.is_some_and(|c| {
                c.voxels.iter().copied().collect::<BTreeSet<_>>() == conflict.v_conflict.iter().copied().collect()
            });
            Agreement {
                prover_verified: false,
                oracle_clean,
                exact: same_line && same_set,
                detail: format!(
                    "prover line {} ({} voxels), oracle line {:?} ({} voxels)",
                    conflict.command.source_line,
                    conflict.v_conflict.len(),
                    first.map(|c| c.source_line),
                    first.map_or(0, |c| c.voxels.len())
                ),
            }
        }
    }
}

/// Proves `s` with and without a random frame of extra `Environment` cells
/// that misses every footprint; `Ok(false)` when no such frame was found.
pub fn frame_trial(s: &Scenario, r: &mut ChaCha8Rng) -> Result<bool, String> {
    use slcnc::prover::{frame_check, program_footprints};
    use slcnc::voxel_set::VoxelSet;
    use slcnc::workspace::build_initial_heap;

    let foot = program_footprints(&s.commands, &s.start, &s.workspace).map_err(|e| e.to_string())?;
    let base = build_initial_heap(&s.workspace);
    let mb = s.workspace.machine_box();
    let mut frame = VoxelSet::new();
    for _ in 0..40 {
        let lo = Voxel::new(r.gen_range(mb.min.x..=mb.max.x), r.gen_range(mb.min.y..=mb.max.y), r.gen_range(mb.min.z..=mb.max.z));
        let hi = Voxel::new((lo.x + r.gen_range(0..6)).min(mb.max.x), (lo.y + r.gen_range(0..6)).min(mb.max.y), (lo.z + r.gen_range(0..6)).min(mb.max.z));
        frame = slcnc::geometry::VoxelBox::new(lo, hi).iter().filter(|c| !foot.contains(c) && !base.owns(c)).collect();
        if !frame.is_empty() {
            break;
        }
    }
    if frame.is_empty() {
        return Ok(false);
    }
    let plain = prove_program(&s.commands, s.start.clone(), &s.workspace).map_err(|e| e.to_string())?;
    let framed = frame_check(&s.commands, s.start.clone(), &s.workspace, &frame).map_err(|e| e.to_string())?;
    match (&plain, &framed) {
        (ProofOutcome::Verified { final_state: a, .. }, ProofOutcome::Verified { final_state: b, .. }) => {
            if a.tool_domain != b.tool_domain || a.heap.domain_of(OccupancyStatus::Tool) != b.heap.domain_of(OccupancyStatus::Tool) {
                return Err(format!("seed {}: tool domains differ", s.seed));
            }
            if a.heap.domain_of(OccupancyStatus::Stock) != b.heap.domain_of(OccupancyStatus::Stock) {
                return Err(format!("seed {}: stock domains differ", s.seed));
            }
            let env_gain = b.heap.count_of(OccupancyStatus::Environment) - a.heap.count_of(OccupancyStatus::Environment);
            if env_gain != frame.len() {
                return Err(format!("seed {}: frame not preserved ({env_gain} of {})", s.seed, frame.len()));
            }
        }
        (ProofOutcome::Refuted { conflict: a, .. }, ProofOutcome::Refuted { conflict: b, .. }) => {
            if a.command != b.command || a.v_conflict != b.v_conflict || a.conflicting_status != b.conflicting_status {
                return Err(format!("seed {}: conflicts differ", s.seed));
            }
        }
        _ => return Err(format!("seed {}: verdict changed under a disjoint frame", s.seed)),
    }
    Ok(true)
}

/// Per-step conservation on a program: stock lost by each feed equals the
/// stock inside its footprint, and the tool owns exactly its final volume.
pub fn conservation_trial(w: &WorkspaceTopology, program: &str) -> Result<(usize, usize), String> {
    use slcnc::prover::Prover;

    let start = slcnc::driver::default_start(w);
    let cmds = parse_program(program, &start).map_err(|e| e.to_string())?.commands;
    let prover = Prover::new(w);
    let init = prover.initial_state(start).map_err(|e| e.to_string())?.map_err(|c| format!("start refuted: {:?}", c.command))?;
    let mut errors = Vec::new();
    let mut feeds = 0;
    let outcome = prover
        .prove_observed(&cmds, init, |ev| {
            let before_stock = ev.before.heap.domain_of(OccupancyStatus::Stock);
            let lost = before_stock.len() - ev.after.heap.count_of(OccupancyStatus::Stock);
            if let Some(fp) = ev.footprint {
                let expected = if fp.rapid { 0 } else { before_stock.intersection(&fp.v_path).len() };
                feeds += usize::from(!fp.rapid);
                if lost != expected || ev.stats.stock_removed != expected {
                    errors.push(format!("line {}: lost {lost}, expected {expected}", ev.command.source_line));
                }
                if ev.after.tool_domain != fp.v_final {
                    errors.push(format!("line {}: tool domain is not the final volume", ev.command.source_line));
                }
            }
            if ev.after.heap.domain_of(OccupancyStatus::Tool) != ev.after.tool_domain {
                errors.push(format!("line {}: stray tool voxels", ev.command.source_line));
            }
        })
        .map_err(|e| e.to_string())?;
    let ProofOutcome::Verified { final_state, .. } = outcome else {
        return Err("program was refuted".into());
    };
    if !errors.is_empty() {
        return Err(errors.join("; "));
    }
    let removed = slcnc::workspace::build_initial_heap(w).count_of(OccupancyStatus::Stock) - final_state.heap.count_of(OccupancyStatus::Stock);
    Ok((feeds, removed))
}

pub fn random_set(r: &mut ChaCha8Rng, max_len: usize, span: i32) -> slcnc::voxel_set::VoxelSet {
    (0..r.gen_range(1..=max_len))
        .map(|_| Voxel::new(r.gen_range(-span..=span), r.gen_range(-span..=span), r.gen_range(-span..=span)))
        .collect()
}

/// Counts of failed instances per algebraic law over `n` random instances each.
pub fn law_failures(seed: u64, n: usize) -> Vec<(&'static str, usize)> {
    use slcnc::discretizer::{path_box, path_lin};
    use slcnc::voxel_set::{dilate_chebyshev, minkowski_sum};

    let mut r = rng(seed);
    let mut out = vec![("commutativity", 0), ("associativity", 0), ("union_distributivity", 0), ("dilation_threshold", 0), ("path_lin_in_box", 0)];
    for _ in 0..n {
        let (a, b, c) = (random_set(&mut r, 10, 4), random_set(&mut r, 10, 4), random_set(&mut r, 10, 4));
        out[0].1 += usize::from(minkowski_sum(&a, &b) != minkowski_sum(&b, &a));
        out[1].1 += usize::from(minkowski_sum(&minkowski_sum(&a, &b), &c) != minkowski_sum(&a, &minkowski_sum(&b, &c)));
        out[2].1 += usize::from(minkowski_sum(&a, &b.union(&c)) != minkowski_sum(&a, &b).union(&minkowski_sum(&a, &c)));

        let e = r.gen_range(0..=3u32);
        let d = dilate_chebyshev(&a, e);
        let reach = 4 + e as i32 + 1;
        let mut brute = slcnc::voxel_set::VoxelSet::new();
        for x in -reach..=reach {
            for y in -reach..=reach {
                for z in -reach..=reach {
                    let v = Voxel::new(x, y, z);
                    if a.iter().any(|p| (p.x - x).abs().max((p.y - y).abs()).max((p.z - z).abs()) <= e as i32) {
                        brute.insert(v);
                    }
                }
            }
        }
        out[3].1 += usize::from(d != brute);

        let p0 = Voxel::new(r.gen_range(-12..=12), r.gen_range(-12..=12), r.gen_range(-12..=12));
        let p1 = Voxel::new(r.gen_range(-12..=12), r.gen_range(-12..=12), r.gen_range(-12..=12));
        let lin = path_lin(p0, p1);
        let ok = lin.is_subset(&path_box(p0, p1)) && lin.contains(&p0) && lin.contains(&p1);
        out[4].1 += usize::from(!ok);
    }
    out
}
