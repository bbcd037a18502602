//! `qcqp`: solve, bound, audit cuts, generate instances and run the paired
//! benchmark suite.
//!
//! Exit codes: 0 success, 1 a run stopped on a limit (or an audit check
//! failed), 2 bad usage, 3 unreadable input.

mod bench;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use qcqp_core::bnb::{local_search, solve_with_progress, BnbConfig, LocalSearchConfig, SolveStatus};
use qcqp_core::cuts::pool_capacity;
use qcqp_core::dual::{run_heuristic, DualConfig};
use qcqp_core::model::{gen_unitbox, unitbox_name, unitbox_suite};
use qcqp_core::oracle::audit_candidates;
use qcqp_core::relax::{solve_node_lp, CuttingPlaneConfig};
use qcqp_core::{CutPool, QcqpInstance};

use output::Block;

#[derive(Debug, Parser)]
#[command(name = "qcqp", version, about = "Global solver for box-constrained nonconvex QCQPs")]
struct RunConfig {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve an instance to global optimality by spatial branch and bound.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Root bound from the dual heuristic alone, with a local-search incumbent.
    Bound {
        instance: PathBuf,
        /// Dual working-set cap, as for `solve`.
        #[arg(long = "p", default_value = "0.04", value_parser = parse_cap)]
        cut_cap: Cap,
        #[arg(long)]
        no_triangles: bool,
        /// Subgradient iterations.
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, value_name = "SECONDS")]
        time_limit: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Triangle-cut audit sweep, or the root cut pool of an instance.
    Cuts {
        /// Classify all 48 candidates on random boxes (tab-separated report).
        #[arg(long, conflicts_with = "instance")]
        audit: bool,
        #[arg(long, default_value_t = 100)]
        boxes: usize,
        #[arg(required_unless_present = "audit")]
        instance: Option<PathBuf>,
        #[arg(long)]
        no_triangles: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write a random unit-box instance (or a whole suite) as JSON.
    Gen {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Write the first COUNT benchmark-suite members into --output (a directory).
        #[arg(long, value_name = "COUNT")]
        suite: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve a suite with and without triangle cuts and print a paired table.
    Bench {
        /// Instance files; the seeded suite is used when none are given.
        instances: Vec<PathBuf>,
        /// Size of the seeded suite.
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Relative optimality tolerance.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, value_name = "SECONDS")]
    time_limit: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Dual working-set cap: a fraction in (0, 1) of the cut pool size, or an
    /// absolute count.
    #[arg(long = "p", default_value = "0.04", value_parser = parse_cap)]
    cut_cap: Cap,
    #[arg(long)]
    no_triangles: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Print JSON instead of key=value lines.
    #[arg(long)]
    json: bool,
    /// Progress on stderr.
    #[arg(long)]
    verbose: bool,
    /// Include wall-clock times (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
enum Cap {
    Fraction(f64),
    Absolute(usize),
}

impl Cap {
    fn resolve(self, n: usize) -> usize {
        match self {
            Cap::Absolute(k) => k,
            Cap::Fraction(f) => (f * pool_capacity(n) as f64).ceil() as usize,
        }
    }
}

fn parse_cap(s: &str) -> Result<Cap, String> {
    if let Ok(k) = s.parse::<usize>() {
        return Ok(Cap::Absolute(k));
    }
    match s.parse::<f64>() {
        Ok(f) if f > 0.0 && f <= 1.0 => Ok(Cap::Fraction(f)),
        _ => Err(format!("`{s}` is neither a count nor a fraction in (0, 1]")),
    }
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn input(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }

    fn runtime(err: qcqp_core::Error) -> Self {
        Failure { code: 1, message: err.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    match run(cfg) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("qcqp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cfg: RunConfig) -> Outcome {
    match cfg.command {
        Command::Solve { instance, solver, common } => solve(&instance, &solver, &common),
        Command::Bound {
            instance,
            cut_cap,
            no_triangles,
            iters,
            time_limit,
            common,
        } => bound(&instance, cut_cap, !no_triangles, iters, time_limit, &common),
        Command::Cuts {
            audit,
            boxes,
            instance,
            no_triangles,
            common,
        } => {
            if audit {
                cuts_audit(boxes, &common)
            } else {
                let path = instance.ok_or_else(|| Failure::usage("cuts needs an instance or --audit"))?;
                cuts_pool(&path, !no_triangles, &common)
            }
        }
        Command::Gen {
            n,
            m,
            density,
            suite,
            common,
        } => gen(n, m, density, suite, &common),
        Command::Bench {
            instances,
            count,
            solver,
            common,
        } => bench::run(&instances, count, &solver, &common),
    }
}

fn read_instance(path: &Path) -> Result<QcqpInstance, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    QcqpInstance::parse(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn instance_label(inst: &QcqpInstance, path: &Path) -> String {
    inst.name()
        .map(str::to_owned)
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

fn seconds(limit: Option<f64>) -> Result<Option<Duration>, Failure> {
    match limit {
        None => Ok(None),
        Some(s) if s.is_finite() && s >= 0.0 => Ok(Some(Duration::from_secs_f64(s))),
        Some(s) => Err(Failure::usage(format!("invalid time limit {s}"))),
    }
}

fn bnb_config(n: usize, solver: &SolverArgs, common: &CommonArgs) -> Result<BnbConfig, Failure> {
    if !(solver.eps > 0.0 && solver.eps < 1.0) {
        return Err(Failure::usage(format!("--eps {} not in (0, 1)", solver.eps)));
    }
    let mut cfg = BnbConfig::for_n(n);
    cfg.eps_rel = solver.eps;
    cfg.time_limit = seconds(solver.time_limit)?;
    cfg.node_limit = solver.node_limit;
    cfg.use_triangles = !solver.no_triangles;
    cfg.cut_cap = solver.cut_cap.resolve(n);
    cfg.threads = solver.threads.max(1);
    cfg.seed = common.seed.unwrap_or(0);
    Ok(cfg)
}

fn emit(common: &CommonArgs, text: &str) -> Result<(), Failure> {
    match &common.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solve(path: &Path, solver: &SolverArgs, common: &CommonArgs) -> Outcome {
    let inst = read_instance(path)?;
    let cfg = bnb_config(inst.n(), solver, common)?;
    let verbose = common.verbose;
    let result = solve_with_progress(&inst, &cfg, |p| {
        if verbose {
            eprintln!(
                "nodes={} open={} best_bound={:.6} incumbent={:.6} gap={:.3e}",
                p.nodes, p.open, p.best_bound, p.incumbent, p.gap
            );
        }
    })
    .map_err(Failure::runtime)?;

    let mut block = Block::new();
    block.push("instance", instance_label(&inst, path));
    block.push("status", result.status.as_str());
    block.float("value", result.value);
    block.float("best_bound", result.best_bound);
    block.float("gap", result.gap());
    block.push("nodes", result.nodes);
    block.push("max_depth", result.max_depth);
    block.float("root_bound", result.root_bound);
    block.float("root_lp_bound", result.root_lp_bound);
    block.float("root_mccormick_bound", result.root_mccormick_bound);
    block.float("root_gap", result.root_gap);
    block.push("lp_pivots", result.lp_pivots);
    if let Some(x) = &result.incumbent {
        block.floats("x", x);
    }
    if common.timing {
        block.push("elapsed", format!("{:.3}", result.elapsed.as_secs_f64()));
    }
    emit(common, &block.render(common.json))?;
    Ok(match result.status {
        SolveStatus::Optimal | SolveStatus::Infeasible => 0,
        SolveStatus::GapLimit | SolveStatus::TimeLimit => 1,
    })
}

fn bound(path: &Path, cut_cap: Cap, triangles: bool, iters: usize, time_limit: Option<f64>, common: &CommonArgs) -> Outcome {
    let inst = read_instance(path)?;
    let n = inst.n();
    let centre: Vec<f64> = inst.lower().iter().zip(inst.upper()).map(|(l, u)| 0.5 * (l + u)).collect();
    let ls = LocalSearchConfig {
        perturbations: 4,
        seed: common.seed.unwrap_or(0),
    };
    let incumbent = local_search(&inst, &centre, inst.lower(), inst.upper(), ls);
    let value = incumbent.as_ref().map_or(f64::INFINITY, |x| inst.objective(x));

    let mut dcfg = DualConfig::for_n(n);
    dcfg.cut_cap = cut_cap.resolve(n);
    dcfg.max_iter = iters.max(1);
    dcfg.time_limit = seconds(time_limit)?;
    dcfg.use_triangles = triangles;
    dcfg.target = value.is_finite().then_some(value);
    let start = std::time::Instant::now();
    let run = run_heuristic(&inst, inst.lower(), inst.upper(), &dcfg, None).map_err(Failure::runtime)?;
    if common.verbose {
        for row in &run.trace {
            eprintln!(
                "iter={} bound={:.6} working_set={} lambda_min={:.3e}",
                row.iteration, row.bound, row.working_set, row.lambda_min
            );
        }
    }
    let best = run.state.best_bound;
    let gap = if value.is_finite() {
        ((value - best) / value.abs().max(1.0)).max(0.0)
    } else {
        f64::INFINITY
    };

    let mut block = Block::new();
    block.push("instance", instance_label(&inst, path));
    block.push("p", dcfg.cut_cap);
    block.float("bound", best);
    block.float("last_bound", run.bounds.last().copied().unwrap_or(f64::NEG_INFINITY));
    block.float("incumbent", value);
    block.float("gap", gap);
    block.push("iterations", run.iterations);
    block.push("working_set", run.state.working_len());
    if let Some(x) = &incumbent {
        block.floats("x", x);
    }
    if common.timing {
        block.push("elapsed", format!("{:.3}", start.elapsed().as_secs_f64()));
    }
    emit(common, &block.render(common.json))?;
    Ok(0)
}

fn cuts_audit(boxes: usize, common: &CommonArgs) -> Outcome {
    if boxes == 0 {
        return Err(Failure::usage("--boxes must be positive"));
    }
    let report = audit_candidates(boxes, common.seed.unwrap_or(0)).map_err(Failure::runtime)?;
    let mut text = String::from("kind\tindices\tt\tviolation_at_witness\tredundancy_lp\n");
    for c in &report.candidates {
        let (kind, t) = match c.retained {
            Some(t) => ("triangle", t.to_string()),
            None => ("redundant", "-".to_string()),
        };
        let witness = c.witness_error.map_or("-".to_string(), |e| format!("{e:.3e}"));
        text.push_str(&format!(
            "{kind}\tfamily={},variant={}\t{t}\t{witness}\t{:.6e}\n",
            c.family, c.variant, c.max_lp_value
        ));
    }
    let witness_ok = report
        .candidates
        .iter()
        .all(|c| c.witness_error.is_none_or(|e| e <= 1e-9) && c.witness_mccormick.is_none_or(|v| v <= 1e-9));
    text.push_str(&format!("boxes={boxes}\n"));
    text.push_str(&format!("retained_match={}\n", report.matches_retained()));
    text.push_str(&format!("witness_exact={witness_ok}\n"));
    text.push_str(&report.summary());
    text.push('\n');
    emit(common, &text)?;
    Ok(if report.matches_retained() && witness_ok { 0 } else { 1 })
}

fn cuts_pool(path: &Path, triangles: bool, common: &CommonArgs) -> Outcome {
    let inst = read_instance(path)?;
    let (lo, up) = (inst.lower(), inst.upper());
    let cfg = CuttingPlaneConfig::for_n(inst.n(), triangles);
    let lp = solve_node_lp(&inst, lo, up, &CutPool::new(lo, up), &cfg).map_err(Failure::runtime)?;
    let mut text = String::from("key\tslack\n");
    let point = &lp.solution.point;
    let mut keys: Vec<_> = lp.pool.cuts().iter().filter_map(|c| c.key().map(|k| (k, c))).collect();
    keys.sort_by_key(|(k, _)| *k);
    for (key, cut) in keys {
        text.push_str(&format!("{key}\t{:.3e}\n", -cut.violation(point)));
    }
    text.push_str(&format!("cuts={}\n", lp.pool.len()));
    text.push_str(&format!("rounds={}\n", lp.rounds));
    text.push_str(&format!("lp_bound={}\n", output::fmt_float(lp.solution.bound)));
    text.push_str(&format!("mccormick_bound={}\n", output::fmt_float(lp.mccormick_bound)));
    emit(common, &text)?;
    Ok(0)
}

fn gen(n: usize, m: usize, density: f64, suite: Option<usize>, common: &CommonArgs) -> Outcome {
    let seed = common.seed.unwrap_or(1);
    match suite {
        None => {
            let inst = gen_unitbox(n, m, density, seed).map_err(|e| Failure::usage(e.to_string()))?;
            let mut json = inst.to_json();
            json.push('\n');
            emit(common, &json)?;
        }
        Some(count) => {
            let dir = common
                .output
                .as_ref()
                .ok_or_else(|| Failure::usage("--suite needs --output DIR"))?;
            std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
            let base = common.seed.unwrap_or(bench::SUITE_SEED);
            for inst in unitbox_suite(count, base).map_err(Failure::runtime)? {
                let name = inst.name().map(str::to_owned).unwrap_or_else(|| unitbox_name(inst.n(), inst.m(), 0, density));
                let file = dir.join(format!("{name}.json"));
                std::fs::write(&file, inst.to_json()).map_err(|e| Failure::input(format!("{}: {e}", file.display())))?;
                println!("{}", file.display());
            }
        }
    }
    Ok(0)
}
