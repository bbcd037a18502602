//! Paired benchmark: every instance is solved with and without triangle cuts.

use std::path::PathBuf;

use qcqp_core::bnb::{solve, GlobalResult, SolveStatus};
use qcqp_core::model::unitbox_suite;
use qcqp_core::QcqpInstance;

use crate::output::{fmt_float, Block};
use crate::{bnb_config, emit, instance_label, read_instance, CommonArgs, Failure, Outcome, SolverArgs};

/// First seed of the generated suite.
pub const SUITE_SEED: u64 = 1000;
/// Node budget per run unless `--node-limit` is given.
pub const DEFAULT_NODE_LIMIT: usize = 400;

/// Root bound differences above this count as strict improvements.
const STRICT_TOL: f64 = 1e-6;
/// Slack allowed when checking that triangles never weaken the root bound.
const ORDER_TOL: f64 = 1e-9;

struct Row {
    name: String,
    n: usize,
    m: usize,
    on: GlobalResult,
    off: GlobalResult,
}

impl Row {
    /// Best objective seen by either run.
    fn reference(&self) -> f64 {
        self.on.value.min(self.off.value)
    }

    fn root_gap(&self, r: &GlobalResult) -> f64 {
        let v = self.reference();
        if v.is_finite() {
            ((v - r.root_lp_bound) / v.abs().max(1.0)).max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

fn limited(r: &GlobalResult) -> bool {
    matches!(r.status, SolveStatus::GapLimit | SolveStatus::TimeLimit)
}

pub fn run(paths: &[PathBuf], count: usize, solver: &SolverArgs, common: &CommonArgs) -> Outcome {
    let named: Vec<(String, QcqpInstance)> = if paths.is_empty() {
        unitbox_suite(count, common.seed.unwrap_or(SUITE_SEED))
            .map_err(Failure::runtime)?
            .into_iter()
            .map(|inst| (inst.name().unwrap_or("unnamed").to_owned(), inst))
            .collect()
    } else {
        paths
            .iter()
            .map(|p| read_instance(p).map(|inst| (instance_label(&inst, p), inst)))
            .collect::<Result<_, _>>()?
    };

    let mut rows = Vec::with_capacity(named.len());
    for (name, inst) in named {
        let mut cfg = bnb_config(inst.n(), solver, common)?;
        cfg.node_limit = Some(solver.node_limit.unwrap_or(DEFAULT_NODE_LIMIT));
        cfg.use_triangles = true;
        let on = solve(&inst, &cfg).map_err(Failure::runtime)?;
        cfg.use_triangles = false;
        let off = solve(&inst, &cfg).map_err(Failure::runtime)?;
        if common.verbose {
            eprintln!("{name}: nodes {} / {}", on.nodes, off.nodes);
        }
        rows.push(Row {
            name,
            n: inst.n(),
            m: inst.m(),
            on,
            off,
        });
    }

    let total = rows.len();
    let ordered = rows
        .iter()
        .filter(|r| r.on.root_lp_bound >= r.off.root_lp_bound - ORDER_TOL)
        .count();
    let strict = rows
        .iter()
        .filter(|r| r.on.root_lp_bound > r.off.root_lp_bound + STRICT_TOL)
        .count();
    let fewer = rows.iter().filter(|r| r.on.nodes <= r.off.nodes).count();
    let log_ratio: f64 = rows
        .iter()
        .map(|r| (r.on.nodes as f64 / r.off.nodes.max(1) as f64).ln())
        .sum();
    let geomean = if total > 0 { (log_ratio / total as f64).exp() } else { f64::NAN };
    let mean = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).sum::<f64>() / total.max(1) as f64;
    let gap_on = mean(&|r| r.root_gap(&r.on));
    let gap_off = mean(&|r| r.root_gap(&r.off));
    let limits_on = rows.iter().filter(|r| limited(&r.on)).count();
    let limits_off = rows.iter().filter(|r| limited(&r.off)).count();

    let mut summary = Block::new();
    summary.push("instances", total);
    summary.push("root_bound_ge", format!("{ordered}/{total}"));
    summary.push("root_bound_strict", format!("{strict}/{total}"));
    summary.push("nodes_le", format!("{fewer}/{total}"));
    summary.float("nodes_geomean_ratio", geomean);
    summary.float("mean_root_gap_on", gap_on);
    summary.float("mean_root_gap_off", gap_off);
    summary.push("limit_hits_on", limits_on);
    summary.push("limit_hits_off", limits_off);

    let text = if common.json {
        let rows_json: Vec<String> = rows
            .iter()
            .map(|r| row_block(r, common.timing).render(true).trim_end().to_owned())
            .collect();
        format!(
            "{{\"rows\":[{}],\"summary\":{}}}\n",
            rows_json.join(","),
            summary.render(true).trim_end()
        )
    } else {
        let mut header = vec![
            "instance", "n", "m", "root_on", "root_off", "root_gap_on", "root_gap_off", "nodes_on", "nodes_off",
            "status_on", "status_off",
        ];
        if common.timing {
            header.extend(["time_on", "time_off"]);
        }
        let mut text = header.join("\t");
        text.push('\n');
        for r in &rows {
            let mut cells = vec![
                r.name.clone(),
                r.n.to_string(),
                r.m.to_string(),
                fmt_float(r.on.root_lp_bound),
                fmt_float(r.off.root_lp_bound),
                format!("{:.4e}", r.root_gap(&r.on)),
                format!("{:.4e}", r.root_gap(&r.off)),
                r.on.nodes.to_string(),
                r.off.nodes.to_string(),
                r.on.status.as_str().to_owned(),
                r.off.status.as_str().to_owned(),
            ];
            if common.timing {
                cells.push(format!("{:.3}", r.on.elapsed.as_secs_f64()));
                cells.push(format!("{:.3}", r.off.elapsed.as_secs_f64()));
            }
            text.push_str(&cells.join("\t"));
            text.push('\n');
        }
        text.push_str(&summary.render(false));
        text
    };
    emit(common, &text)?;
    Ok(if limits_on + limits_off > 0 { 1 } else { 0 })
}

fn row_block(r: &Row, timing: bool) -> Block {
    let mut b = Block::new();
    b.push("instance", &r.name);
    b.push("n", r.n);
    b.push("m", r.m);
    b.float("root_on", r.on.root_lp_bound);
    b.float("root_off", r.off.root_lp_bound);
    b.float("root_gap_on", r.root_gap(&r.on));
    b.float("root_gap_off", r.root_gap(&r.off));
    b.push("nodes_on", r.on.nodes);
    b.push("nodes_off", r.off.nodes);
    b.push("status_on", r.on.status.as_str());
    b.push("status_off", r.off.status.as_str());
    b.float("value_on", r.on.value);
    b.float("value_off", r.off.value);
    if timing {
        b.float("time_on", r.on.elapsed.as_secs_f64());
        b.float("time_off", r.off.elapsed.as_secs_f64());
    }
    b
}
