//! Spatial branch-and-bound.
//!
//! Nodes are boxes. Each node solves the linearization with McCormick and
//! (optionally) triangle cuts generated for its own box; at the root and
//! every `refresh_depth` levels the dual heuristic and the convexified
//! objective add their bounds. Nodes are explored best-bound first.

mod local;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

pub use local::{local_search, LocalSearchConfig};

use crate::cuts::CutPool;
use crate::dual::{run_heuristic, DualConfig};
use crate::error::{Error, Result};
use crate::model::{QcqpInstance, FEAS_TOL};
use crate::relax::{frank_wolfe_warm, solve_node_lp, CuttingPlaneConfig, RelaxStatus, RelaxationSolution};

/// A node is a leaf when every `|Y_ij − x_i x_j|` is at most this.
pub const LIFT_TOL: f64 = 1e-6;
/// Branch points stay this fraction of the width away from the box ends.
pub const CLAMP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct BnbConfig {
    pub eps_rel: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub use_triangles: bool,
    /// Working-set cap of the dual heuristic.
    pub cut_cap: usize,
    /// Depth interval between dual refreshes; 0 disables the dual entirely.
    pub refresh_depth: usize,
    pub dual_iters_root: usize,
    pub dual_iters_node: usize,
    pub fw_iters_root: usize,
    pub fw_iters_node: usize,
    /// Nodes between local-search attempts away from the root.
    pub heuristic_period: usize,
    pub seed: u64,
    pub threads: usize,
    /// Nodes between progress reports.
    pub progress_every: usize,
}

impl BnbConfig {
    pub fn for_n(n: usize) -> Self {
        BnbConfig {
            eps_rel: 1e-4,
            time_limit: None,
            node_limit: None,
            use_triangles: true,
            cut_cap: DualConfig::default_p(n),
            refresh_depth: 5,
            dual_iters_root: 300,
            dual_iters_node: 60,
            fw_iters_root: 50,
            fw_iters_node: 10,
            heuristic_period: 10,
            seed: 0,
            threads: 1,
            progress_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnbNode {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bound: f64,
    pub depth: usize,
    pub pool: CutPool,
    id: usize,
}

impl BnbNode {
    pub fn root(inst: &QcqpInstance) -> Self {
        BnbNode {
            lower: inst.lower().to_vec(),
            upper: inst.upper().to_vec(),
            bound: f64::NEG_INFINITY,
            depth: 0,
            pool: CutPool::new(inst.lower(), inst.upper()),
            id: 0,
        }
    }
}

struct Queued(BnbNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // max-heap: smallest bound, then deepest, then oldest on top
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then(self.0.depth.cmp(&other.0.depth))
            .then(other.0.id.cmp(&self.0.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Node budget exhausted with a gap remaining.
    GapLimit,
    TimeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GlobalResult {
    pub status: SolveStatus,
    pub incumbent: Option<Vec<f64>>,
    /// Objective of the incumbent, `+∞` without one.
    pub value: f64,
    pub best_bound: f64,
    pub nodes: usize,
    /// `(value − root_bound) / max(1, |value|)` with the final incumbent.
    pub root_gap: f64,
    pub root_bound: f64,
    /// Root LP bound after cut generation (no dual, no convexified objective).
    pub root_lp_bound: f64,
    /// Root LP bound with McCormick cuts only.
    pub root_mccormick_bound: f64,
    pub lp_pivots: usize,
    pub max_depth: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl GlobalResult {
    /// `(value − best_bound) / max(1, |value|)`.
    pub fn gap(&self) -> f64 {
        if self.value.is_finite() {
            ((self.value - self.best_bound) / self.value.abs().max(1.0)).max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Snapshot passed to progress callbacks.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub nodes: usize,
    pub open: usize,
    pub best_bound: f64,
    pub incumbent: f64,
    pub gap: f64,
    pub elapsed: Duration,
}

/// Index of the variable with the largest total lifting mismatch
/// `Σ_j |Y_ij − x_i x_j|`, or `None` when the point is lifted-consistent.
pub fn branching_variable(sol: &RelaxationSolution) -> Option<usize> {
    let p = &sol.point;
    if p.max_mismatch() <= LIFT_TOL {
        return None;
    }
    let n = p.n();
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..n {
        let score: f64 = (0..n).map(|j| p.mismatch(i, j)).sum();
        if score > best.1 {
            best = (i, score);
        }
    }
    Some(best.0)
}

/// Splits the node on [`branching_variable`] at its relaxation value, clamped
/// into the middle 60% of the interval. Children carry the parent pool with
/// coefficients regenerated for their boxes.
pub fn branch(node: &BnbNode, sol: &RelaxationSolution) -> Result<(BnbNode, BnbNode)> {
    let i = branching_variable(sol)
        .ok_or_else(|| Error::InvalidArgument("cannot branch on a lifted-consistent point".into()))?;
    let (l, u) = (node.lower[i], node.upper[i]);
    let w = u - l;
    let at = sol.point.x[i].clamp(l + CLAMP_FRACTION * w, u - CLAMP_FRACTION * w);
    let mut left_upper = node.upper.clone();
    left_upper[i] = at;
    let mut right_lower = node.lower.clone();
    right_lower[i] = at;
    let left = BnbNode {
        pool: node.pool.regenerate(&node.lower, &left_upper),
        lower: node.lower.clone(),
        upper: left_upper,
        bound: node.bound,
        depth: node.depth + 1,
        id: 0,
    };
    let right = BnbNode {
        pool: node.pool.regenerate(&right_lower, &node.upper),
        lower: right_lower,
        upper: node.upper.clone(),
        bound: node.bound,
        depth: node.depth + 1,
        id: 0,
    };
    Ok((left, right))
}

enum Fate {
    Infeasible,
    Pruned,
    /// Lifted-consistent relaxation point; no further branching.
    Leaf,
    Branched(Box<(BnbNode, BnbNode)>),
}

struct Outcome {
    fate: Fate,
    bound: f64,
    lp_bound: f64,
    mccormick_bound: f64,
    candidates: Vec<Vec<f64>>,
    pivots: usize,
}

fn cutoff(incumbent: f64, eps: f64) -> f64 {
    if incumbent.is_finite() {
        incumbent - eps * incumbent.abs().max(1.0)
    } else {
        f64::INFINITY
    }
}

fn process(
    inst: &QcqpInstance,
    node: &BnbNode,
    cfg: &BnbConfig,
    incumbent: f64,
    search: bool,
    deadline: Option<Instant>,
) -> Result<Outcome> {
    let n = inst.n();
    let cp = CuttingPlaneConfig {
        deadline,
        ..CuttingPlaneConfig::for_n(n, cfg.use_triangles)
    };
    let mut lp = solve_node_lp(inst, &node.lower, &node.upper, &node.pool, &cp)?;
    let mut pivots = lp.simplex.pivots();
    if lp.solution.status == RelaxStatus::Infeasible {
        return Ok(Outcome {
            fate: Fate::Infeasible,
            bound: f64::INFINITY,
            lp_bound: f64::INFINITY,
            mccormick_bound: f64::INFINITY,
            candidates: Vec::new(),
            pivots,
        });
    }
    let lp_bound = lp.solution.bound;
    let mut bound = node.bound.max(lp_bound);
    let cut = cutoff(incumbent, cfg.eps_rel);
    let mut candidates = Vec::new();

    let x = &lp.solution.point.x;
    if inst.is_feasible(x, FEAS_TOL) {
        candidates.push(x.clone());
    }
    let consistent = lp.solution.point.max_mismatch() <= LIFT_TOL;
    if search || consistent {
        let ls = LocalSearchConfig {
            perturbations: if node.depth == 0 { 4 } else { 0 },
            seed: cfg.seed.wrapping_add(node.id as u64),
        };
        let starts: Vec<Vec<f64>> = if node.depth == 0 {
            let centre = node.lower.iter().zip(&node.upper).map(|(l, u)| 0.5 * (l + u)).collect();
            vec![x.clone(), centre]
        } else {
            vec![x.clone()]
        };
        for s in starts {
            if let Some(found) = local_search(inst, &s, &node.lower, &node.upper, ls) {
                candidates.push(found);
            }
        }
    }
    let incumbent = candidates
        .iter()
        .map(|c| inst.objective(c))
        .fold(incumbent, f64::min);
    let cut = cut.min(cutoff(incumbent, cfg.eps_rel));

    let refresh = cfg.refresh_depth > 0 && node.depth.is_multiple_of(cfg.refresh_depth);
    if refresh && bound < cut && !consistent {
        let dcfg = DualConfig {
            cut_cap: cfg.cut_cap,
            max_iter: if node.depth == 0 { cfg.dual_iters_root } else { cfg.dual_iters_node },
            time_limit: deadline.map(|d| d.saturating_duration_since(Instant::now())),
            sep_period: 10,
            use_triangles: cfg.use_triangles,
            target: incumbent.is_finite().then_some(cut),
            step_a: 1.0,
            step_b: 10.0,
            patience: 20,
        };
        let run = run_heuristic(inst, &node.lower, &node.upper, &dcfg, None)?;
        bound = bound.max(run.state.best_bound);
        let fw_iters = if node.depth == 0 { cfg.fw_iters_root } else { cfg.fw_iters_node };
        if bound < cut && fw_iters > 0 {
            let s0 = crate::relax::assemble_s0(inst, &run.state)?;
            let fw = frank_wolfe_warm(&s0, inst, &mut lp.simplex, 1e-6, fw_iters, deadline)?;
            pivots = lp.simplex.pivots();
            if fw.status == RelaxStatus::Infeasible {
                bound = f64::INFINITY;
            } else {
                bound = bound.max(fw.bound);
            }
        }
    }

    let fate = if bound >= cut {
        Fate::Pruned
    } else if consistent {
        Fate::Leaf
    } else {
        let mut parent = node.clone();
        parent.bound = bound;
        parent.pool = lp.pool.clone();
        Fate::Branched(Box::new(branch(&parent, &lp.solution)?))
    };
    Ok(Outcome {
        fate,
        bound,
        lp_bound,
        mccormick_bound: lp.mccormick_bound,
        candidates,
        pivots,
    })
}

/// Solves the instance to relative tolerance `eps_rel`.
pub fn solve(inst: &QcqpInstance, cfg: &BnbConfig) -> Result<GlobalResult> {
    solve_with_progress(inst, cfg, |_| {})
}

/// [`solve`] reporting a [`Progress`] every `progress_every` nodes.
pub fn solve_with_progress(inst: &QcqpInstance, cfg: &BnbConfig, mut progress: impl FnMut(&Progress)) -> Result<GlobalResult> {
    let start = Instant::now();
    let deadline = cfg.time_limit.map(|t| start + t);
    let threads = cfg.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut heap = BinaryHeap::new();
    heap.push(Queued(BnbNode::root(inst)));
    let mut next_id = 1usize;
    let mut incumbent: Option<Vec<f64>> = None;
    let mut value = f64::INFINITY;
    let mut nodes = 0usize;
    let mut pivots = 0usize;
    let mut max_depth = 0usize;
    // bounds of leaves dropped without a matching feasible point
    let mut leaf_floor = f64::INFINITY;
    // smallest bound among nodes discarded against the cutoff; keeps the
    // reported bound valid within the `eps_rel` slack
    let mut pruned_floor = f64::INFINITY;
    let mut root = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut status = SolveStatus::Optimal;

    loop {
        let cut = cutoff(value, cfg.eps_rel);
        while heap.peek().is_some_and(|q| q.0.bound >= cut) {
            let q = heap.pop().expect("peeked");
            pruned_floor = pruned_floor.min(q.0.bound);
        }
        if heap.is_empty() {
            break;
        }
        if cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            status = SolveStatus::TimeLimit;
            break;
        }
        if cfg.node_limit.is_some_and(|lim| nodes >= lim) {
            status = SolveStatus::GapLimit;
            break;
        }
        let take = if nodes == 0 { 1 } else { threads.min(heap.len()) };
        let batch: Vec<BnbNode> = (0..take).map(|_| heap.pop().expect("non-empty").0).collect();
        let period = cfg.heuristic_period.max(1);
        let outcomes: Vec<Result<Outcome>> = if take == 1 {
            batch
                .iter()
                .map(|nd| process(inst, nd, cfg, value, nd.id % period == 0, deadline))
                .collect()
        } else {
            pool.install(|| {
                batch
                    .par_iter()
                    .map(|nd| process(inst, nd, cfg, value, nd.id % period == 0, deadline))
                    .collect()
            })
        };
        for (node, outcome) in batch.into_iter().zip(outcomes) {
            let out = outcome?;
            nodes += 1;
            pivots += out.pivots;
            max_depth = max_depth.max(node.depth);
            if node.depth == 0 {
                root = (out.bound, out.lp_bound, out.mccormick_bound);
            }
            for c in out.candidates {
                let v = inst.objective(&c);
                if v < value {
                    value = v;
                    incumbent = Some(c);
                }
            }
            match out.fate {
                Fate::Infeasible => {}
                Fate::Pruned => pruned_floor = pruned_floor.min(out.bound),
                Fate::Leaf => {
                    if out.bound < cutoff(value, cfg.eps_rel) {
                        leaf_floor = leaf_floor.min(out.bound);
                    } else {
                        pruned_floor = pruned_floor.min(out.bound);
                    }
                }
                Fate::Branched(children) => {
                    let (mut a, mut b) = *children;
                    a.id = next_id;
                    b.id = next_id + 1;
                    next_id += 2;
                    heap.push(Queued(a));
                    heap.push(Queued(b));
                }
            }
            if cfg.progress_every > 0 && nodes.is_multiple_of(cfg.progress_every) {
                let open_min = heap.peek().map_or(f64::INFINITY, |q| q.0.bound);
                let bb = open_min.min(leaf_floor).min(pruned_floor).min(value);
                progress(&Progress {
                    nodes,
                    open: heap.len(),
                    best_bound: bb,
                    incumbent: value,
                    gap: if value.is_finite() { (value - bb) / value.abs().max(1.0) } else { f64::INFINITY },
                    elapsed: start.elapsed(),
                });
            }
        }
    }

    let open_min = heap.iter().map(|q| q.0.bound).fold(f64::INFINITY, f64::min);
    let mut best_bound = open_min.min(leaf_floor).min(pruned_floor).min(value);
    if status != SolveStatus::Optimal && best_bound == f64::INFINITY {
        best_bound = root.0;
    }
    if status == SolveStatus::Optimal {
        if incumbent.is_none() && leaf_floor == f64::INFINITY {
            status = SolveStatus::Infeasible;
        } else if incumbent.is_none() || best_bound < cutoff(value, cfg.eps_rel) - 1e-12 * value.abs().max(1.0) {
            // consistent leaves without a verified feasible point keep a gap open
            status = SolveStatus::GapLimit;
        }
    }
    let root_gap = if value.is_finite() {
        ((value - root.0) / value.abs().max(1.0)).max(0.0)
    } else {
        f64::INFINITY
    };
    Ok(GlobalResult {
        status,
        incumbent,
        value,
        best_bound,
        nodes,
        root_gap,
        root_bound: root.0,
        root_lp_bound: root.1,
        root_mccormick_bound: root.2,
        lp_pivots: pivots,
        max_depth,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::model::LiftedPoint;

    fn sol_at(x: &[f64], y: SymMatrix) -> RelaxationSolution {
        RelaxationSolution {
            point: LiftedPoint { x: x.to_vec(), lifted: y },
            bound: 0.0,
            value: 0.0,
            status: RelaxStatus::Optimal,
            iterations: 0,
        }
    }

    #[test]
    fn branch_splits() {
        let inst = QcqpInstance::new(vec![SymMatrix::zeros(2)], vec![vec![0.0; 2]], vec![], vec![0.0; 2], vec![1.0; 2]).unwrap();
        let node = BnbNode::root(&inst);
        let mut y = SymMatrix::zeros(2);
        y.set(0, 0, 0.5);
        let (a, b) = branch(&node, &sol_at(&[0.5, 0.0], y.clone())).unwrap();
        assert_eq!((a.upper[0], b.lower[0]), (0.5, 0.5));
        assert_eq!((a.lower.clone(), b.upper.clone()), (vec![0.0; 2], vec![1.0; 2]));
        let (a, _) = branch(&node, &sol_at(&[0.01, 0.0], y)).unwrap();
        assert!((a.upper[0] - 0.2).abs() < 1e-15);
        assert!(branch(&node, &sol_at(&[0.3, 0.4], LiftedPoint::from_x(&[0.3, 0.4]).lifted)).is_err());
    }

    #[test]
    fn bilinear_root_only() {
        let inst = QcqpInstance::new(
            vec![SymMatrix::from_dense(&[vec![0.0, -0.5], vec![-0.5, 0.0]])],
            vec![vec![0.0; 2]],
            vec![],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        let r = solve(&inst, &BnbConfig::for_n(2)).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.nodes, 1);
        assert!((r.value + 1.0).abs() < 1e-9);
        let x = r.incumbent.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_instance() {
        let inst = QcqpInstance::new(
            vec![SymMatrix::zeros(1), SymMatrix::identity(1)],
            vec![vec![0.0], vec![0.0]],
            vec![-1.0],
            vec![0.0],
            vec![1.0],
        )
        .unwrap();
        let r = solve(&inst, &BnbConfig::for_n(1)).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.incumbent.is_none());
    }

    #[test]
    fn small_generated_instances_close() {
        for seed in 0..4 {
            let inst = crate::model::gen_unitbox(3, 2, 0.8, seed).unwrap();
            let r = solve(&inst, &BnbConfig::for_n(3)).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal, "seed {seed}");
            assert!(r.best_bound <= r.value);
            assert!(r.gap() <= 1e-4);
            assert!(inst.is_feasible(r.incumbent.as_ref().unwrap(), FEAS_TOL));
        }
    }
}
