//! Node relaxations: the standard linearization with cut rows, a lazy
//! cutting-plane loop over it, and the convexified objective solved by
//! Frank–Wolfe over the LP polytope.
//!
//! The lifted LP has columns `x_0..x_{n-1}` followed by the upper triangle of
//! `Y` in packed row order, so `Y_ij` (i ≤ j) is column `n + packed(i, j)`.

use crate::cuts::{separate_with, Cut, CutKey, CutKind, CutPool, Families, VIOLATION_TOL};
use crate::dual::{lagrangian, DualState};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, packed_index, SymMatrix, PSD_TOL};
use crate::lp::{LinearRow, LpProblem, LpStatus, Simplex};
use crate::model::{LiftedPoint, QcqpInstance};
use std::time::Instant;

/// Number of lifted LP columns for `n` original variables.
pub fn lifted_dim(n: usize) -> usize {
    n + n * (n + 1) / 2
}

/// Column of `Y_ij`.
pub fn y_column(n: usize, i: usize, j: usize) -> usize {
    n + packed_index(n, i, j)
}

/// Splits an LP column vector into `(x, Y)`.
pub fn lifted_point(n: usize, z: &[f64]) -> LiftedPoint {
    let x = z[..n].to_vec();
    let mut y = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            y.set(i, j, z[y_column(n, i, j)]);
        }
    }
    LiftedPoint { x, lifted: y }
}

/// Perturbation matrices `S_0..S_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    pub shifts: Vec<SymMatrix>,
}

impl PerturbationSet {
    /// All zero: the standard linearization.
    pub fn zero(inst: &QcqpInstance) -> Self {
        PerturbationSet {
            shifts: vec![SymMatrix::zeros(inst.n()); inst.m() + 1],
        }
    }

    /// `S_0` given, `S_r = 0` otherwise.
    pub fn objective_only(inst: &QcqpInstance, s0: SymMatrix) -> Self {
        let mut set = Self::zero(inst);
        set.shifts[0] = s0;
        set
    }

    pub fn is_psd(&self) -> Result<bool> {
        for s in &self.shifts {
            if min_eigenvalue(s)?.0 < PSD_TOL {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `⟨S_r, xxᵀ⟩ + c_rᵀx + ⟨Q_r − S_r, Y⟩`.
pub fn f_perturbed(inst: &QcqpInstance, r: usize, s: &SymMatrix, p: &LiftedPoint) -> f64 {
    let sx = s.mul_vec(&p.x);
    let quad: f64 = sx.iter().zip(&p.x).map(|(a, b)| a * b).sum();
    let lin: f64 = inst.linear(r).iter().zip(&p.x).map(|(a, b)| a * b).sum();
    quad + lin + p.lifted.inner(inst.quadratic(r)) - p.lifted.inner(s)
}

/// Lifted coefficients of `c_rᵀx + ⟨A, Y⟩` as a dense column vector.
fn linear_objective(n: usize, a: &SymMatrix, c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lifted_dim(n)];
    out[..n].copy_from_slice(c);
    for i in 0..n {
        out[y_column(n, i, i)] = a.get(i, i);
        for j in i + 1..n {
            out[y_column(n, i, j)] = 2.0 * a.get(i, j);
        }
    }
    out
}

/// LP row of a cut (`lhs ≤ 0`).
pub fn cut_row(n: usize, cut: &Cut) -> LinearRow {
    let mut coeffs: Vec<(usize, f64)> = cut.x_terms.clone();
    for &(p, q, a) in &cut.y_terms {
        coeffs.push((y_column(n, p, q), a));
    }
    LinearRow::le(coeffs, -cut.constant)
}

fn constraint_row(inst: &QcqpInstance, r: usize) -> LinearRow {
    let n = inst.n();
    let dense = linear_objective(n, inst.quadratic(r), inst.linear(r));
    let coeffs = dense
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .collect();
    LinearRow::le(coeffs, inst.rhs_at(r))
}

/// The standard linearization over the box: linearized constraints, every
/// pool cut, `x` in the box and `Y_ij` between its corner products.
pub fn build_linearization(inst: &QcqpInstance, lower: &[f64], upper: &[f64], pool: &CutPool) -> LpProblem {
    let n = inst.n();
    let mut rows: Vec<LinearRow> = (1..=inst.m()).map(|r| constraint_row(inst, r)).collect();
    rows.extend(pool.cuts().iter().map(|c| cut_row(n, c)));
    let mut var_lower = lower.to_vec();
    let mut var_upper = upper.to_vec();
    var_lower.resize(lifted_dim(n), 0.0);
    var_upper.resize(lifted_dim(n), 0.0);
    for i in 0..n {
        for j in i..n {
            let corners = [
                lower[i] * lower[j],
                lower[i] * upper[j],
                upper[i] * lower[j],
                upper[i] * upper[j],
            ];
            let col = y_column(n, i, j);
            var_lower[col] = corners.iter().copied().fold(f64::INFINITY, f64::min);
            var_upper[col] = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    LpProblem {
        cost: linear_objective(n, inst.quadratic(0), inst.linear(0)),
        rows,
        var_lower,
        var_upper,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxStatus {
    Optimal,
    /// Stopped at an iteration or round limit; the bound is still valid.
    Limit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct RelaxationSolution {
    pub point: LiftedPoint,
    /// Valid lower bound over the node box.
    pub bound: f64,
    /// Objective at `point`.
    pub value: f64,
    pub status: RelaxStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CuttingPlaneConfig {
    pub use_triangles: bool,
    /// No new round starts after this instant.
    pub deadline: Option<Instant>,
    /// Triangle cuts admitted per round.
    pub triangle_cap: usize,
    pub max_rounds: usize,
}

impl CuttingPlaneConfig {
    pub fn for_n(n: usize, use_triangles: bool) -> Self {
        CuttingPlaneConfig {
            use_triangles,
            deadline: None,
            triangle_cap: 4 * n.max(1),
            max_rounds: 40,
        }
    }
}

/// Outcome of [`solve_node_lp`]; keeps the warm simplex for reuse.
#[derive(Debug, Clone)]
pub struct NodeLp {
    pub simplex: Simplex,
    /// Keys of every cut row in `simplex`, in row order after the `m`
    /// constraint rows.
    pub pool: CutPool,
    pub solution: RelaxationSolution,
    /// LP bound once no McCormick cut is violated, before any triangle round.
    pub mccormick_bound: f64,
    pub rounds: usize,
}

fn lp_solution(simplex: &Simplex, n: usize, status: LpStatus, rounds: usize) -> RelaxationSolution {
    match status {
        LpStatus::Optimal => {
            let z = simplex.x();
            RelaxationSolution {
                point: lifted_point(n, &z),
                bound: simplex.objective(),
                value: simplex.objective(),
                status: RelaxStatus::Optimal,
                iterations: rounds,
            }
        }
        _ => RelaxationSolution {
            point: LiftedPoint::from_x(&vec![0.0; n]),
            bound: f64::INFINITY,
            value: f64::INFINITY,
            status: RelaxStatus::Infeasible,
            iterations: rounds,
        },
    }
}

/// Triangle rounds stop once the bound gained less than `TAIL_TOL` (relative)
/// over the last `TAIL_ROUNDS` rounds.
const TAIL_ROUNDS: usize = 3;
const TAIL_TOL: f64 = 1e-5;

/// Drops cut rows that are strictly slack at a nondegenerate basic slack,
/// keeping the pool aligned with the rows after the `m` constraint rows.
fn purge_inactive(simplex: &mut Simplex, pool: &mut CutPool, m: usize) {
    let slack: Vec<bool> = (0..simplex.num_rows())
        .map(|r| r >= m && simplex.slack(r) > 1e-6 * (1.0 + simplex.rows()[r].rhs.abs()))
        .collect();
    let removed = simplex.remove_rows(|r| slack[r]);
    if !removed.is_empty() {
        let gone: std::collections::HashSet<usize> = removed.into_iter().map(|r| r - m).collect();
        pool.retain_positions(|i| !gone.contains(&i));
    }
}

/// Solves the linearization over the box with cuts added lazily.
///
/// `inherited` cut keys are regenerated for the box and kept in reserve:
/// each round first admits every violated reserve cut. McCormick cuts (diagonal included) are then separated to exhaustion; the
/// LP optimum at that point equals the optimum with the full McCormick pool.
/// Triangle rounds follow when enabled, each admitting at most
/// `triangle_cap` triangle cuts plus every violated McCormick cut. Cut rows
/// that go slack are dropped between rounds; the bound sequence stays
/// nondecreasing because each round starts from an optimum of the smaller LP.
pub fn solve_node_lp(
    inst: &QcqpInstance,
    lower: &[f64],
    upper: &[f64],
    inherited: &CutPool,
    config: &CuttingPlaneConfig,
) -> Result<NodeLp> {
    let n = inst.n();
    let reserve = inherited.regenerate(lower, upper);
    let mut pool = CutPool::new(lower, upper);
    let mut simplex = Simplex::new(&build_linearization(inst, lower, upper, &pool))?;
    let mut status = simplex.solve()?;
    let mut rounds = 0;
    let mccormick_only = Families {
        mccormick: true,
        diagonal: true,
        triangles: false,
    };
    let triangles_only = Families {
        mccormick: false,
        diagonal: false,
        triangles: true,
    };
    let mut mccormick_bound = f64::INFINITY;
    let mut phase_triangles = false;
    let mut history: Vec<f64> = Vec::new();
    let mut stalled = false;
    loop {
        if status != LpStatus::Optimal {
            break;
        }
        purge_inactive(&mut simplex, &mut pool, inst.m());
        let point = lifted_point(n, &simplex.x());
        let known = |k: &CutKey| pool.contains(k) || reserve.contains(k);
        let violated_reserve = |triangles: bool| -> Vec<(f64, Cut)> {
            reserve
                .cuts()
                .iter()
                .filter(|c| matches!(c.kind, CutKind::Triangle(_)) == triangles)
                .filter(|c| !pool.contains(&c.key().expect("keyed cut")))
                .map(|c| (c.violation(&point), c))
                .filter(|(v, _)| *v > VIOLATION_TOL)
                .map(|(v, c)| (v, c.clone()))
                .collect()
        };
        let mut found: Vec<Cut> = violated_reserve(false).into_iter().map(|(_, c)| c).collect();
        found.extend(separate_with(&point, lower, upper, usize::MAX, known, mccormick_only));
        if phase_triangles {
            history.push(simplex.objective());
            let tailing = history.len() > TAIL_ROUNDS && {
                let now = history[history.len() - 1];
                let then = history[history.len() - 1 - TAIL_ROUNDS];
                now - then < TAIL_TOL * now.abs().max(1.0)
            };
            if !tailing {
                let mut tri = violated_reserve(true);
                for c in separate_with(&point, lower, upper, config.triangle_cap, known, triangles_only) {
                    tri.push((c.violation(&point), c));
                }
                tri.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.key().cmp(&b.1.key())));
                found.extend(tri.into_iter().take(config.triangle_cap).map(|(_, c)| c));
            }
        }
        if found.is_empty() {
            if !phase_triangles {
                mccormick_bound = simplex.objective();
                if config.use_triangles {
                    phase_triangles = true;
                    continue;
                }
            }
            break;
        }
        if rounds >= config.max_rounds {
            break;
        }
        if config.deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        rounds += 1;
        let before = (simplex.clone(), pool.clone());
        for cut in found {
            simplex.add_row(cut_row(n, &cut))?;
            pool.push(cut);
        }
        match simplex.solve() {
            Ok(st) => status = st,
            Err(Error::LpStalled(_)) => {
                // keep the last optimum; its bound is still valid
                (simplex, pool) = before;
                stalled = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if status == LpStatus::Optimal && mccormick_bound.is_infinite() {
        mccormick_bound = simplex.objective();
    }
    let solution = lp_solution(&simplex, n, status, rounds);
    let complete = rounds < config.max_rounds && !stalled;
    let solution = RelaxationSolution {
        status: if solution.status == RelaxStatus::Optimal && !complete {
            RelaxStatus::Limit
        } else {
            solution.status
        },
        ..solution
    };
    Ok(NodeLp {
        simplex,
        pool,
        solution,
        mccormick_bound,
        rounds,
    })
}

/// `S_0* = Q_0 + Σ α_r Q_r + Φ + Δ`.
pub fn assemble_s0(inst: &QcqpInstance, state: &DualState) -> Result<SymMatrix> {
    Ok(lagrangian(inst, state)?.quadratic)
}

/// Frank–Wolfe on `f_{0,S0}` over the polytope of `lp` (its cost is ignored).
pub fn frank_wolfe(s0: &SymMatrix, inst: &QcqpInstance, lp: &LpProblem, tol: f64, max_iter: usize) -> Result<RelaxationSolution> {
    let mut simplex = Simplex::new(lp)?;
    frank_wolfe_warm(s0, inst, &mut simplex, tol, max_iter, None)
}

/// [`frank_wolfe`] reusing a simplex over the polytope; its cost is
/// overwritten.
///
/// Each iterate `z` yields the minorant `φ(z) + ∇φ(z)ᵀ(s − z)`, where `s`
/// minimizes the linearization over the polytope; by convexity it bounds the
/// minimum from below, and the best one seen is returned as `bound`.
pub fn frank_wolfe_warm(
    s0: &SymMatrix,
    inst: &QcqpInstance,
    simplex: &mut Simplex,
    tol: f64,
    max_iter: usize,
    deadline: Option<Instant>,
) -> Result<RelaxationSolution> {
    let n = inst.n();
    if s0.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            found: s0.dim(),
        });
    }
    let lmin = min_eigenvalue(s0)?.0;
    if lmin < PSD_TOL {
        return Err(Error::NotPsd(lmin));
    }
    let mut residual = inst.quadratic(0).clone();
    residual.axpy(-1.0, s0);
    let y_cost = linear_objective(n, &residual, inst.linear(0));
    let value_at = |z: &[f64]| -> f64 {
        let x = &z[..n];
        let sx = s0.mul_vec(x);
        let quad: f64 = sx.iter().zip(x).map(|(a, b)| a * b).sum();
        quad + y_cost.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    };
    let gradient = |z: &[f64]| -> Vec<f64> {
        let sx = s0.mul_vec(&z[..n]);
        let mut g = y_cost.clone();
        for i in 0..n {
            g[i] += 2.0 * sx[i];
        }
        g
    };

    // start from the vertex minimizing the linearization at the box centre
    let centre: Vec<f64> = {
        let mut c = vec![0.0; lifted_dim(n)];
        for i in 0..n {
            c[i] = 0.5 * (inst.lower()[i] + inst.upper()[i]);
        }
        c
    };
    simplex.set_cost(&gradient(&centre))?;
    match simplex.solve() {
        Ok(LpStatus::Optimal) => {}
        Ok(_) => return Ok(lp_solution(simplex, n, LpStatus::Infeasible, 0)),
        Err(Error::LpStalled(_)) => {
            return Ok(RelaxationSolution {
                point: lifted_point(n, &centre[..n]),
                bound: f64::NEG_INFINITY,
                value: f64::INFINITY,
                status: RelaxStatus::Limit,
                iterations: 0,
            })
        }
        Err(e) => return Err(e),
    }
    let mut z = simplex.x();
    let mut value = value_at(&z);
    let mut bound = f64::NEG_INFINITY;
    let mut status = RelaxStatus::Limit;
    let mut iterations = 0;
    for k in 0..max_iter {
        iterations = k + 1;
        let g = gradient(&z);
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        simplex.set_cost(&g)?;
        match simplex.solve() {
            Ok(LpStatus::Optimal) => {}
            Ok(_) => return Ok(lp_solution(simplex, n, LpStatus::Infeasible, iterations)),
            // the bound so far remains valid
            Err(Error::LpStalled(_)) => break,
            Err(e) => return Err(e),
        }
        let s = simplex.x();
        let dir: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a - b).collect();
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let gap = -slope;
        bound = bound.max(value - gap);
        if gap <= tol {
            status = RelaxStatus::Optimal;
            break;
        }
        let dx = &dir[..n];
        let curv: f64 = s0.mul_vec(dx).iter().zip(dx).map(|(a, b)| a * b).sum();
        let step = if curv > 0.0 {
            (gap / (2.0 * curv)).min(1.0)
        } else {
            1.0
        };
        for (zi, di) in z.iter_mut().zip(&dir) {
            *zi += step * di;
        }
        value = value_at(&z);
    }
    Ok(RelaxationSolution {
        point: lifted_point(n, &z),
        bound,
        value,
        status,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuts::CutPool;
    use crate::lp::solve_lp;

    fn bilinear(sign: f64) -> QcqpInstance {
        QcqpInstance::new(
            vec![SymMatrix::from_dense(&[vec![0.0, 0.5 * sign], vec![0.5 * sign, 0.0]])],
            vec![vec![0.0, 0.0]],
            vec![],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn perturbed_forms() {
        let inst = crate::model::gen_unitbox(3, 1, 1.0, 5).unwrap();
        let x = [0.2, 0.7, 0.4];
        let exact = LiftedPoint::from_x(&x);
        let mut psd = SymMatrix::identity(3);
        psd.set(0, 1, 0.3);
        for r in 0..=1 {
            let want = if r == 0 { inst.objective(&x) } else { inst.evaluate_constraint(r, &x).unwrap() };
            assert!((f_perturbed(&inst, r, &psd, &exact) - want).abs() < 1e-10);
        }
        let p = LiftedPoint {
            x: x.to_vec(),
            lifted: SymMatrix::from_diag(&[0.1, 0.2, 0.3]),
        };
        let lin: f64 = inst.linear(0).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + p.lifted.inner(inst.quadratic(0));
        assert!((f_perturbed(&inst, 0, &SymMatrix::zeros(3), &p) - lin).abs() < 1e-12);

        let id = QcqpInstance::new(vec![SymMatrix::identity(4)], vec![vec![0.0; 4]], vec![], vec![0.0; 4], vec![1.0; 4]).unwrap();
        let p = LiftedPoint {
            x: vec![1.0; 4],
            lifted: SymMatrix::zeros(4),
        };
        assert_eq!(f_perturbed(&id, 0, &SymMatrix::identity(4), &p), 4.0);
    }

    #[test]
    fn bilinear_linearizations() {
        let neg = bilinear(-1.0);
        let lp = build_linearization(&neg, neg.lower(), neg.upper(), &CutPool::mccormick(neg.lower(), neg.upper()));
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective + 1.0).abs() < 1e-12);
        let pos = bilinear(1.0);
        let lp = build_linearization(&pos, pos.lower(), pos.upper(), &CutPool::mccormick(pos.lower(), pos.upper()));
        assert!(solve_lp(&lp).unwrap().objective.abs() < 1e-12);
    }

    #[test]
    fn lazy_loop_matches_full_mccormick_pool() {
        for seed in 0..6 {
            let inst = crate::model::gen_unitbox(5, 3, 0.7, seed).unwrap();
            let (lo, hi) = (inst.lower(), inst.upper());
            let full = solve_lp(&build_linearization(&inst, lo, hi, &CutPool::mccormick(lo, hi))).unwrap();
            let cfg = CuttingPlaneConfig::for_n(5, false);
            let lazy = solve_node_lp(&inst, lo, hi, &CutPool::new(lo, hi), &cfg).unwrap();
            assert!((lazy.solution.bound - full.objective).abs() < 1e-8, "seed {seed}");
            assert!(lazy.pool.len() <= CutPool::mccormick(lo, hi).len());
        }
    }

    #[test]
    fn triangles_strengthen() {
        let mut strict = 0;
        for seed in 0..10 {
            let inst = crate::model::gen_unitbox(6, 2, 0.8, seed).unwrap();
            let (lo, hi) = (inst.lower(), inst.upper());
            let with = solve_node_lp(&inst, lo, hi, &CutPool::new(lo, hi), &CuttingPlaneConfig::for_n(6, true)).unwrap();
            let without = solve_node_lp(&inst, lo, hi, &CutPool::new(lo, hi), &CuttingPlaneConfig::for_n(6, false)).unwrap();
            assert_eq!(with.mccormick_bound, without.solution.bound);
            assert!(with.solution.bound >= without.solution.bound - 1e-9);
            if with.solution.bound > without.solution.bound + 1e-6 {
                strict += 1;
            }
        }
        assert!(strict > 0);
    }

    #[test]
    fn frank_wolfe_examples() {
        let sq = QcqpInstance::new(vec![SymMatrix::identity(1)], vec![vec![0.0]], vec![], vec![0.0], vec![1.0]).unwrap();
        let pool = CutPool::mccormick(sq.lower(), sq.upper());
        let lp = build_linearization(&sq, sq.lower(), sq.upper(), &pool);
        let r = frank_wolfe(&SymMatrix::identity(1), &sq, &lp, 1e-6, 200).unwrap();
        assert!(r.point.x[0].abs() < 1e-6 && r.bound.abs() < 1e-6);

        // (x − 0.5)² − 0.25 = x² − x
        let shifted = QcqpInstance::new(vec![SymMatrix::identity(1)], vec![vec![-1.0]], vec![], vec![0.0], vec![1.0]).unwrap();
        let lp = build_linearization(&shifted, shifted.lower(), shifted.upper(), &pool);
        let r = frank_wolfe(&SymMatrix::identity(1), &shifted, &lp, 1e-6, 200).unwrap();
        assert_eq!(r.status, RelaxStatus::Optimal);
        assert!((r.value + 0.25).abs() < 1e-6 && (r.bound + 0.25).abs() < 1e-6);

        let inst = crate::model::gen_unitbox(4, 2, 0.8, 3).unwrap();
        let lp = build_linearization(&inst, inst.lower(), inst.upper(), &CutPool::mccormick(inst.lower(), inst.upper()));
        let direct = solve_lp(&lp).unwrap().objective;
        let r = frank_wolfe(&SymMatrix::zeros(4), &inst, &lp, 1e-9, 10).unwrap();
        assert!((r.bound - direct).abs() < 1e-9);
    }

    #[test]
    fn frank_wolfe_rejects_indefinite() {
        let inst = bilinear(-1.0);
        let lp = build_linearization(&inst, inst.lower(), inst.upper(), &CutPool::new(inst.lower(), inst.upper()));
        assert!(matches!(frank_wolfe(inst.quadratic(0), &inst, &lp, 1e-6, 10), Err(Error::NotPsd(_))));
    }

    #[test]
    fn assemble_zero_state_is_q0() {
        let inst = crate::model::gen_unitbox(4, 2, 0.8, 3).unwrap();
        let st = DualState::zero(&inst, inst.lower(), inst.upper());
        assert_eq!(&assemble_s0(&inst, &st).unwrap(), inst.quadratic(0));
    }
}
