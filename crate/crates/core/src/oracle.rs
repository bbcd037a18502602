//! Brute-force references: exhaustive grid minimization for tiny instances and
//! LP certificates for redundant candidate cuts.

use rayon::prelude::*;

use crate::bnb::{local_search, LocalSearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cuts::{candidate_cuts, is_retained, mccormick_cuts, triangle_cut, witness_point, Cut, CutKind};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearRow, LpProblem, LpStatus};
use crate::model::QcqpInstance;

/// Largest `n` accepted by [`grid_minimize`].
pub const GRID_MAX_VARS: usize = 4;
/// Constraint tolerance at grid points.
pub const GRID_FEAS_TOL: f64 = 1e-6;
/// A candidate is redundant when its LP max violation is at most this.
pub const REDUNDANCY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub argmin: Vec<f64>,
    /// Largest grid spacing over the coordinates.
    pub resolution: f64,
}

fn grid_point(inst: &QcqpInstance, steps: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .enumerate()
        .map(|(d, &k)| {
            let (l, u) = (inst.lower()[d], inst.upper()[d]);
            if k + 1 == steps {
                u
            } else {
                l + (u - l) * k as f64 / (steps - 1) as f64
            }
        })
        .collect()
}

/// Exhaustive scan of the box at `steps_per_dim` points per coordinate
/// (endpoints included), without polishing.
pub fn grid_scan(inst: &QcqpInstance, steps_per_dim: usize) -> Result<OracleResult> {
    let n = inst.n();
    if n > GRID_MAX_VARS {
        return Err(Error::InvalidArgument(format!(
            "grid oracle limited to n <= {GRID_MAX_VARS}, got {n}"
        )));
    }
    if steps_per_dim < 11 {
        return Err(Error::InvalidArgument("grid oracle needs at least 11 steps".into()));
    }
    let steps = steps_per_dim;
    let total = steps.pow(n as u32);
    let chunk = steps.pow((n - 1) as u32);
    let best = (0..steps)
        .into_par_iter()
        .filter_map(|first| {
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut idx = vec![0usize; n];
            for flat in 0..chunk {
                idx[0] = first;
                let mut rem = flat;
                for d in (1..n).rev() {
                    idx[d] = rem % steps;
                    rem /= steps;
                }
                let x = grid_point(inst, steps, &idx);
                if inst.max_violation(&x) > GRID_FEAS_TOL {
                    continue;
                }
                let v = inst.objective(&x);
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, idx.clone()));
                }
            }
            best
        })
        .reduce_with(|a, b| match a.0.total_cmp(&b.0) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => {
                if a.1 <= b.1 {
                    a
                } else {
                    b
                }
            }
        });
    debug_assert!(total >= 1);
    let (value, idx) = best.ok_or(Error::NoFeasibleGridPoint)?;
    let resolution = (0..n)
        .map(|d| (inst.upper()[d] - inst.lower()[d]) / (steps - 1) as f64)
        .fold(0.0, f64::max);
    Ok(OracleResult {
        value,
        argmin: grid_point(inst, steps, &idx),
        resolution,
    })
}

/// [`grid_scan`] followed by one local-search polish from the best grid
/// point.
pub fn grid_minimize(inst: &QcqpInstance, steps_per_dim: usize) -> Result<OracleResult> {
    let OracleResult {
        mut value,
        mut argmin,
        resolution,
    } = grid_scan(inst, steps_per_dim)?;
    let polish = LocalSearchConfig {
        perturbations: 0,
        seed: 0,
    };
    if let Some(x) = local_search(inst, &argmin, inst.lower(), inst.upper(), polish) {
        let v = inst.objective(&x);
        if v < value {
            value = v;
            argmin = x;
        }
    }
    Ok(OracleResult {
        value,
        argmin,
        resolution,
    })
}

/// Maximum of the candidate's left-hand side over the McCormick relaxation of
/// its triple: variables `x_i, x_j, x_k` and the six entries of `Y` on the
/// triple, constrained by every McCormick cut of the triple (diagonal pairs
/// included) and the box.
pub fn redundancy_value(lower: &[f64], upper: &[f64], candidate: &Cut) -> Result<f64> {
    if candidate.indices.len() != 3 {
        return Err(Error::InvalidArgument("redundancy check needs a triple cut".into()));
    }
    let tri = [candidate.indices[0], candidate.indices[1], candidate.indices[2]];
    let local = |v: usize| tri.iter().position(|&t| t == v);
    // columns: x_0, x_1, x_2, then Y pairs in this order
    let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
    let ycol = |a: usize, b: usize| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        3 + pairs.iter().position(|&p| p == (a, b)).expect("pair of the triple")
    };
    let lo: Vec<f64> = tri.iter().map(|&v| lower[v]).collect();
    let hi: Vec<f64> = tri.iter().map(|&v| upper[v]).collect();
    let mut var_lower = lo.clone();
    let mut var_upper = hi.clone();
    for &(a, b) in &pairs {
        var_lower.push(lo[a] * lo[b]);
        var_upper.push(hi[a] * hi[b]);
    }
    let mut rows = Vec::new();
    for &(a, b) in &pairs {
        for cut in mccormick_cuts(&lo, &hi, a, b) {
            let mut coeffs = Vec::new();
            for &(p, q, c) in &cut.y_terms {
                coeffs.push((ycol(p, q), c));
            }
            for &(p, c) in &cut.x_terms {
                coeffs.push((p, c));
            }
            rows.push(LinearRow::le(coeffs, -cut.constant));
        }
    }
    let mut cost = vec![0.0; 9];
    for &(p, q, c) in &candidate.y_terms {
        let (p, q) = (local(p).expect("index of triple"), local(q).expect("index of triple"));
        cost[ycol(p, q)] -= c;
    }
    for &(p, c) in &candidate.x_terms {
        cost[local(p).expect("index of triple")] -= c;
    }
    let sol = solve_lp(&LpProblem {
        cost,
        rows,
        var_lower,
        var_upper,
    })?;
    match sol.status {
        LpStatus::Optimal => Ok(-sol.objective + candidate.constant),
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::NoConvergence {
            what: "redundancy LP (unbounded)",
            iterations: sol.iterations,
        }),
    }
}

/// True iff no point of the McCormick relaxation of the triple violates the
/// candidate by more than [`REDUNDANCY_TOL`].
pub fn certify_redundant(lower: &[f64], upper: &[f64], candidate: &Cut) -> Result<bool> {
    Ok(redundancy_value(lower, upper, candidate)? <= REDUNDANCY_TOL)
}

/// Per-candidate results of [`audit_candidates`].
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAudit {
    pub family: u8,
    pub variant: u8,
    /// Triangle number when the candidate is one of the retained twelve.
    pub retained: Option<u8>,
    /// Boxes on which the redundancy LP certified the candidate.
    pub redundant_boxes: usize,
    /// Largest redundancy-LP value over the boxes.
    pub max_lp_value: f64,
    /// Largest `|violation(witness) − ½·w_i·w_j·w_k|` over the boxes
    /// (retained candidates only).
    pub witness_error: Option<f64>,
    /// Largest McCormick violation at the witness.
    pub witness_mccormick: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub boxes: usize,
    pub candidates: Vec<CandidateAudit>,
}

impl AuditReport {
    /// Candidates never certified redundant.
    pub fn cutting(&self) -> usize {
        self.candidates.iter().filter(|c| c.redundant_boxes == 0).count()
    }

    /// Candidates certified redundant on every box.
    pub fn redundant(&self) -> usize {
        self.candidates.iter().filter(|c| c.redundant_boxes == self.boxes).count()
    }

    /// True when the cutting candidates are exactly the retained ones.
    pub fn matches_retained(&self) -> bool {
        self.candidates
            .iter()
            .all(|c| (c.redundant_boxes == 0) == c.retained.is_some() && (c.redundant_boxes == self.boxes) == c.retained.is_none())
    }

    pub fn summary(&self) -> String {
        let mixed = self.candidates.len() - self.cutting() - self.redundant();
        let mut line = format!(
            "{} candidates: {} cutting, {} redundant",
            self.candidates.len(),
            self.cutting(),
            self.redundant()
        );
        if mixed > 0 {
            line.push_str(&format!(", {mixed} box-dependent"));
        }
        line
    }
}

/// A box for a triple with `0 ≤ ℓ < u ≤ 10`.
pub fn random_triple_box(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for v in 0..3 {
        let a: f64 = rng.gen_range(0.0..10.0);
        let b: f64 = rng.gen_range(0.0..10.0);
        lo[v] = a.min(b);
        hi[v] = a.max(b);
        if hi[v] - lo[v] < 1e-3 {
            // keep the box nondegenerate
            hi[v] = (lo[v] + 1e-3).min(10.0);
            lo[v] = hi[v] - 1e-3;
        }
    }
    (lo, hi)
}

/// Runs the redundancy LP on all 48 candidates over `boxes` random boxes and
/// checks the witness of each retained cut.
pub fn audit_candidates(boxes: usize, seed: u64) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<CandidateAudit> = Vec::with_capacity(48);
    for family in 1..=8u8 {
        for variant in 1..=6u8 {
            let retained = is_retained(family, variant);
            out.push(CandidateAudit {
                family,
                variant,
                retained,
                redundant_boxes: 0,
                max_lp_value: f64::NEG_INFINITY,
                witness_error: retained.map(|_| 0.0),
                witness_mccormick: retained.map(|_| f64::NEG_INFINITY),
            });
        }
    }
    for _ in 0..boxes {
        let (lo, hi) = random_triple_box(&mut rng);
        let half = 0.5 * (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
        for (entry, cut) in out.iter_mut().zip(candidate_cuts(&lo, &hi, 0, 1, 2)) {
            debug_assert!(matches!(cut.kind, CutKind::Candidate { .. }));
            let value = redundancy_value(&lo, &hi, &cut)?;
            entry.max_lp_value = entry.max_lp_value.max(value);
            if value <= REDUNDANCY_TOL {
                entry.redundant_boxes += 1;
            }
            if let Some(t) = entry.retained {
                let w = witness_point(&lo, &hi, 0, 1, 2, t);
                let err = (triangle_cut(&lo, &hi, 0, 1, 2, t).violation(&w) - half).abs();
                let mc = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
                    .iter()
                    .flat_map(|&(a, b)| mccormick_cuts(&lo, &hi, a, b))
                    .map(|c| c.violation(&w))
                    .fold(f64::NEG_INFINITY, f64::max);
                entry.witness_error = entry.witness_error.map(|e| e.max(err));
                entry.witness_mccormick = entry.witness_mccormick.map(|e| e.max(mc));
            }
        }
    }
    Ok(AuditReport { boxes, candidates: out })
}
