//! Lagrangian dual of the Shor relaxation strengthened with McCormick and
//! triangle cuts, maximized by projected subgradient ascent.
//!
//! Every linear constraint is dualized: the quadratic rows (`α`), the
//! diagonal McCormick rows (`φ¹, φ², φ³`) and the cuts of a working set
//! (`φ` for McCormick pairs, `δ` for triangles). With multipliers fixed the
//! Lagrangian is `⟨S, X⟩ + dᵀx + const`, and the dual function is its minimum
//! over
//!
//! ```text
//! { (x, X) : [[1, xᵀ], [x, X]] ⪰ 0,  Σ X_ii ≤ R },   R = Σ max(ℓ_i², u_i²).
//! ```
//!
//! The trace cap does not cut the relaxation because the diagonal McCormick
//! rows force `X_ii ≤ u_i²`. Writing `X = xxᵀ + W` reduces the inner problem
//! to a convex trust-region problem in `x`, solved exactly in the eigenbasis
//! of `S`, so each evaluation costs one symmetric eigen-decomposition.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::cuts::{cut_for_key, pool_capacity, separate_with, CutKey, Families};
use crate::error::{Error, Result};
use crate::linalg::{eig_symmetric, SymMatrix};
use crate::model::{LiftedPoint, QcqpInstance};

/// Multipliers below this are dropped from the working set.
pub const DROP_TOL: f64 = 1e-8;

/// Multipliers of the dual and the current working cut set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// One per quadratic constraint.
    pub alpha: Vec<f64>,
    /// Off-diagonal McCormick cuts in the working set.
    pub phi: BTreeMap<CutKey, f64>,
    /// Triangle cuts in the working set.
    pub delta: BTreeMap<CutKey, f64>,
    /// `Y_ii − (u_i + ℓ_i)x_i + u_iℓ_i ≤ 0`.
    pub phi1: Vec<f64>,
    /// `−Y_ii + 2u_i x_i − u_i² ≤ 0`.
    pub phi2: Vec<f64>,
    /// `−Y_ii + 2ℓ_i x_i − ℓ_i² ≤ 0`.
    pub phi3: Vec<f64>,
    /// Multiplier of the corner `Z₀₀ = 1`, from the last evaluation.
    pub rho: f64,
    pub best_bound: f64,
}

impl DualState {
    pub fn zero(inst: &QcqpInstance, lower: &[f64], upper: &[f64]) -> Self {
        let n = inst.n();
        DualState {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            alpha: vec![0.0; inst.m()],
            phi: BTreeMap::new(),
            delta: BTreeMap::new(),
            phi1: vec![0.0; n],
            phi2: vec![0.0; n],
            phi3: vec![0.0; n],
            rho: 0.0,
            best_bound: f64::NEG_INFINITY,
        }
    }

    pub fn working_set(&self) -> impl Iterator<Item = CutKey> + '_ {
        self.phi.keys().chain(self.delta.keys()).copied()
    }

    pub fn working_len(&self) -> usize {
        self.phi.len() + self.delta.len()
    }

    fn cut_multipliers(&self) -> impl Iterator<Item = (&CutKey, &f64)> {
        self.phi.iter().chain(self.delta.iter())
    }

    fn insert_key(&mut self, key: CutKey) {
        match key {
            CutKey::McCormick { .. } => self.phi.entry(key).or_insert(0.0),
            CutKey::Triangle { .. } => self.delta.entry(key).or_insert(0.0),
        };
    }

    fn check_keys(&self, n: usize) -> Result<()> {
        for (key, _) in self.cut_multipliers() {
            let ok = key.indices().iter().all(|&v| v < n)
                && match *key {
                    CutKey::McCormick { i, j, t } => i < j && (1..=4).contains(&t),
                    CutKey::Triangle { i, j, k, t } => i < j && j < k && (1..=12).contains(&t),
                };
            if !ok {
                return Err(Error::UnknownCut(key.to_string()));
            }
        }
        Ok(())
    }

    fn check_shapes(&self, inst: &QcqpInstance) -> Result<()> {
        let n = inst.n();
        for (len, want) in [
            (self.alpha.len(), inst.m()),
            (self.phi1.len(), n),
            (self.phi2.len(), n),
            (self.phi3.len(), n),
            (self.lower.len(), n),
            (self.upper.len(), n),
        ] {
            if len != want {
                return Err(Error::Dimension {
                    expected: want,
                    found: len,
                });
            }
        }
        self.check_keys(n)
    }
}

/// Lagrangian data `(S, d, const)` for fixed multipliers.
#[derive(Debug, Clone)]
pub struct Lagrangian {
    pub quadratic: SymMatrix,
    pub linear: Vec<f64>,
    pub constant: f64,
}

/// `S = Q_0 + Σ α_r Q_r + Σ φ M + Σ δ M + diag(φ¹ − φ² − φ³)` and the
/// matching linear part and constant.
pub fn lagrangian(inst: &QcqpInstance, state: &DualState) -> Result<Lagrangian> {
    state.check_shapes(inst)?;
    let n = inst.n();
    let (lo, hi) = (&state.lower, &state.upper);
    let mut s = inst.quadratic(0).clone();
    let mut d = inst.linear(0).to_vec();
    let mut constant = 0.0;
    for r in 1..=inst.m() {
        let a = state.alpha[r - 1];
        if a != 0.0 {
            s.axpy(a, inst.quadratic(r));
            for (di, ci) in d.iter_mut().zip(inst.linear(r)) {
                *di += a * ci;
            }
            constant -= a * inst.rhs_at(r);
        }
    }
    for (key, &mult) in state.cut_multipliers() {
        if mult == 0.0 {
            continue;
        }
        let cut = cut_for_key(*key, lo, hi);
        for &(p, q, a) in &cut.y_terms {
            if p == q {
                s.add(p, p, mult * a);
            } else {
                s.add(p, q, 0.5 * mult * a);
            }
        }
        for &(p, a) in &cut.x_terms {
            d[p] += mult * a;
        }
        constant += mult * cut.constant;
    }
    for i in 0..n {
        let (l, u) = (lo[i], hi[i]);
        let (f1, f2, f3) = (state.phi1[i], state.phi2[i], state.phi3[i]);
        s.add(i, i, f1 - f2 - f3);
        d[i] += -f1 * (u + l) + f2 * 2.0 * u + f3 * 2.0 * l;
        constant += f1 * u * l - f2 * u * u - f3 * l * l;
    }
    Ok(Lagrangian {
        quadratic: s,
        linear: d,
        constant,
    })
}

/// `[[ρ, dᵀ/2], [d/2, S]]`.
pub fn aggregate_matrix(inst: &QcqpInstance, state: &DualState) -> Result<SymMatrix> {
    let lag = lagrangian(inst, state)?;
    let n = inst.n();
    let mut a = SymMatrix::zeros(n + 1);
    a.set(0, 0, state.rho);
    for i in 0..n {
        a.set(0, i + 1, 0.5 * lag.linear[i]);
        for j in i..n {
            a.set(i + 1, j + 1, lag.quadratic.get(i, j));
        }
    }
    Ok(a)
}

/// `1 + Σ max(ℓ_i², u_i²)`.
pub fn trace_cap(lower: &[f64], upper: &[f64]) -> f64 {
    1.0 + lower
        .iter()
        .zip(upper)
        .map(|(l, u)| (l * l).max(u * u))
        .sum::<f64>()
}

/// Result of one dual function evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub bound: f64,
    /// Optimal corner multiplier: `bound = const − ρ + τ·min(0, λ_min(A(ρ)))`.
    pub rho: f64,
    pub lambda_min: f64,
    /// Inner minimizer `(x*, X*)`.
    pub point: LiftedPoint,
    pub grad_alpha: Vec<f64>,
    pub grad_phi1: Vec<f64>,
    pub grad_phi2: Vec<f64>,
    pub grad_phi3: Vec<f64>,
    pub grad_cuts: BTreeMap<CutKey, f64>,
}

/// Minimizes `Σ c_i y_i² + 2β_i y_i` over `‖y‖² ≤ radius_sq` with `c ≥ 0`.
/// Returns `(y, ν)` where `ν ≥ 0` is the multiplier of the ball.
fn trust_region(curv: &[f64], beta: &[f64], radius_sq: f64) -> (Vec<f64>, f64) {
    let scale = curv.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
    let flat = 1e-13 * scale;
    let beta_norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    if beta_norm == 0.0 {
        return (vec![0.0; beta.len()], 0.0);
    }
    let y_of = |nu: f64| -> Vec<f64> {
        curv.iter()
            .zip(beta)
            .map(|(&c, &b)| {
                let den = c + nu;
                if den > flat {
                    -b / den
                } else {
                    0.0
                }
            })
            .collect()
    };
    let norm_sq = |nu: f64| -> f64 {
        curv.iter()
            .zip(beta)
            .map(|(&c, &b)| {
                let den = c + nu;
                if den > flat {
                    (b / den).powi(2)
                } else if b.abs() > 1e-14 * beta_norm {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .sum()
    };
    if norm_sq(0.0) <= radius_sq {
        return (y_of(0.0), 0.0);
    }
    let mut lo = 0.0;
    let mut hi = beta_norm / radius_sq.sqrt();
    while norm_sq(hi) > radius_sq {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_sq(mid) > radius_sq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (y_of(hi), hi)
}

/// Evaluates the dual function and a subgradient at `state`.
pub fn evaluate(inst: &QcqpInstance, state: &DualState) -> Result<Evaluation> {
    let lag = lagrangian(inst, state)?;
    let n = inst.n();
    let tau = trace_cap(&state.lower, &state.upper);
    let radius_sq = tau - 1.0;
    let eig = eig_symmetric(&lag.quadratic)?;
    let lambda_min = eig.values[0];
    let sigma = lambda_min.min(0.0);
    let curv: Vec<f64> = eig.values.iter().map(|s| (s - sigma).max(0.0)).collect();
    let beta: Vec<f64> = eig
        .vectors
        .iter()
        .map(|v| 0.5 * v.iter().zip(&lag.linear).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let (y, nu) = trust_region(&curv, &beta, radius_sq);
    let mut x = vec![0.0; n];
    for (yk, vk) in y.iter().zip(&eig.vectors) {
        for i in 0..n {
            x[i] += yk * vk[i];
        }
    }
    let xnorm_sq: f64 = x.iter().map(|v| v * v).sum();
    let spare = (radius_sq - xnorm_sq).max(0.0);
    let mut point = LiftedPoint::from_x(&x);
    if sigma < 0.0 && spare > 0.0 {
        let v = &eig.vectors[0];
        for i in 0..n {
            for j in i..n {
                point.lifted.add(i, j, spare * v[i] * v[j]);
            }
        }
    }
    let inner = point.lifted.inner(&lag.quadratic) + lag.linear.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    let bound = lag.constant + inner;

    // ρ with λ_min(A(ρ)) = −η, η = ν − σ
    let eta = nu - sigma;
    let mut rho = -eta;
    for (b, s) in beta.iter().zip(&eig.values) {
        let den = s + eta;
        if den > 1e-13 * (1.0 + s.abs()) {
            rho += b * b / den;
        }
    }

    let (lo, hi) = (&state.lower, &state.upper);
    let mut grad_alpha = Vec::with_capacity(inst.m());
    for r in 1..=inst.m() {
        let v = point.lifted.inner(inst.quadratic(r)) + inst.linear(r).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
            - inst.rhs_at(r);
        grad_alpha.push(v);
    }
    let mut grad_phi1 = Vec::with_capacity(n);
    let mut grad_phi2 = Vec::with_capacity(n);
    let mut grad_phi3 = Vec::with_capacity(n);
    for i in 0..n {
        let (l, u, xi, yii) = (lo[i], hi[i], x[i], point.lifted.get(i, i));
        grad_phi1.push(yii - (u + l) * xi + u * l);
        grad_phi2.push(-yii + 2.0 * u * xi - u * u);
        grad_phi3.push(-yii + 2.0 * l * xi - l * l);
    }
    let grad_cuts = state
        .cut_multipliers()
        .map(|(k, _)| (*k, cut_for_key(*k, lo, hi).violation(&point)))
        .collect();
    Ok(Evaluation {
        bound,
        rho,
        lambda_min,
        point,
        grad_alpha,
        grad_phi1,
        grad_phi2,
        grad_phi3,
        grad_cuts,
    })
}

#[derive(Debug, Clone)]
pub struct DualConfig {
    /// Working-set cap.
    pub cut_cap: usize,
    pub max_iter: usize,
    pub time_limit: Option<Duration>,
    /// Iterations between separation rounds.
    pub sep_period: usize,
    pub use_triangles: bool,
    /// Best known feasible value; enables Polyak steps and early exit.
    pub target: Option<f64>,
    pub step_a: f64,
    pub step_b: f64,
    /// Non-improving iterations before the Polyak factor is halved.
    pub patience: usize,
}

impl DualConfig {
    /// `p = ⌈0.04·|𝒞 ∪ 𝒢|⌉`.
    pub fn default_p(n: usize) -> usize {
        (0.04 * pool_capacity(n) as f64).ceil() as usize
    }

    pub fn for_n(n: usize) -> Self {
        DualConfig {
            cut_cap: Self::default_p(n),
            max_iter: 300,
            time_limit: None,
            sep_period: 10,
            use_triangles: true,
            target: None,
            step_a: 1.0,
            step_b: 10.0,
            patience: 20,
        }
    }
}

/// One line of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub bound: f64,
    pub working_set: usize,
    pub lambda_min: f64,
}

#[derive(Debug, Clone)]
pub struct DualRun {
    /// Best multipliers found, made PSD-feasible (see [`repair_psd`]).
    pub state: DualState,
    /// Every evaluated bound, in order.
    pub bounds: Vec<f64>,
    /// Running best bound after each evaluation.
    pub best_bounds: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
}

/// Raises every `φ¹_i` by `max(0, −λ_min(S)) + 1e-9`, which adds that much
/// identity to `S`. The multipliers stay dual feasible, so every derived
/// bound remains valid.
pub fn repair_psd(inst: &QcqpInstance, state: &mut DualState) -> Result<f64> {
    let lag = lagrangian(inst, state)?;
    let lmin = crate::linalg::min_eigenvalue(&lag.quadratic)?.0;
    if lmin < 0.0 {
        let shift = -lmin + 1e-9;
        for v in state.phi1.iter_mut() {
            *v += shift;
        }
        Ok(shift)
    } else {
        Ok(0.0)
    }
}

/// Projected subgradient ascent with a dynamic working set.
///
/// The working set starts empty. After the first evaluation, and then every
/// `sep_period` iterations, multipliers below [`DROP_TOL`] are removed and the
/// average inner minimizer since the previous round is separated for
/// off-diagonal McCormick cuts (and triangle cuts when enabled), admitting up
/// to `p − |working set|` new cuts.
pub fn run_heuristic(
    inst: &QcqpInstance,
    lower: &[f64],
    upper: &[f64],
    config: &DualConfig,
    warm: Option<DualState>,
) -> Result<DualRun> {
    let n = inst.n();
    let start = Instant::now();
    let mut state = match warm {
        Some(s) => s,
        None => DualState::zero(inst, lower, upper),
    };
    state.lower = lower.to_vec();
    state.upper = upper.to_vec();
    state.best_bound = f64::NEG_INFINITY;
    let mut best = state.clone();
    let mut bounds = Vec::new();
    let mut best_bounds = Vec::new();
    let mut trace = Vec::new();
    let mut theta = 1.0;
    let mut stale = 0;
    let mut avg_x = vec![0.0; n];
    let mut avg_y = SymMatrix::zeros(n);
    let mut avg_count = 0usize;
    let mut iterations = 0;
    let families = Families {
        mccormick: true,
        diagonal: false,
        triangles: config.use_triangles,
    };

    for k in 0..config.max_iter.max(1) {
        if let Some(limit) = config.time_limit {
            if k > 0 && start.elapsed() >= limit {
                break;
            }
        }
        let mut eval = evaluate(inst, &state)?;
        iterations = k + 1;
        bounds.push(eval.bound);
        trace.push(TraceRow {
            iteration: k,
            bound: eval.bound,
            working_set: state.working_len(),
            lambda_min: eval.lambda_min,
        });
        if eval.bound > best.best_bound {
            best = state.clone();
            best.rho = eval.rho;
            best.best_bound = eval.bound;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                theta *= 0.5;
                stale = 0;
            }
        }
        best_bounds.push(best.best_bound);
        if let Some(t) = config.target {
            if best.best_bound >= t {
                break;
            }
        }

        for i in 0..n {
            avg_x[i] += eval.point.x[i];
        }
        avg_y.axpy(1.0, &eval.point.lifted);
        avg_count += 1;

        if k == 0 || (k + 1) % config.sep_period.max(1) == 0 {
            if k > 0 {
                state.phi.retain(|_, v| *v >= DROP_TOL);
                state.delta.retain(|_, v| *v >= DROP_TOL);
            }
            let room = config.cut_cap.saturating_sub(state.working_len());
            if room > 0 {
                let scale = 1.0 / avg_count as f64;
                let mut avg = LiftedPoint {
                    x: avg_x.iter().map(|v| v * scale).collect(),
                    lifted: avg_y.clone(),
                };
                let mut scaled = SymMatrix::zeros(n);
                scaled.axpy(scale, &avg.lifted);
                avg.lifted = scaled;
                let in_ws = |key: &CutKey| state.phi.contains_key(key) || state.delta.contains_key(key);
                let found = separate_with(&avg, lower, upper, room, in_ws, families);
                for cut in found {
                    let key = cut.key().expect("keyed cut");
                    state.insert_key(key);
                    eval.grad_cuts.insert(key, cut.violation(&eval.point));
                }
            }
            avg_x.iter_mut().for_each(|v| *v = 0.0);
            avg_y = SymMatrix::zeros(n);
            avg_count = 0;
        }

        // projected subgradient norm
        let mut norm_sq = 0.0;
        let proj = |mult: f64, g: f64| if mult <= 0.0 && g < 0.0 { 0.0 } else { g };
        for (a, g) in state.alpha.iter().zip(&eval.grad_alpha) {
            norm_sq += proj(*a, *g).powi(2);
        }
        for (mults, grads) in [
            (&state.phi1, &eval.grad_phi1),
            (&state.phi2, &eval.grad_phi2),
            (&state.phi3, &eval.grad_phi3),
        ] {
            for (a, g) in mults.iter().zip(grads) {
                norm_sq += proj(*a, *g).powi(2);
            }
        }
        for (key, mult) in state.cut_multipliers() {
            let g = eval.grad_cuts.get(key).copied().unwrap_or(0.0);
            norm_sq += proj(*mult, g).powi(2);
        }
        if norm_sq <= 1e-24 {
            break;
        }
        let norm = norm_sq.sqrt();
        let step = match config.target {
            Some(t) if t > eval.bound => theta * (t - eval.bound) / norm_sq,
            _ => config.step_a / ((k as f64 + config.step_b) * norm),
        };
        for (a, g) in state.alpha.iter_mut().zip(&eval.grad_alpha) {
            *a = (*a + step * g).max(0.0);
        }
        for (mults, grads) in [
            (&mut state.phi1, &eval.grad_phi1),
            (&mut state.phi2, &eval.grad_phi2),
            (&mut state.phi3, &eval.grad_phi3),
        ] {
            for (a, g) in mults.iter_mut().zip(grads) {
                *a = (*a + step * g).max(0.0);
            }
        }
        for (key, mult) in state.phi.iter_mut().chain(state.delta.iter_mut()) {
            let g = eval.grad_cuts.get(key).copied().unwrap_or(0.0);
            *mult = (*mult + step * g).max(0.0);
        }
    }
    let best_bound = best.best_bound;
    let mut terminal = best;
    repair_psd(inst, &mut terminal)?;
    terminal.best_bound = best_bound;
    Ok(DualRun {
        state: terminal,
        bounds,
        best_bounds,
        trace,
        iterations,
    })
}
