//! QCQP instances: validation, JSON I/O and the seeded unit-box generator.
//!
//! An instance is
//!
//! ```text
//! min  f_0(x) = ⟨Q_0, xxᵀ⟩ + c_0ᵀx
//! s.t. f_r(x) = ⟨Q_r, xxᵀ⟩ + c_rᵀx ≤ b_r     r = 1..m
//!      ℓ ≤ x ≤ u,  ℓ ≥ 0
//! ```
//!
//! The JSON document lists each quadratic form as upper-triangle triplets
//! `[i, j, v]` where `v` is the full coefficient of `x_i x_j` (so for `i < j`
//! the symmetric entries are `v / 2`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{quad_form, SymMatrix};

/// Feasibility tolerance on `f_r(x) ≤ b_r` for reported solutions.
pub const FEAS_TOL: f64 = 1e-7;

/// A point `(x, Y)` of the lifted space; `Y` stands in for `xxᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    pub x: Vec<f64>,
    pub lifted: SymMatrix,
}

impl LiftedPoint {
    /// The consistent point `(x, xxᵀ)`.
    pub fn from_x(x: &[f64]) -> Self {
        let n = x.len();
        let mut y = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                y.set(i, j, x[i] * x[j]);
            }
        }
        LiftedPoint {
            x: x.to_vec(),
            lifted: y,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `|Y_ij − x_i x_j|`.
    pub fn mismatch(&self, i: usize, j: usize) -> f64 {
        (self.lifted.get(i, j) - self.x[i] * self.x[j]).abs()
    }

    pub fn max_mismatch(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max(self.mismatch(i, j));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    n: usize,
    /// Entry 0 is the objective; entry `r ≥ 1` constraint `r`.
    quadratics: Vec<SymMatrix>,
    linears: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    meta: Value,
}

#[derive(Serialize, Deserialize)]
struct QuadDoc {
    #[serde(rename = "Q")]
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintDoc {
    #[serde(rename = "Q")]
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    n: usize,
    m: usize,
    l: Vec<f64>,
    u: Vec<f64>,
    objective: QuadDoc,
    constraints: Vec<ConstraintDoc>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    meta: Value,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn check_finite(path: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(invalid(format!("{path}[{k}]"), "non-finite entry")),
        None => Ok(()),
    }
}

fn triplets_to_matrix(path: &str, n: usize, triplets: &[(usize, usize, f64)]) -> Result<SymMatrix> {
    let mut q = SymMatrix::zeros(n);
    for (k, &(i, j, v)) in triplets.iter().enumerate() {
        if i >= n || j >= n {
            return Err(invalid(
                format!("{path}.Q[{k}]"),
                format!("index ({i}, {j}) out of range for n = {n}"),
            ));
        }
        if !v.is_finite() {
            return Err(invalid(format!("{path}.Q[{k}]"), "non-finite entry"));
        }
        if i == j {
            q.add(i, i, v);
        } else {
            q.add(i, j, 0.5 * v);
        }
    }
    Ok(q)
}

fn matrix_to_triplets(q: &SymMatrix) -> Vec<(usize, usize, f64)> {
    let n = q.dim();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let v = q.get(i, j);
            if v != 0.0 {
                out.push((i, j, if i == j { v } else { 2.0 * v }));
            }
        }
    }
    out
}

impl QcqpInstance {
    /// Validates and builds an instance. `quadratics` and `linears` hold `m + 1` entries,
    /// objective first.
    pub fn new(
        quadratics: Vec<SymMatrix>,
        linears: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let n = lower.len();
        if n == 0 {
            return Err(invalid("n", "at least one variable is required"));
        }
        if upper.len() != n {
            return Err(invalid("u", format!("expected {n} entries, found {}", upper.len())));
        }
        let m = rhs.len();
        if quadratics.len() != m + 1 || linears.len() != m + 1 {
            return Err(invalid(
                "constraints",
                format!("expected {} quadratic forms, found {} / {}", m + 1, quadratics.len(), linears.len()),
            ));
        }
        check_finite("l", &lower)?;
        check_finite("u", &upper)?;
        check_finite("b", &rhs)?;
        for i in 0..n {
            if lower[i] < 0.0 {
                return Err(invalid(format!("l[{i}]"), "lower bound must be nonnegative"));
            }
            if lower[i] >= upper[i] {
                return Err(Error::InvertedBounds(i));
            }
        }
        for (r, (qr, cr)) in quadratics.iter().zip(&linears).enumerate() {
            let path = if r == 0 {
                "objective".to_string()
            } else {
                format!("constraints[{}]", r - 1)
            };
            if qr.dim() != n {
                return Err(invalid(format!("{path}.Q"), format!("order {} != n = {n}", qr.dim())));
            }
            if !qr.is_finite() {
                return Err(invalid(format!("{path}.Q"), "non-finite entry"));
            }
            if cr.len() != n {
                return Err(invalid(format!("{path}.c"), format!("expected {n} entries, found {}", cr.len())));
            }
            check_finite(&format!("{path}.c"), cr)?;
        }
        Ok(QcqpInstance {
            n,
            quadratics,
            linears,
            rhs,
            lower,
            upper,
            meta: Value::Null,
        })
    }

    pub fn with_meta(mut self, meta: Value) -> Self {
        self.meta = meta;
        self
    }

    /// Parses the JSON instance document.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        let n = doc.n;
        if n == 0 {
            return Err(invalid("n", "at least one variable is required"));
        }
        if doc.l.len() != n {
            return Err(invalid("l", format!("expected {n} entries, found {}", doc.l.len())));
        }
        if doc.constraints.len() != doc.m {
            return Err(invalid(
                "constraints",
                format!("m = {} but {} constraints listed", doc.m, doc.constraints.len()),
            ));
        }
        let mut q = vec![triplets_to_matrix("objective", n, &doc.objective.q)?];
        let mut c = vec![doc.objective.c];
        let mut b = Vec::with_capacity(doc.m);
        for (r, con) in doc.constraints.into_iter().enumerate() {
            q.push(triplets_to_matrix(&format!("constraints[{r}]"), n, &con.q)?);
            c.push(con.c);
            b.push(con.b);
        }
        Ok(Self::new(q, c, b, doc.l, doc.u)?.with_meta(doc.meta))
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceDoc {
            n: self.n,
            m: self.m(),
            l: self.lower.clone(),
            u: self.upper.clone(),
            objective: QuadDoc {
                q: matrix_to_triplets(&self.quadratics[0]),
                c: self.linears[0].clone(),
            },
            constraints: (1..=self.m())
                .map(|r| ConstraintDoc {
                    q: matrix_to_triplets(&self.quadratics[r]),
                    c: self.linears[r].clone(),
                    b: self.rhs[r - 1],
                })
                .collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("instance serializes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rhs.len()
    }

    /// `r = 0` is the objective.
    pub fn quadratic(&self, r: usize) -> &SymMatrix {
        &self.quadratics[r]
    }

    pub fn linear(&self, r: usize) -> &[f64] {
        &self.linears[r]
    }

    /// Right-hand side of constraint `r` (1-based, matching [`Self::quadratic`]).
    pub fn rhs_at(&self, r: usize) -> f64 {
        self.rhs[r - 1]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn meta(&self) -> &Value {
        &self.meta
    }

    pub fn name(&self) -> Option<&str> {
        self.meta.get("name").and_then(Value::as_str)
    }

    /// The point recorded by the generator as feasible by construction.
    pub fn feasible_point(&self) -> Option<Vec<f64>> {
        let arr = self.meta.get("feasible_point")?.as_array()?;
        arr.iter().map(Value::as_f64).collect()
    }

    /// `f_r(x) = ⟨Q_r, xxᵀ⟩ + c_rᵀx`.
    pub fn evaluate_constraint(&self, r: usize, x: &[f64]) -> Result<f64> {
        if r > self.m() {
            return Err(Error::IndexOutOfRange {
                what: "constraint",
                index: r,
                len: self.m() + 1,
            });
        }
        let quad = quad_form(&self.quadratics[r], x)?;
        Ok(quad + self.linears[r].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.evaluate_constraint(0, x).expect("objective evaluation")
    }

    /// `max_r (f_r(x) − b_r)`, or `-∞` without constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (1..=self.m())
            .map(|r| self.evaluate_constraint(r, x).expect("constraint evaluation") - self.rhs_at(r))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn in_box(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.in_box(x, tol) && self.max_violation(x) <= tol
    }

    /// Same forms, different variable box.
    pub fn with_box(&self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let inst = Self::new(self.quadratics.clone(), self.linears.clone(), self.rhs.clone(), lower, upper)?;
        Ok(inst.with_meta(self.meta.clone()))
    }
}

/// Instance name in the `n_m_seed_density%` convention.
pub fn unitbox_name(n: usize, m: usize, seed: u64, density: f64) -> String {
    format!("{n}_{m}_{seed}_{}", (density * 100.0).round() as i64)
}

/// Random instance on `[0, 1]^n`.
///
/// Draws come from ChaCha8 seeded with `seed` (portable across platforms).
/// Each upper-triangle entry of every `Q_r` (diagonal included) is nonzero
/// with probability `density`; nonzero coefficients of `x_i x_j` and all
/// entries of `c_r` are uniform on `[-10, 10]`. A point `x̃` uniform on
/// `(0, 1)^n` is drawn last and `b_r = f_r(x̃) + |f_r(x̃)|`, so `x̃` is always
/// feasible; it is stored under `meta.feasible_point`.
///
/// The coefficient distribution is a stand-in: published unit-box instances
/// do not document theirs.
pub fn gen_unitbox(n: usize, m: usize, density: f64, seed: u64) -> Result<QcqpInstance> {
    if n < 2 {
        return Err(Error::InvalidArgument("unit-box generator needs n >= 2".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density {density} not in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut qs = Vec::with_capacity(m + 1);
    let mut cs = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        let mut q = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                if rng.gen::<f64>() < density {
                    let v: f64 = rng.gen_range(-10.0..=10.0);
                    q.set(i, j, if i == j { v } else { 0.5 * v });
                }
            }
        }
        qs.push(q);
        cs.push((0..n).map(|_| rng.gen_range(-10.0..=10.0)).collect::<Vec<f64>>());
    }
    let x_tilde: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
    let mut b = Vec::with_capacity(m);
    for r in 1..=m {
        let f = quad_form(&qs[r], &x_tilde)? + cs[r].iter().zip(&x_tilde).map(|(a, x)| a * x).sum::<f64>();
        b.push(f + f.abs());
    }
    let inst = QcqpInstance::new(qs, cs, b, vec![0.0; n], vec![1.0; n])?;
    let meta = serde_json::json!({
        "name": unitbox_name(n, m, seed, density),
        "generator": "unitbox-chacha8",
        "seed": seed,
        "density": density,
        "feasible_point": x_tilde,
    });
    Ok(inst.with_meta(meta))
}

/// Sizes of member `index` of the benchmark suite: `(n, m, density)`.
///
/// `n` cycles through 8..=20, `m = n / 4`, density 0.5.
pub fn suite_shape(index: usize) -> (usize, usize, f64) {
    let n = 8 + index % 13;
    (n, (n / 4).max(1), 0.5)
}

/// The seeded unit-box suite used by `qcqp bench`; member `i` uses seed
/// `base_seed + i`.
pub fn unitbox_suite(count: usize, base_seed: u64) -> Result<Vec<QcqpInstance>> {
    (0..count)
        .map(|i| {
            let (n, m, density) = suite_shape(i);
            gen_unitbox(n, m, density, base_seed + i as u64)
        })
        .collect()
}
