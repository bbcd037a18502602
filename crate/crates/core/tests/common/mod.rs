//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use qcqp_core::lp::{LinearRow, LpProblem, RowSense};
use rand::Rng;

/// Solves `A z = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot falls below `1e-10` relative to the row scale.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        let scale = a[piv].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if a[piv][col].abs() < 1e-10 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (dst, src) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *dst -= f * src;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * z[c]).sum();
        z[r] = (b[r] - s) / a[r][r];
    }
    Some(z)
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < total - k + pos {
            idx[pos] += 1;
            for q in pos + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum of a bounded LP by enumerating every basic solution: all choices
/// of `n` active constraints among rows and bounds (equality rows always
/// active). `None` when no vertex is feasible.
pub fn vertex_minimum(lp: &LpProblem) -> Option<f64> {
    let n = lp.num_vars();
    let dense = |row: &LinearRow| {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coeffs {
            a[j] += v;
        }
        a
    };
    let mut forced = Vec::new();
    let mut optional = Vec::new();
    for row in &lp.rows {
        let pair = (dense(row), row.rhs);
        if row.sense == RowSense::Eq {
            forced.push(pair);
        } else {
            optional.push(pair);
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        optional.push((e.clone(), lp.var_lower[j]));
        optional.push((e, lp.var_upper[j]));
    }
    if forced.len() > n {
        return None;
    }
    let k = n - forced.len();
    let feasible = |z: &[f64]| {
        let tol = 1e-9;
        (0..n).all(|j| z[j] >= lp.var_lower[j] - tol && z[j] <= lp.var_upper[j] + tol)
            && lp.rows.iter().all(|r| {
                let act = r.activity(z);
                let t = tol * (1.0 + r.rhs.abs());
                match r.sense {
                    RowSense::Le => act <= r.rhs + t,
                    RowSense::Eq => (act - r.rhs).abs() <= t,
                }
            })
    };
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut a: Vec<Vec<f64>> = forced.iter().map(|(r, _)| r.clone()).collect();
        let mut b: Vec<f64> = forced.iter().map(|(_, v)| *v).collect();
        for &i in &idx {
            a.push(optional[i].0.clone());
            b.push(optional[i].1);
        }
        if let Some(z) = solve_dense(a, b) {
            if feasible(&z) {
                let v: f64 = lp.cost.iter().zip(&z).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        if k == 0 || !next_combination(&mut idx, optional.len()) {
            break;
        }
    }
    best
}

/// Random LP over a box with `rows` inequality rows (one equality when
/// `with_eq`). When `feasible`, every row holds at a random interior point.
pub fn random_lp(rng: &mut impl Rng, vars: usize, rows: usize, with_eq: bool, feasible: bool) -> LpProblem {
    let var_lower: Vec<f64> = (0..vars).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let var_upper: Vec<f64> = var_lower.iter().map(|l| l + rng.gen_range(0.5..4.0)).collect();
    let x0: Vec<f64> = var_lower
        .iter()
        .zip(&var_upper)
        .map(|(l, u)| l + rng.gen_range(0.1..0.9) * (u - l))
        .collect();
    let mut out = Vec::new();
    for r in 0..rows {
        let mut a: Vec<f64> = (0..vars)
            .map(|_| if rng.gen_bool(0.7) { rng.gen_range(-5.0..5.0) } else { 0.0 })
            .collect();
        // an all-zero equality row would be singular for the vertex oracle
        let lead = rng.gen_range(0..vars);
        if a[lead] == 0.0 {
            a[lead] = rng.gen_range(0.5..5.0);
        }
        let act: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
        let eq = with_eq && r == 0;
        let rhs = if eq {
            act
        } else if feasible {
            act + rng.gen_range(0.0..2.0)
        } else {
            rng.gen_range(-8.0..2.0)
        };
        out.push(LinearRow::from_dense(&a, rhs, if eq { RowSense::Eq } else { RowSense::Le }));
    }
    LpProblem {
        cost: (0..vars).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        rows: out,
        var_lower,
        var_upper,
    }
}

/// Random symmetric matrix with entries uniform on `[-scale, scale]`.
pub fn random_sym(rng: &mut impl Rng, dim: usize, scale: f64) -> qcqp_core::SymMatrix {
    let mut m = qcqp_core::SymMatrix::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            m.set(i, j, rng.gen_range(-scale..=scale));
        }
    }
    m
}

/// `max |A v_k − λ_k v_k|` over the eigenpairs.
pub fn eigen_residual(a: &qcqp_core::SymMatrix, eig: &qcqp_core::linalg::Eigen) -> f64 {
    let mut worst = 0.0f64;
    for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
        let av = a.mul_vec(v);
        for (p, q) in av.iter().zip(v) {
            worst = worst.max((p - lambda * q).abs());
        }
    }
    worst
}

/// `max |A − V diag(λ) Vᵀ|` entrywise.
pub fn reconstruction_residual(a: &qcqp_core::SymMatrix, eig: &qcqp_core::linalg::Eigen) -> f64 {
    let n = a.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let s: f64 = eig
                .values
                .iter()
                .zip(&eig.vectors)
                .map(|(l, v)| l * v[i] * v[j])
                .sum();
            worst = worst.max((a.get(i, j) - s).abs());
        }
    }
    worst
}
