//! Fixtures shared by the criterion benches.

use qcqp_core::lp::{LinearRow, LpProblem};
use qcqp_core::model::gen_unitbox;
use qcqp_core::{QcqpInstance, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Suite-shaped instance: `m = n / 4`, density 0.5.
pub fn instance(n: usize, seed: u64) -> QcqpInstance {
    gen_unitbox(n, (n / 4).max(1), 0.5, seed).expect("generator accepts suite shapes")
}

/// Random symmetric matrix with entries on `[-1, 1]`.
pub fn symmetric(dim: usize, seed: u64) -> SymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = SymMatrix::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            m.set(i, j, rng.gen_range(-1.0..=1.0));
        }
    }
    m
}

/// Dense feasible LP over `[0, 1]^vars`.
pub fn dense_lp(vars: usize, rows: usize, seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..rows)
        .map(|_| {
            let a: Vec<(usize, f64)> = (0..vars).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
            let rhs = 0.5 * a.iter().map(|(_, v)| v).sum::<f64>() + rng.gen_range(0.1..1.0);
            LinearRow::le(a, rhs)
        })
        .collect();
    LpProblem {
        cost: (0..vars).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        rows,
        var_lower: vec![0.0; vars],
        var_upper: vec![1.0; vars],
    }
}
