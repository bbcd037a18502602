mod common;

use common::{eigen_residual, random_lp, random_sym, reconstruction_residual, vertex_minimum};
use proptest::prelude::*;
use qcqp_core::linalg::{eig_symmetric, min_eigenvalue};
use qcqp_core::lp::{solve_lp, LpStatus, RowSense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_against_vertices(lp: &qcqp_core::lp::LpProblem) {
    let sol = solve_lp(lp).unwrap();
    match vertex_minimum(lp) {
        Some(v) => {
            assert_eq!(sol.status, LpStatus::Optimal, "oracle found {v}");
            assert!((sol.objective - v).abs() <= 1e-7 * v.abs().max(1.0), "{} vs {v}", sol.objective);
            for row in &lp.rows {
                let act = row.activity(&sol.x);
                match row.sense {
                    RowSense::Le => assert!(act <= row.rhs + 1e-7),
                    RowSense::Eq => assert!((act - row.rhs).abs() <= 1e-7),
                }
            }
        }
        None => assert_eq!(sol.status, LpStatus::Infeasible),
    }
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..200 {
        let lp = random_lp(&mut rng, 6, 8, k % 4 == 0, k % 5 != 0);
        check_against_vertices(&lp);
    }
}

#[test]
fn eigen_reconstruction_up_to_order_51() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dim in (1..=51).step_by(5).chain([51]) {
        let a = random_sym(&mut rng, dim, 1.0);
        let eig = eig_symmetric(&a).unwrap();
        assert!(reconstruction_residual(&a, &eig) <= 1e-9, "order {dim}");
        assert!(eigen_residual(&a, &eig) <= 1e-9, "order {dim}");
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn min_eigenvalue_of_shifted_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for dim in [1, 4, 17] {
        let shift: f64 = rng.gen_range(-3.0..3.0);
        let mut a = qcqp_core::SymMatrix::identity(dim);
        a.axpy(shift - 1.0, &qcqp_core::SymMatrix::identity(dim));
        let (l, _) = min_eigenvalue(&a).unwrap();
        assert!((l - shift).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_vertex_property(seed in any::<u64>(), vars in 1usize..5, rows in 0usize..6, eq in any::<bool>(), feas in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng, vars, rows, eq && rows > 0, feas);
        check_against_vertices(&lp);
    }

    #[test]
    fn eigen_trace_and_orthonormality(seed in any::<u64>(), dim in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_sym(&mut rng, dim, 10.0);
        let eig = eig_symmetric(&a).unwrap();
        let trace: f64 = (0..dim).map(|i| a.get(i, i)).sum();
        let sum: f64 = eig.values.iter().sum();
        prop_assert!((trace - sum).abs() <= 1e-9 * (1.0 + trace.abs()));
        for p in 0..dim {
            for q in 0..dim {
                let d: f64 = eig.vectors[p].iter().zip(&eig.vectors[q]).map(|(x, y)| x * y).sum();
                let want = if p == q { 1.0 } else { 0.0 };
                prop_assert!((d - want).abs() <= 1e-10);
            }
        }
        prop_assert!(reconstruction_residual(&a, &eig) <= 1e-9 * 10.0);
    }
}
