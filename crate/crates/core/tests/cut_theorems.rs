use qcqp_core::cuts::{
    candidate_cuts, is_retained, mccormick_cuts, triangle_cut, witness_point, CutKind,
};
use qcqp_core::oracle::{certify_redundant, redundancy_value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for v in 0..3 {
        let a: f64 = rng.gen_range(0.0..10.0);
        let b: f64 = rng.gen_range(0.0..10.0);
        lo[v] = a.min(b);
        hi[v] = a.max(b).max(lo[v] + 1e-2);
    }
    (lo, hi)
}

#[test]
fn twelve_of_forty_eight_cut_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let (lo, hi) = random_box(&mut rng);
        let mut cutting = 0;
        for cut in candidate_cuts(&lo, &hi, 0, 1, 2) {
            let CutKind::Candidate { family, variant } = cut.kind else {
                unreachable!()
            };
            let redundant = certify_redundant(&lo, &hi, &cut).unwrap();
            assert_eq!(
                !redundant,
                is_retained(family, variant).is_some(),
                "family {family} variant {variant} on {lo:?} {hi:?}: lp value {}",
                redundancy_value(&lo, &hi, &cut).unwrap()
            );
            if !redundant {
                cutting += 1;
            }
        }
        assert_eq!(cutting, 12);
    }
}

#[test]
fn retained_candidates_equal_triangle_cuts() {
    let lo = [0.3, 1.0, 2.0];
    let hi = [3.0, 4.5, 2.5];
    let cands = candidate_cuts(&lo, &hi, 0, 1, 2);
    for t in 1..=12u8 {
        let tri = triangle_cut(&lo, &hi, 0, 1, 2, t);
        let found = cands
            .iter()
            .find(|c| match c.kind {
                CutKind::Candidate { family, variant } => is_retained(family, variant) == Some(t),
                _ => false,
            })
            .unwrap();
        assert_eq!(found.y_terms, tri.y_terms);
        assert_eq!(found.x_terms, tri.x_terms);
        assert_eq!(found.constant, tri.constant);
    }
}

/// Coefficients `(x_i, x_j, x_k, Y_ij, Y_ik, Y_jk, constant)` of a triple cut.
fn dense(cut: &qcqp_core::Cut) -> [f64; 7] {
    let mut out = [0.0; 7];
    for &(p, a) in &cut.x_terms {
        out[p] += a;
    }
    for &(p, q, a) in &cut.y_terms {
        let slot = match (p, q) {
            (0, 1) => 3,
            (0, 2) => 4,
            (1, 2) => 5,
            _ => panic!("unexpected pair"),
        };
        out[slot] += a;
    }
    out[6] = cut.constant;
    out
}

/// The four 0-1 triangle inequalities, written `≤ 0`.
const CLASSICAL: [[f64; 7]; 4] = [
    // x_i + x_j + x_k − Y_ij − Y_ik − Y_jk ≤ 1
    [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
    // Y_ij + Y_ik − Y_jk ≤ x_i
    [-1.0, 0.0, 0.0, 1.0, 1.0, -1.0, 0.0],
    // Y_ij + Y_jk − Y_ik ≤ x_j
    [0.0, -1.0, 0.0, 1.0, -1.0, 1.0, 0.0],
    // Y_ik + Y_jk − Y_ij ≤ x_k
    [0.0, 0.0, -1.0, -1.0, 1.0, 1.0, 0.0],
];

#[test]
fn unit_box_reduces_to_classical_triangles() {
    let expected = [0, 0, 0, 3, 3, 2, 2, 1, 1, 1, 2, 3];
    for t in 1..=12u8 {
        let c = dense(&triangle_cut(&[0.0; 3], &[1.0; 3], 0, 1, 2, t));
        let form = CLASSICAL
            .iter()
            .position(|f| *f == c)
            .unwrap_or_else(|| panic!("t={t} {c:?} is not a classical form"));
        assert_eq!(form, expected[(t - 1) as usize], "t={t}");
    }
}

#[test]
fn witnesses_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (lo, hi) = random_box(&mut rng);
        let half = 0.5 * (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
        for t in 1..=12 {
            let w = witness_point(&lo, &hi, 0, 1, 2, t);
            for (a, b) in [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)] {
                for mc in mccormick_cuts(&lo, &hi, a, b) {
                    assert!(mc.violation(&w) <= 1e-9);
                }
            }
            let v = triangle_cut(&lo, &hi, 0, 1, 2, t).violation(&w);
            assert!((v - half).abs() <= 1e-9, "t={t}: {v} vs {half}");
        }
    }
}
