//! McCormick envelopes and general triangle inequalities in the lifted
//! `(x, Y)` space.
//!
//! Every cut is stored sparsely as `Σ a_pq·Y_pq + Σ v_p·x_p + l ≤ 0`, where
//! `Y_pq` (`p ≤ q`) is a single lifted variable. [`Cut::coefficient_matrix`]
//! gives the symmetric matrix `M` with `⟨M, Y⟩ = Σ a_pq·Y_pq`.
//!
//! Triangle candidates are derived from signed triple products
//! `Π_v s_v (x_v − β_v) ≥ 0` (`s = −1, β = u` or `s = +1, β = ℓ`). The
//! trilinear term is cancelled by adding `x_a·F ≥ 0` where `F` is a McCormick
//! product for the remaining pair, chosen with the opposite sign on
//! `x_b x_c`. Bilinear monomials are then lifted to `Y`. This needs `x_a ≥ 0`,
//! hence nonnegative lower bounds.

use std::collections::HashSet;
use std::fmt;

use crate::linalg::SymMatrix;
use crate::model::LiftedPoint;

/// Minimum violation reported by separation.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutKind {
    /// `t ∈ 1..=4`; diagonal pairs only use 1, 3 and 4.
    McCormick(u8),
    /// `t ∈ 1..=12`.
    Triangle(u8),
    /// `family ∈ 1..=8`, `variant ∈ 1..=6`.
    Candidate { family: u8, variant: u8 },
}

/// Identity of a McCormick or triangle cut, independent of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutKey {
    McCormick { i: usize, j: usize, t: u8 },
    Triangle { i: usize, j: usize, k: usize, t: u8 },
}

impl CutKey {
    pub fn indices(&self) -> Vec<usize> {
        match *self {
            CutKey::McCormick { i, j, .. } => vec![i, j],
            CutKey::Triangle { i, j, k, .. } => vec![i, j, k],
        }
    }

    fn sort_key(&self) -> ([usize; 3], usize, u8, u8) {
        match *self {
            CutKey::McCormick { i, j, t } => ([i, j, 0], 2, t, 0),
            CutKey::Triangle { i, j, k, t } => ([i, j, k], 3, t, 1),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(*self, CutKey::McCormick { i, j, .. } if i == j)
    }
}

impl Ord for CutKey {
    /// Lexicographic on the index tuple (a pair sorts before any triple that
    /// extends it), then on `t`.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (a, la, ta, ka) = self.sort_key();
        let (b, lb, tb, kb) = other.sort_key();
        a[..la]
            .cmp(&b[..lb])
            .then(ta.cmp(&tb))
            .then(ka.cmp(&kb))
    }
}

impl PartialOrd for CutKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CutKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutKey::McCormick { i, j, t } => write!(f, "mc{t}({i},{j})"),
            CutKey::Triangle { i, j, k, t } => write!(f, "tri{t}({i},{j},{k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub kind: CutKind,
    /// `(i, j)` with `i ≤ j`, or `(i, j, k)` with `i < j < k`.
    pub indices: Vec<usize>,
    /// `(p, q, a)` with `p ≤ q`: coefficient `a` on the lifted variable `Y_pq`.
    pub y_terms: Vec<(usize, usize, f64)>,
    pub x_terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Cut {
    pub fn key(&self) -> Option<CutKey> {
        match self.kind {
            CutKind::McCormick(t) => Some(CutKey::McCormick {
                i: self.indices[0],
                j: self.indices[1],
                t,
            }),
            CutKind::Triangle(t) => Some(CutKey::Triangle {
                i: self.indices[0],
                j: self.indices[1],
                k: self.indices[2],
                t,
            }),
            CutKind::Candidate { .. } => None,
        }
    }

    /// Symmetric `M` with `⟨M, Y⟩` equal to the cut's `Y` part.
    pub fn coefficient_matrix(&self, n: usize) -> SymMatrix {
        let mut m = SymMatrix::zeros(n);
        for &(p, q, a) in &self.y_terms {
            if p == q {
                m.add(p, p, a);
            } else {
                m.add(p, q, 0.5 * a);
            }
        }
        m
    }

    /// Dense `v`.
    pub fn linear_part(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(p, a) in &self.x_terms {
            v[p] += a;
        }
        v
    }

    /// `⟨M, Y⟩ + vᵀx + l`; positive means violated.
    pub fn violation(&self, p: &LiftedPoint) -> f64 {
        let mut s = self.constant;
        for &(i, j, a) in &self.y_terms {
            s += a * p.lifted.get(i, j);
        }
        for &(i, a) in &self.x_terms {
            s += a * p.x[i];
        }
        s
    }

    /// Value at the consistent point `(x, xxᵀ)`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let mut s = self.constant;
        for &(i, j, a) in &self.y_terms {
            s += a * x[i] * x[j];
        }
        for &(i, a) in &self.x_terms {
            s += a * x[i];
        }
        s
    }
}

/// Coefficients `(a_Y, a_xi, a_xj, constant)` of McCormick cut `t` for the
/// pair `(i, j)`; on a diagonal pair pass the same bounds twice.
#[inline]
pub fn mccormick_coefficients(t: u8, li: f64, ui: f64, lj: f64, uj: f64) -> (f64, f64, f64, f64) {
    match t {
        // (x_i − ℓ_i)(x_j − u_j) ≤ 0
        1 => (1.0, -uj, -li, uj * li),
        // (x_i − u_i)(x_j − ℓ_j) ≤ 0
        2 => (1.0, -lj, -ui, ui * lj),
        // (u_i − x_i)(u_j − x_j) ≥ 0
        3 => (-1.0, uj, ui, -ui * uj),
        // (x_i − ℓ_i)(x_j − ℓ_j) ≥ 0
        4 => (-1.0, lj, li, -li * lj),
        _ => panic!("McCormick index {t} not in 1..=4"),
    }
}

/// McCormick indices emitted for a pair; `t = 2` duplicates `t = 1` on the
/// diagonal and is dropped there.
pub fn mccormick_indices(i: usize, j: usize) -> &'static [u8] {
    if i == j {
        &[1, 3, 4]
    } else {
        &[1, 2, 3, 4]
    }
}

fn check_box(lower: &[f64], upper: &[f64], idx: &[usize]) {
    for &v in idx {
        assert!(
            lower[v] < upper[v] && lower[v] >= 0.0,
            "invalid bounds at index {v}: [{}, {}]",
            lower[v],
            upper[v]
        );
    }
}

pub fn mccormick_cut(lower: &[f64], upper: &[f64], i: usize, j: usize, t: u8) -> Cut {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    check_box(lower, upper, &[i, j]);
    let (ay, ai, aj, c) = mccormick_coefficients(t, lower[i], upper[i], lower[j], upper[j]);
    let x_terms = if i == j {
        vec![(i, ai + aj)]
    } else {
        vec![(i, ai), (j, aj)]
    };
    Cut {
        kind: CutKind::McCormick(t),
        indices: vec![i, j],
        y_terms: vec![(i, j, ay)],
        x_terms,
        constant: c,
    }
}

/// McCormick envelopes of one pair: four cuts, or three when `i == j`.
pub fn mccormick_cuts(lower: &[f64], upper: &[f64], i: usize, j: usize) -> Vec<Cut> {
    mccormick_indices(i, j)
        .iter()
        .map(|&t| mccormick_cut(lower, upper, i, j, t))
        .collect()
}

/// Multilinear polynomial in three variables; entry `m` is the coefficient
/// of `Π_{bit v of m} x_v`.
type Poly3 = [f64; 8];

fn poly_mul(a: &Poly3, b: &Poly3) -> Poly3 {
    let mut out = [0.0; 8];
    for (ma, ca) in a.iter().enumerate() {
        if *ca == 0.0 {
            continue;
        }
        for (mb, cb) in b.iter().enumerate() {
            if *cb == 0.0 {
                continue;
            }
            debug_assert!(ma & mb == 0, "factors share a variable");
            out[ma | mb] += ca * cb;
        }
    }
    out
}

/// `s·(x_v − β)` with `β = u` when `s = −1`, `β = ℓ` when `s = +1`.
fn signed_factor(v: usize, sign: i8, lo: f64, hi: f64) -> Poly3 {
    let mut p = [0.0; 8];
    let s = sign as f64;
    let beta = if sign < 0 { hi } else { lo };
    p[1 << v] = s;
    p[0] = -s * beta;
    p
}

/// Factor signs per family, positions `(i, j, k)`; `−1` is an upper-bound
/// factor `(u − x)`, `+1` a lower-bound factor `(x − ℓ)`.
pub const FAMILY_SIGNS: [[i8; 3]; 8] = [
    [-1, -1, -1],
    [-1, -1, 1],
    [-1, 1, -1],
    [1, -1, -1],
    [-1, 1, 1],
    [1, -1, 1],
    [1, 1, -1],
    [1, 1, 1],
];

/// `(family, multiplier position)` of the retained cuts, in order `t = 1..=12`.
pub const TRIANGLE_SOURCES: [(u8, usize); 12] = [
    (1, 0),
    (1, 1),
    (1, 2),
    (2, 0),
    (2, 1),
    (3, 0),
    (3, 2),
    (4, 1),
    (4, 2),
    (5, 0),
    (6, 1),
    (7, 2),
];

fn other_positions(a: usize) -> (usize, usize) {
    match a {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => unreachable!(),
    }
}

/// Multiplier position and the sign of the first McCormick factor for a
/// variant `1..=6`.
fn variant_parts(variant: u8) -> (usize, i8) {
    let v = (variant - 1) as usize;
    (v / 2, if v.is_multiple_of(2) { 1 } else { -1 })
}

/// Variant number of the retained cut from `family` with multiplier at `a`.
pub fn triangle_variant(family: u8, a: usize) -> u8 {
    let (b, _) = other_positions(a);
    let sb = FAMILY_SIGNS[(family - 1) as usize][b];
    // retained cuts flip the sign of both remaining factors
    let e = if -sb > 0 { 0 } else { 1 };
    (2 * a + e + 1) as u8
}

/// Coefficients of `−G ≤ 0` on the local monomials of the triple.
/// `lo`/`hi` are the bounds of `(x_i, x_j, x_k)`.
pub fn candidate_poly(lo: [f64; 3], hi: [f64; 3], family: u8, variant: u8) -> Poly3 {
    let signs = FAMILY_SIGNS[(family - 1) as usize];
    let triple = poly_mul(
        &poly_mul(
            &signed_factor(0, signs[0], lo[0], hi[0]),
            &signed_factor(1, signs[1], lo[1], hi[1]),
        ),
        &signed_factor(2, signs[2], lo[2], hi[2]),
    );
    let (a, sb_prime) = variant_parts(variant);
    let (b, c) = other_positions(a);
    let sigma = signs[0] * signs[1] * signs[2];
    let sc_prime = -sigma * sb_prime;
    let f = poly_mul(
        &signed_factor(b, sb_prime, lo[b], hi[b]),
        &signed_factor(c, sc_prime, lo[c], hi[c]),
    );
    let mut xa = [0.0; 8];
    xa[1 << a] = 1.0;
    let g = poly_mul(&xa, &f);
    let mut out = [0.0; 8];
    for m in 0..8 {
        out[m] = -(triple[m] + g[m]);
    }
    debug_assert!(out[7] == 0.0, "trilinear term survived");
    out
}

/// Lifted value of a local polynomial: monomials of degree two read `Y`.
#[inline]
fn poly_value(poly: &Poly3, x: [f64; 3], y_ij: f64, y_ik: f64, y_jk: f64) -> f64 {
    poly[0] + poly[1] * x[0] + poly[2] * x[1] + poly[4] * x[2] + poly[3] * y_ij + poly[5] * y_ik + poly[6] * y_jk
}

fn poly_to_cut(poly: &Poly3, kind: CutKind, idx: [usize; 3]) -> Cut {
    let [i, j, k] = idx;
    let mut y_terms = Vec::with_capacity(3);
    for (m, p, q) in [(3, i, j), (5, i, k), (6, j, k)] {
        if poly[m] != 0.0 {
            y_terms.push((p, q, poly[m]));
        }
    }
    let mut x_terms = Vec::with_capacity(3);
    for (m, p) in [(1, i), (2, j), (4, k)] {
        if poly[m] != 0.0 {
            x_terms.push((p, poly[m]));
        }
    }
    Cut {
        kind,
        indices: idx.to_vec(),
        y_terms,
        x_terms,
        constant: poly[0],
    }
}

fn triple_bounds(lower: &[f64], upper: &[f64], idx: [usize; 3]) -> ([f64; 3], [f64; 3]) {
    assert!(idx[0] < idx[1] && idx[1] < idx[2], "triple must be strictly increasing");
    check_box(lower, upper, &idx);
    (
        [lower[idx[0]], lower[idx[1]], lower[idx[2]]],
        [upper[idx[0]], upper[idx[1]], upper[idx[2]]],
    )
}

pub fn candidate_cut(lower: &[f64], upper: &[f64], i: usize, j: usize, k: usize, family: u8, variant: u8) -> Cut {
    let (lo, hi) = triple_bounds(lower, upper, [i, j, k]);
    let poly = candidate_poly(lo, hi, family, variant);
    poly_to_cut(&poly, CutKind::Candidate { family, variant }, [i, j, k])
}

/// All 48 candidates, ordered by family then variant.
pub fn candidate_cuts(lower: &[f64], upper: &[f64], i: usize, j: usize, k: usize) -> Vec<Cut> {
    let mut out = Vec::with_capacity(48);
    for family in 1..=8 {
        for variant in 1..=6 {
            out.push(candidate_cut(lower, upper, i, j, k, family, variant));
        }
    }
    out
}

pub fn is_retained(family: u8, variant: u8) -> Option<u8> {
    TRIANGLE_SOURCES
        .iter()
        .position(|&(f, a)| f == family && triangle_variant(f, a) == variant)
        .map(|t| t as u8 + 1)
}

fn triangle_poly(lo: [f64; 3], hi: [f64; 3], t: u8) -> Poly3 {
    let (family, a) = TRIANGLE_SOURCES[(t - 1) as usize];
    candidate_poly(lo, hi, family, triangle_variant(family, a))
}

pub fn triangle_cut(lower: &[f64], upper: &[f64], i: usize, j: usize, k: usize, t: u8) -> Cut {
    assert!((1..=12).contains(&t), "triangle index {t} not in 1..=12");
    let (lo, hi) = triple_bounds(lower, upper, [i, j, k]);
    poly_to_cut(&triangle_poly(lo, hi, t), CutKind::Triangle(t), [i, j, k])
}

/// The 12 cutting inequalities of a triple, `t = 1..=12`.
pub fn triangle_cuts(lower: &[f64], upper: &[f64], i: usize, j: usize, k: usize) -> Vec<Cut> {
    (1..=12).map(|t| triangle_cut(lower, upper, i, j, k, t)).collect()
}

/// A point satisfying every McCormick cut of the triple but violating
/// triangle cut `t` by `½·w_i·w_j·w_k`.
///
/// `x` sits at the box midpoints. Each `Y_pq` of the triple takes the
/// endpoint of its McCormick range that pushes the cut up:
/// `(u_p u_q + ℓ_p ℓ_q)/2` under a positive coefficient, `(u_p ℓ_q + ℓ_p u_q)/2`
/// otherwise. Other entries of `Y` are `x_p x_q`.
pub fn witness_point(lower: &[f64], upper: &[f64], i: usize, j: usize, k: usize, t: u8) -> LiftedPoint {
    let n = lower.len();
    let mid: Vec<f64> = (0..n).map(|v| 0.5 * (lower[v] + upper[v])).collect();
    let mut p = LiftedPoint::from_x(&mid);
    let cut = triangle_cut(lower, upper, i, j, k, t);
    for &(a, b, coef) in &cut.y_terms {
        let y = if coef > 0.0 {
            0.5 * (upper[a] * upper[b] + lower[a] * lower[b])
        } else {
            0.5 * (upper[a] * lower[b] + lower[a] * upper[b])
        };
        p.lifted.set(a, b, y);
    }
    p
}

/// `|𝒞 ∪ 𝒢|` over off-diagonal pairs: `4·C(n,2) + 12·C(n,3)`.
pub fn pool_capacity(n: usize) -> usize {
    let pairs = n * n.saturating_sub(1) / 2;
    let triples = n * n.saturating_sub(1) * n.saturating_sub(2) / 6;
    4 * pairs + 12 * triples
}

/// Builds the cut identified by `key` for a box.
pub fn cut_for_key(key: CutKey, lower: &[f64], upper: &[f64]) -> Cut {
    match key {
        CutKey::McCormick { i, j, t } => mccormick_cut(lower, upper, i, j, t),
        CutKey::Triangle { i, j, k, t } => triangle_cut(lower, upper, i, j, k, t),
    }
}

/// A deduplicated set of cuts generated for one box.
#[derive(Debug, Clone)]
pub struct CutPool {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cuts: Vec<Cut>,
    keys: HashSet<CutKey>,
}

impl CutPool {
    pub fn new(lower: &[f64], upper: &[f64]) -> Self {
        CutPool {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            cuts: Vec::new(),
            keys: HashSet::new(),
        }
    }

    /// All McCormick cuts, diagonal pairs included.
    pub fn mccormick(lower: &[f64], upper: &[f64]) -> Self {
        let mut pool = Self::new(lower, upper);
        let n = lower.len();
        for i in 0..n {
            for j in i..n {
                for cut in mccormick_cuts(lower, upper, i, j) {
                    pool.push(cut);
                }
            }
        }
        pool
    }

    /// Adds a keyed cut; returns false for duplicates.
    pub fn push(&mut self, cut: Cut) -> bool {
        let key = cut.key().expect("pool cuts are McCormick or triangle cuts");
        if self.keys.insert(key) {
            self.cuts.push(cut);
            true
        } else {
            false
        }
    }

    pub fn insert_key(&mut self, key: CutKey) -> bool {
        if self.keys.contains(&key) {
            return false;
        }
        let cut = cut_for_key(key, &self.lower, &self.upper);
        self.push(cut)
    }

    pub fn contains(&self, key: &CutKey) -> bool {
        self.keys.contains(key)
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn keys(&self) -> impl Iterator<Item = CutKey> + '_ {
        self.cuts.iter().map(|c| c.key().expect("keyed cut"))
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Keeps the cuts whose position satisfies `keep`.
    pub fn retain_positions(&mut self, keep: impl Fn(usize) -> bool) {
        let mut idx = 0;
        let keys = &mut self.keys;
        self.cuts.retain(|c| {
            let k = keep(idx);
            idx += 1;
            if !k {
                keys.remove(&c.key().expect("keyed cut"));
            }
            k
        });
    }

    /// Same keys, coefficients recomputed for a sub-box.
    pub fn regenerate(&self, lower: &[f64], upper: &[f64]) -> Self {
        let mut pool = Self::new(lower, upper);
        for key in self.keys() {
            pool.insert_key(key);
        }
        pool
    }
}

/// Which families `separate_with` scans.
#[derive(Debug, Clone, Copy)]
pub struct Families {
    pub mccormick: bool,
    /// Diagonal McCormick cuts (`i == j`); ignored unless `mccormick`.
    pub diagonal: bool,
    pub triangles: bool,
}

impl Families {
    pub const ALL: Families = Families {
        mccormick: true,
        diagonal: true,
        triangles: true,
    };
}

/// Violated cuts in decreasing order of violation, at most `cap`.
pub fn separate(p: &LiftedPoint, lower: &[f64], upper: &[f64], cap: usize, exclude: &CutPool) -> Vec<Cut> {
    separate_with(p, lower, upper, cap, |k| exclude.contains(k), Families::ALL)
}

/// [`separate`] with a custom exclusion test and family selection.
pub fn separate_with(
    p: &LiftedPoint,
    lower: &[f64],
    upper: &[f64],
    cap: usize,
    exclude: impl Fn(&CutKey) -> bool,
    families: Families,
) -> Vec<Cut> {
    if cap == 0 {
        return Vec::new();
    }
    let found = violated_keys(p, lower, upper, exclude, families);
    found
        .into_iter()
        .take(cap)
        .map(|(_, key)| cut_for_key(key, lower, upper))
        .collect()
}

/// All violated keys with their violations, sorted for separation.
pub fn violated_keys(
    p: &LiftedPoint,
    lower: &[f64],
    upper: &[f64],
    exclude: impl Fn(&CutKey) -> bool,
    families: Families,
) -> Vec<(f64, CutKey)> {
    let n = p.n();
    let x = &p.x;
    let mut found: Vec<(f64, CutKey)> = Vec::new();
    if families.mccormick {
        for i in 0..n {
            let start = if families.diagonal { i } else { i + 1 };
            for j in start..n {
                let y = p.lifted.get(i, j);
                for &t in mccormick_indices(i, j) {
                    let (ay, ai, aj, c) = mccormick_coefficients(t, lower[i], upper[i], lower[j], upper[j]);
                    let v = ay * y + ai * x[i] + aj * x[j] + c;
                    if v > VIOLATION_TOL {
                        let key = CutKey::McCormick { i, j, t };
                        if !exclude(&key) {
                            found.push((v, key));
                        }
                    }
                }
            }
        }
    }
    if families.triangles {
        for i in 0..n {
            for j in (i + 1)..n {
                let yij = p.lifted.get(i, j);
                for k in (j + 1)..n {
                    let lo = [lower[i], lower[j], lower[k]];
                    let hi = [upper[i], upper[j], upper[k]];
                    let xs = [x[i], x[j], x[k]];
                    let (yik, yjk) = (p.lifted.get(i, k), p.lifted.get(j, k));
                    for t in 1..=12u8 {
                        let poly = triangle_poly(lo, hi, t);
                        let v = poly_value(&poly, xs, yij, yik, yjk);
                        if v > VIOLATION_TOL {
                            let key = CutKey::Triangle { i, j, k, t };
                            if !exclude(&key) {
                                found.push((v, key));
                            }
                        }
                    }
                }
            }
        }
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    found
}
