//! Local search for feasible points: augmented Lagrangian with a projected
//! gradient inner solver over the box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{QcqpInstance, FEAS_TOL};

/// Constraint values are pushed this far below `b_r` so that roundoff leaves
/// returned points feasible within [`FEAS_TOL`].
const MARGIN: f64 = 1e-9;
const OUTER_ITERS: usize = 40;
const INNER_ITERS: usize = 400;

#[derive(Debug, Clone, Copy)]
pub struct LocalSearchConfig {
    /// Random restarts in addition to the given start.
    pub perturbations: usize,
    pub seed: u64,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        LocalSearchConfig {
            perturbations: 4,
            seed: 0,
        }
    }
}

struct Workspace<'a> {
    inst: &'a QcqpInstance,
    lower: &'a [f64],
    upper: &'a [f64],
}

impl Workspace<'_> {
    fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// `f_r(x)` and `∇f_r(x) = 2Q_r x + c_r`.
    fn form(&self, r: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let q = self.inst.quadratic(r);
        let c = self.inst.linear(r);
        let qx = q.mul_vec(x);
        let mut val = 0.0;
        for i in 0..x.len() {
            val += x[i] * (qx[i] + c[i]);
            grad[i] = 2.0 * qx[i] + c[i];
        }
        val
    }

    /// Augmented Lagrangian value and gradient.
    fn merit(&self, x: &[f64], lambda: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let n = x.len();
        let mut g = vec![0.0; n];
        let mut val = self.form(0, x, grad);
        for r in 1..=self.inst.m() {
            let fr = self.form(r, x, &mut g) - self.inst.rhs_at(r) + MARGIN;
            let shifted = fr + lambda[r - 1] / mu;
            if shifted > 0.0 {
                val += 0.5 * mu * (shifted * shifted - (lambda[r - 1] / mu).powi(2));
                for i in 0..n {
                    grad[i] += mu * shifted * g[i];
                }
            } else {
                val -= 0.5 * lambda[r - 1] * lambda[r - 1] / mu;
            }
        }
        val
    }

    fn inner(&self, x: &mut Vec<f64>, lambda: &[f64], mu: f64) {
        let n = x.len();
        let mut grad = vec![0.0; n];
        let mut trial_grad = vec![0.0; n];
        let mut val = self.merit(x, lambda, mu, &mut grad);
        let mut step = 1.0 / (1.0 + mu);
        let mut trial = vec![0.0; n];
        for _ in 0..INNER_ITERS {
            let mut accepted = false;
            for _ in 0..60 {
                for i in 0..n {
                    trial[i] = x[i] - step * grad[i];
                }
                self.project(&mut trial);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for i in 0..n {
                    let d = trial[i] - x[i];
                    lin += grad[i] * d;
                    sq += d * d;
                }
                let tv = self.merit(&trial, lambda, mu, &mut trial_grad);
                if tv <= val + lin + 0.5 * sq / step + 1e-15 * val.abs() {
                    let moved = sq.sqrt();
                    std::mem::swap(x, &mut trial);
                    std::mem::swap(&mut grad, &mut trial_grad);
                    val = tv;
                    accepted = true;
                    step *= 2.0;
                    if moved <= 1e-12 * (1.0 + step) {
                        return;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return;
            }
        }
    }

    fn max_violation(&self, x: &[f64]) -> f64 {
        self.inst.max_violation(x)
    }

    fn solve_from(&self, start: &[f64]) -> Option<Vec<f64>> {
        let m = self.inst.m();
        let mut x = start.to_vec();
        self.project(&mut x);
        let mut lambda = vec![0.0; m];
        let mut mu = 10.0;
        let mut last_viol = f64::INFINITY;
        for _ in 0..OUTER_ITERS {
            self.inner(&mut x, &lambda, mu);
            let mut viol: f64 = 0.0;
            for r in 1..=m {
                let g = self.inst.evaluate_constraint(r, &x).ok()? - self.inst.rhs_at(r) + MARGIN;
                lambda[r - 1] = (lambda[r - 1] + mu * g).max(0.0);
                viol = viol.max(g);
            }
            if viol <= 0.0 && last_viol <= 1e-9 {
                break;
            }
            if viol > 0.25 * last_viol {
                mu = (mu * 10.0).min(1e12);
            }
            last_viol = viol.max(0.0);
        }
        (self.max_violation(&x) <= FEAS_TOL).then_some(x)
    }
}

/// Best feasible point found from `start` and seeded perturbations of it,
/// or `None`. Returned points lie in the box and satisfy every constraint
/// within [`FEAS_TOL`].
pub fn local_search(
    inst: &QcqpInstance,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    config: LocalSearchConfig,
) -> Option<Vec<f64>> {
    let ws = Workspace { inst, lower, upper };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![start.to_vec()];
    for _ in 0..config.perturbations {
        let p: Vec<f64> = (0..start.len())
            .map(|i| {
                let w = upper[i] - lower[i];
                (start[i] + rng.gen_range(-0.25..0.25) * w).clamp(lower[i], upper[i])
            })
            .collect();
        starts.push(p);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in &starts {
        if let Some(x) = ws.solve_from(s) {
            let v = inst.objective(&x);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, x));
            }
        }
    }
    best.map(|(_, x)| x)
}
