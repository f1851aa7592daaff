//! Log-domain Sinkhorn solver for balanced entropic OT with uniform marginals.
//!
//! The plan is always materialized as `exp(a_i + b_j − cost_ij/ε)` from scaled
//! dual potentials `a = f/ε`, `b = g/ε`, so every returned plan has Gibbs form.
//! Sinkhorn sweeps do the work; when the marginal violation stops shrinking
//! (nearly block-decoupled kernels make the sweep contraction factor close to
//! one) the potentials are polished with damped Newton steps on the concave dual
//! before sweeping resumes.

use super::HyperParams;
use crate::error::Result;
use crate::types::{marginal_violation, Matrix, SolverStatus, TransportPlan};

/// Marginal violations are measured every this many sweeps.
pub const CHECK_EVERY: usize = 10;
/// Sweeps before a slow run may switch to Newton polishing.
const NEWTON_WARMUP: usize = 50;
/// A check counts as progress when the violation shrank below this fraction of the previous one.
const STALL_RATIO: f64 = 0.5;
const NEWTON_MAX_STEPS: usize = 100;
const CG_MAX_ITERS: usize = 500;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug)]
struct Duals {
    a: Vec<f64>,
    b: Vec<f64>,
}

struct Problem {
    log_kernel: Matrix,
    u: f64,
    v: f64,
}

struct Tracker {
    best_violation: f64,
    best: Duals,
    sweeps: usize,
    newton_steps: usize,
}

impl Tracker {
    fn observe(&mut self, violation: f64, duals: &Duals) {
        if violation < self.best_violation {
            self.best_violation = violation;
            self.best = duals.clone();
        }
    }
}

enum SweepOutcome {
    Converged,
    Stalled,
    Exhausted,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl Problem {
    fn rows(&self) -> usize {
        self.log_kernel.rows()
    }

    fn cols(&self) -> usize {
        self.log_kernel.cols()
    }

    fn plan(&self, d: &Duals) -> Matrix {
        let k = &self.log_kernel;
        Matrix::from_fn(k.rows(), k.cols(), |i, j| (d.a[i] + d.b[j] + k.get(i, j)).exp())
            .expect("kernel shape is valid")
    }

    /// One row update followed by one column update.
    fn sweep(&self, d: &mut Duals, col_max: &mut [f64], col_acc: &mut [f64]) {
        let k = &self.log_kernel;
        let (log_u, log_v) = (self.u.ln(), self.v.ln());
        for (i, ai) in d.a.iter_mut().enumerate() {
            *ai = log_u - log_sum_exp(k.row(i).iter().zip(&d.b).map(|(kij, bj)| kij + bj));
        }
        col_max.fill(f64::NEG_INFINITY);
        for (i, ai) in d.a.iter().enumerate() {
            for (m, kij) in col_max.iter_mut().zip(k.row(i)) {
                *m = m.max(ai + kij);
            }
        }
        col_acc.fill(0.0);
        for (i, ai) in d.a.iter().enumerate() {
            for ((acc, m), kij) in col_acc.iter_mut().zip(col_max.iter()).zip(k.row(i)) {
                *acc += (ai + kij - m).exp();
            }
        }
        for ((bj, m), acc) in d.b.iter_mut().zip(col_max.iter()).zip(col_acc.iter()) {
            *bj = log_v - (m + acc.ln());
        }
    }

    /// Concave dual objective (divided by ε): ⟨a, u⟩ + ⟨b, v⟩ − Σ exp(a_i + b_j − cost_ij/ε).
    fn dual_objective(&self, d: &Duals) -> f64 {
        let linear = self.u * d.a.iter().sum::<f64>() + self.v * d.b.iter().sum::<f64>();
        linear - self.plan(d).as_slice().iter().sum::<f64>()
    }

    fn run_sweeps(&self, d: &mut Duals, hp: &HyperParams, track: &mut Tracker, stall_exit: bool) -> SweepOutcome {
        let mut col_max = vec![0.0; self.cols()];
        let mut col_acc = vec![0.0; self.cols()];
        let mut previous = f64::INFINITY;
        let start = track.sweeps;
        while track.sweeps < hp.max_iters {
            self.sweep(d, &mut col_max, &mut col_acc);
            track.sweeps += 1;
            if !track.sweeps.is_multiple_of(CHECK_EVERY) && track.sweeps != hp.max_iters {
                continue;
            }
            let violation = marginal_violation(&self.plan(d));
            track.observe(violation, d);
            if violation < hp.tol {
                return SweepOutcome::Converged;
            }
            if stall_exit && track.sweeps - start >= NEWTON_WARMUP && violation > STALL_RATIO * previous {
                return SweepOutcome::Stalled;
            }
            previous = violation;
        }
        SweepOutcome::Exhausted
    }

    /// Newton steps on the dual until the tolerance is met or a step fails.
    ///
    /// Each step is followed by a sweep, so the column marginals (and the total
    /// mass) of every observed iterate are exact up to rounding.
    fn polish(&self, d: &mut Duals, hp: &HyperParams, track: &mut Tracker) -> bool {
        let mut col_max = vec![0.0; self.cols()];
        let mut col_acc = vec![0.0; self.cols()];
        for _ in 0..NEWTON_MAX_STEPS {
            let plan = self.plan(d);
            let violation = marginal_violation(&plan);
            let Some(next) = self.newton_step(d, &plan, violation) else {
                return false;
            };
            *d = next;
            track.newton_steps += 1;
            self.sweep(d, &mut col_max, &mut col_acc);
            track.sweeps += 1;
            let violation = marginal_violation(&self.plan(d));
            track.observe(violation, d);
            if violation < hp.tol {
                return true;
            }
        }
        false
    }

    fn newton_step(&self, d: &Duals, plan: &Matrix, violation: f64) -> Option<Duals> {
        let (rows, cols) = (self.rows(), self.cols());
        let r = plan.row_sums();
        let c = plan.col_sums();
        let grad: Vec<f64> = r
            .iter()
            .map(|ri| self.u - ri)
            .chain(c.iter().map(|cj| self.v - cj))
            .collect();
        let diag: Vec<f64> = r.iter().chain(&c).map(|x| x.max(f64::MIN_POSITIVE)).collect();
        let hessian = |x: &[f64], out: &mut [f64]| {
            let (xa, xb) = x.split_at(rows);
            let (oa, ob) = out.split_at_mut(rows);
            ob.iter_mut().zip(&c).zip(xb).for_each(|((o, cj), x)| *o = cj * x);
            for (i, (o, pi)) in oa.iter_mut().zip(plan.row_iter()).enumerate() {
                *o = r[i] * xa[i] + dot(pi, xb);
                for (obj, pij) in ob.iter_mut().zip(pi) {
                    *obj += pij * xa[i];
                }
            }
        };
        let step = conjugate_gradient(hessian, &diag, &grad, CG_MAX_ITERS.min(rows + cols));
        let slope = dot(&grad, &step);
        if !(slope > 0.0 && slope.is_finite()) {
            return None;
        }
        let current = self.dual_objective(d);
        let mut scale = 1.0;
        while scale > 1e-12 {
            let trial = Duals {
                a: d.a.iter().zip(&step[..rows]).map(|(a, s)| a + scale * s).collect(),
                b: d.b.iter().zip(&step[rows..]).map(|(b, s)| b + scale * s).collect(),
            };
            let value = self.dual_objective(&trial);
            if value.is_finite() {
                // Close to the optimum the objective gain drowns in rounding, so a
                // full step that reduces the violation is also accepted.
                if value >= current + ARMIJO * scale * slope
                    || (scale == 1.0 && marginal_violation(&self.plan(&trial)) < violation)
                {
                    return Some(trial);
                }
            }
            scale *= 0.5;
        }
        None
    }
}

/// Jacobi-preconditioned conjugate gradient for a symmetric positive semidefinite operator.
fn conjugate_gradient(apply: impl Fn(&[f64], &mut [f64]), diag: &[f64], rhs: &[f64], max_iters: usize) -> Vec<f64> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut res = rhs.to_vec();
    let mut z: Vec<f64> = res.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&res, &z);
    let mut hp = vec![0.0; n];
    let stop = 1e-13 * dot(rhs, rhs).sqrt();
    for _ in 0..max_iters {
        apply(&p, &mut hp);
        let curvature = dot(&p, &hp);
        if curvature.is_nan() || curvature <= 0.0 {
            break;
        }
        let alpha = rz / curvature;
        for k in 0..n {
            x[k] += alpha * p[k];
            res[k] -= alpha * hp[k];
        }
        if dot(&res, &res).sqrt() <= stop {
            break;
        }
        for k in 0..n {
            z[k] = res[k] / diag[k];
        }
        let rz_next = dot(&res, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    x
}

/// Balanced entropic OT with marginals u = 1/T and v = 1/N.
///
/// Returns the plan minimizing `⟨Π, cost⟩ − ε·H(Π)`. If the ℓ∞ marginal
/// violation is still above `hp.tol` after `hp.max_iters` sweeps, the best
/// iterate seen is returned with `converged = false`.
pub fn sinkhorn(cost: &Matrix, hp: &HyperParams) -> Result<TransportPlan> {
    hp.validate()?;
    cost.check_finite()?;
    let (rows, cols) = (cost.rows(), cost.cols());
    let problem = Problem {
        log_kernel: cost.map(|c| -c / hp.epsilon),
        u: 1.0 / rows as f64,
        v: 1.0 / cols as f64,
    };
    let mut duals = Duals {
        a: vec![0.0; rows],
        b: vec![0.0; cols],
    };
    let mut track = Tracker {
        best_violation: f64::INFINITY,
        best: duals.clone(),
        sweeps: 0,
        newton_steps: 0,
    };

    let mut polished = false;
    loop {
        match problem.run_sweeps(&mut duals, hp, &mut track, !polished) {
            SweepOutcome::Converged | SweepOutcome::Exhausted => break,
            SweepOutcome::Stalled => {
                polished = true;
                if problem.polish(&mut duals, hp, &mut track) {
                    break;
                }
                duals = track.best.clone();
            }
        }
    }

    let converged = track.best_violation < hp.tol;
    if !converged {
        log::warn!(
            "sinkhorn did not converge after {} sweeps and {} newton steps (violation {:e})",
            track.sweeps,
            track.newton_steps,
            track.best_violation
        );
    }
    Ok(TransportPlan::new(
        problem.plan(&track.best),
        SolverStatus {
            converged,
            iterations: track.sweeps,
            newton_steps: track.newton_steps,
            marginal_violation: track.best_violation,
        },
    ))
}
