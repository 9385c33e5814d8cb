//! Offline solver for the reduced objective `u -> E Phi(u, h(u, d))`.

use rand::Rng as _;

use crate::distributions::{sample_sphere, Population};
use crate::dynamics::{population_steady_states, DynamicsModel};
use crate::error::{Error, Result};
use crate::linalg::vector;
use crate::rng::{keyed_rng, Purpose};
use crate::scalar::Scalar;

use super::gradient::{composite_gradient, SensitivityMode};
use super::objective::Objective;
use super::projection::Constraint;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOptions<T> {
    pub restarts: usize,
    pub max_iter: usize,
    /// First-order residual `|u - Proj(u - grad)|` accepted as converged.
    pub tol: T,
    pub initial_step: T,
    pub seed: u64,
    pub ss_tol: T,
    pub ss_max_iter: usize,
}

impl<T: Scalar> Default for OracleOptions<T> {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 5000,
            tol: T::c(1e-8),
            initial_step: T::c(1e-2),
            seed: 0,
            ss_tol: T::c(1e-12),
            ss_max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution<T> {
    pub u_star: Vec<T>,
    pub value_star: T,
    pub residual: T,
    pub restart: usize,
    pub iterations: usize,
    pub converged_restarts: usize,
}

/// Reduced objective value, its gradient (both in the objective's own
/// orientation) and the steady states they were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedEval<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub states: Vec<Vec<T>>,
}

pub fn reduced_value<T: Scalar>(
    objective: &Objective<T>,
    u: &[T],
    states: &[Vec<T>],
) -> T {
    let total: T = states.iter().map(|p| objective.value(u, p)).sum();
    total / T::from_usize_lossy(states.len().max(1))
}

#[allow(clippy::too_many_arguments)]
pub fn reduced_eval<T: Scalar>(
    model: &DynamicsModel<T>,
    objective: &Objective<T>,
    pop: &Population<T>,
    u: &[T],
    ss_tol: T,
    ss_max_iter: usize,
    warm: Option<&[Vec<T>]>,
    with_gradient: bool,
) -> Result<ReducedEval<T>> {
    let states = population_steady_states(model, pop, u, ss_tol, ss_max_iter, warm)?;
    reduced_eval_at(model, objective, pop, u, states, with_gradient)
}

/// As [`reduced_eval`] with the steady states already known.
pub fn reduced_eval_at<T: Scalar>(
    model: &DynamicsModel<T>,
    objective: &Objective<T>,
    pop: &Population<T>,
    u: &[T],
    states: Vec<Vec<T>>,
    with_gradient: bool,
) -> Result<ReducedEval<T>> {
    let value = reduced_value(objective, u, &states);
    let grad = if with_gradient {
        let at_ss = pop.with_states(states.clone())?;
        let all: Vec<_> = at_ss.individuals().iter().collect();
        // At a steady state the online sensitivity formula is exact.
        composite_gradient(objective, model, u, &all, SensitivityMode::OnlineApprox)?.total
    } else {
        Vec::new()
    };
    Ok(ReducedEval {
        value,
        grad,
        states,
    })
}

fn initial_point<T: Scalar>(constraint: &Constraint<T>, n: usize, seed: u64, restart: usize) -> Result<Vec<T>> {
    if restart == 0 {
        return constraint.project(&vec![T::zero(); n]);
    }
    let mut rng = keyed_rng(seed, restart as u64, Purpose::Oracle, 0);
    let raw: Vec<T> = match *constraint {
        Constraint::NormBall { radius } => {
            let r = T::c(rng.random::<f64>());
            vector::scale(&sample_sphere(&mut rng, n), radius * r)
        }
        Constraint::CappedSimplex { qbar, .. } => (0..n)
            .map(|_| qbar * T::c(2.0 * rng.random::<f64>()))
            .collect(),
        Constraint::Unconstrained => sample_sphere(&mut rng, n),
    };
    constraint.project(&raw)
}

fn residual<T: Scalar>(constraint: &Constraint<T>, x: &[T], g_desc: &[T]) -> Result<T> {
    let p = constraint.project(&vector::sub(x, g_desc))?;
    Ok(vector::dist(x, &p))
}

/// Multi-start spectral projected gradient on the exact reduced objective
/// (Barzilai-Borwein steps with halving until the objective does not get worse).
pub fn oracle_solve<T: Scalar>(
    model: &DynamicsModel<T>,
    objective: &Objective<T>,
    constraint: &Constraint<T>,
    pop: &Population<T>,
    opts: &OracleOptions<T>,
) -> Result<OracleSolution<T>> {
    let n = model.decision_dim(pop.dim_state());
    constraint.validate(n)?;
    objective.validate(n, pop.dim_state())?;
    if opts.restarts == 0 {
        return Err(Error::InvalidParameter("oracle needs at least one restart".into()));
    }
    let sgn = objective.sense().descent_sign::<T>();
    let eval = |u: &[T], warm: Option<&[Vec<T>]>| {
        reduced_eval(model, objective, pop, u, opts.ss_tol, opts.ss_max_iter, warm, true)
    };
    let mut best: Option<OracleSolution<T>> = None;
    let mut best_residual = T::infinity();
    let mut converged = 0usize;
    for restart in 0..opts.restarts {
        let mut x = initial_point(constraint, n, opts.seed, restart)?;
        let mut ev = eval(&x, None)?;
        let mut f = sgn * ev.value;
        let mut g = vector::scale(&ev.grad, sgn);
        let mut alpha = opts.initial_step;
        let mut res = residual(constraint, &x, &g)?;
        let mut iters = 0;
        while res > opts.tol && iters < opts.max_iter {
            iters += 1;
            let slack = T::c(1e-13) * f.abs().max(T::one());
            let mut accepted = None;
            while alpha > T::c(1e-20) {
                let mut trial = x.clone();
                vector::axpy(-alpha, &g, &mut trial);
                let trial = constraint.project(&trial)?;
                let ev_t = eval(&trial, Some(&ev.states))?;
                if sgn * ev_t.value <= f + slack {
                    accepted = Some((trial, ev_t));
                    break;
                }
                alpha = alpha / T::c(2.0);
            }
            let Some((xn, evn)) = accepted else { break };
            let gn = vector::scale(&evn.grad, sgn);
            let s = vector::sub(&xn, &x);
            let y = vector::sub(&gn, &g);
            let sy = vector::dot(&s, &y);
            alpha = if sy > T::zero() {
                (vector::dot(&s, &s) / sy).max(T::c(1e-12)).min(T::c(1e12))
            } else {
                (alpha * T::c(2.0)).min(T::c(1e12))
            };
            x = xn;
            f = sgn * evn.value;
            g = gn;
            ev = evn;
            res = residual(constraint, &x, &g)?;
        }
        best_residual = best_residual.min(res);
        if res <= opts.tol {
            converged += 1;
            let better = best.as_ref().is_none_or(|b| sgn * ev.value < sgn * b.value_star);
            if better {
                best = Some(OracleSolution {
                    u_star: x,
                    value_star: ev.value,
                    residual: res,
                    restart,
                    iterations: iters,
                    converged_restarts: 0,
                });
            }
        }
    }
    match best {
        Some(mut b) => {
            b.converged_restarts = converged;
            Ok(b)
        }
        None => Err(Error::NonConvergence {
            iters: opts.max_iter,
            residual: best_residual.to_f64_lossy(),
        }),
    }
}
