//! Closed-loop runs: the decision is updated from samples of the current
//! population, which then evolves one step under the new decision.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::distributions::{draw_minibatch, Population};
use crate::dynamics::{evolve_population, population_steady_states, DynamicsModel};
use crate::error::{Error, Result};
use crate::linalg::{vector, Cholesky};
use crate::rng::{keyed_rng, Purpose};
use crate::scalar::Scalar;
use crate::transport::{vk_from_steady_states, w1_categorical, w1_population_to_states, CategoricalMetric};

use super::gradient::{composite_gradient, descend, vanilla_gradient, DfoState, GradientEstimate, SensitivityMode};
use super::objective::{Objective, Sense};
use super::oracle::{reduced_eval_at, reduced_value};
use super::projection::Constraint;

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 9] = [
    "iter",
    "objective",
    "opt_gap_rel",
    "dist_to_ustar",
    "grad_norm",
    "grad_adapt_norm",
    "grad_anticipate_norm",
    "w1_to_ss",
    "v_k_estimate",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Composite,
    Vanilla,
    Dfo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Composite => "composite",
            Algorithm::Vanilla => "vanilla",
            Algorithm::Dfo => "dfo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composite" => Ok(Algorithm::Composite),
            "vanilla" => Ok(Algorithm::Vanilla),
            "dfo" => Ok(Algorithm::Dfo),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected composite, vanilla or dfo)"
            ))),
        }
    }
}

/// How the `w1_to_ss` column is filled.
#[derive(Clone, Debug, PartialEq)]
pub enum W1Diagnostic<T> {
    None,
    /// W1 between the first individual's state and a fixed categorical target.
    Categorical { target: Vec<T>, metric: CategoricalMetric },
    /// Exact W1 between the joint measures of `(p_i, d_i)` and
    /// `(h(u_k, d_i), d_i)` over the first `atoms` individuals, computed every
    /// `stride` iterations and on the last row, carried forward in between.
    Population { atoms: usize, stride: usize },
}

#[derive(Clone, Debug)]
pub struct OnlineSettings<T> {
    pub algorithm: Algorithm,
    pub horizon: usize,
    pub eta: T,
    pub n_mb: usize,
    pub master_seed: u64,
    pub trial: u64,
    pub sensitivity_mode: SensitivityMode,
    pub dfo_delta: T,
    /// Initial decision; the projection of zero when absent.
    pub u0: Option<Vec<T>>,
    pub ss_tol: T,
    pub ss_max_iter: usize,
    pub w1: W1Diagnostic<T>,
    /// Metric for `v_k_estimate` and the population W1 (Euclidean when absent).
    pub p_metric: Option<Cholesky<T>>,
    /// Also record the squared norm of the exact reduced gradient at every iterate.
    pub track_exact_gradient: bool,
}

impl<T: Scalar> OnlineSettings<T> {
    pub fn new(algorithm: Algorithm, horizon: usize, eta: T, n_mb: usize, master_seed: u64) -> Self {
        Self {
            algorithm,
            horizon,
            eta,
            n_mb,
            master_seed,
            trial: 0,
            sensitivity_mode: match algorithm {
                Algorithm::Composite => SensitivityMode::OnlineApprox,
                _ => SensitivityMode::None,
            },
            dfo_delta: T::c(2.0),
            u0: None,
            ss_tol: T::c(crate::dynamics::DEFAULT_TOL),
            ss_max_iter: crate::dynamics::DEFAULT_MAX_ITER,
            w1: W1Diagnostic::None,
            p_metric: None,
            track_exact_gradient: false,
        }
    }
}

/// Optimal decision and value used to normalize gaps and distances.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference<T> {
    pub u_star: Vec<T>,
    pub value_star: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub iter: usize,
    pub objective: f64,
    pub opt_gap_rel: f64,
    pub dist_to_ustar: f64,
    pub grad_norm: f64,
    pub grad_adapt_norm: f64,
    pub grad_anticipate_norm: f64,
    pub w1_to_ss: f64,
    pub v_k_estimate: f64,
}

impl RunRow {
    pub fn values(&self) -> [f64; 8] {
        [
            self.objective,
            self.opt_gap_rel,
            self.dist_to_ustar,
            self.grad_norm,
            self.grad_adapt_norm,
            self.grad_anticipate_norm,
            self.w1_to_ss,
            self.v_k_estimate,
        ]
    }
}

/// Formats a float for CSV output: shortest round-trip scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub trial: u64,
    /// `rows[k]` describes iterate `k`; its gradient columns refer to the
    /// estimate computed at `(u_k, population_k)`.
    pub rows: Vec<RunRow>,
    pub decisions: Vec<Vec<f64>>,
    /// Squared norm of the exact reduced gradient at each iterate (when tracked).
    pub exact_grad_sq: Vec<f64>,
}

impl RunRecord {
    pub fn final_row(&self) -> &RunRow {
        self.rows.last().expect("a record always holds the initial row")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let mut rec = vec![r.iter.to_string()];
            rec.extend(r.values().iter().map(|&x| fmt_float(x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OnlineOutcome<T> {
    pub record: RunRecord,
    pub final_population: Population<T>,
    pub final_decision: Vec<T>,
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den.abs()
    }
}

struct Monitor<'a, T: Scalar> {
    model: &'a DynamicsModel<T>,
    objective: &'a Objective<T>,
    settings: &'a OnlineSettings<T>,
    reference: Option<&'a Reference<T>>,
    steady: Option<Vec<Vec<T>>>,
    previous: Option<Vec<Vec<T>>>,
    last_w1: f64,
}

impl<T: Scalar> Monitor<'_, T> {
    /// Linear extrapolation of the last two steady states (renormalized for
    /// the polarized model). Closed-form models ignore the start point.
    fn warm_start(&self) -> Option<Vec<Vec<T>>> {
        let cur = self.steady.as_ref()?;
        if !matches!(self.model, DynamicsModel::Polarized(_)) {
            return None;
        }
        let Some(prev) = self.previous.as_ref() else {
            return Some(cur.clone());
        };
        Some(
            cur.iter()
                .zip(prev)
                .map(|(c, p)| {
                    let x: Vec<T> = c.iter().zip(p).map(|(&a, &b)| a + a - b).collect();
                    let n = vector::norm(&x);
                    if n > T::c(0.5) {
                        vector::scale(&x, T::one() / n)
                    } else {
                        c.clone()
                    }
                })
                .collect(),
        )
    }

    fn row(&mut self, k: usize, u: &[T], pop: &Population<T>, last: bool) -> Result<(RunRow, Option<f64>)> {
        let s = self.settings;
        let start = self.warm_start();
        let states = population_steady_states(self.model, pop, u, s.ss_tol, s.ss_max_iter, start.as_deref())?;
        let value = reduced_value(self.objective, u, &states);
        let v_k = vk_from_steady_states(pop, &states, s.p_metric.as_ref())?;
        let w1 = match &s.w1 {
            W1Diagnostic::None => f64::NAN,
            W1Diagnostic::Categorical { target, metric } => {
                w1_categorical(&pop.individuals()[0].p, target, *metric)?.to_f64_lossy()
            }
            W1Diagnostic::Population { atoms, stride } => {
                if k % (*stride).max(1) == 0 || last {
                    self.last_w1 = w1_population_to_states(pop, &states, *atoms, s.p_metric.as_ref())?
                        .to_f64_lossy();
                }
                self.last_w1
            }
        };
        let exact = if s.track_exact_gradient {
            let ev = reduced_eval_at(self.model, self.objective, pop, u, states.clone(), true)?;
            Some(vector::dot(&ev.grad, &ev.grad).to_f64_lossy())
        } else {
            None
        };
        self.previous = self.steady.replace(states);
        let value_f = value.to_f64_lossy();
        let (gap, dist) = match self.reference {
            Some(r) => {
                let vs = r.value_star.to_f64_lossy();
                let gap = match self.objective.sense() {
                    Sense::Maximize => vs - value_f,
                    Sense::Minimize => value_f - vs,
                };
                let d = vector::dist(u, &r.u_star).to_f64_lossy();
                (relative(gap, vs), relative(d, vector::norm(&r.u_star).to_f64_lossy()))
            }
            None => (f64::NAN, f64::NAN),
        };
        Ok((
            RunRow {
                iter: k,
                objective: value_f,
                opt_gap_rel: gap,
                dist_to_ustar: dist,
                grad_norm: 0.0,
                grad_adapt_norm: 0.0,
                grad_anticipate_norm: 0.0,
                w1_to_ss: w1,
                v_k_estimate: v_k.to_f64_lossy(),
            },
            exact,
        ))
    }
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Runs one algorithm for `horizon` iterations. Iteration `k` estimates the
/// gradient at `(u_k, population_k)`, moves to `u_{k+1}` and evolves the
/// population one step under `u_{k+1}`.
pub fn run_online<T: Scalar>(
    model: &DynamicsModel<T>,
    objective: &Objective<T>,
    constraint: &Constraint<T>,
    population: &Population<T>,
    settings: &OnlineSettings<T>,
    reference: Option<&Reference<T>>,
) -> Result<OnlineOutcome<T>> {
    let n = model.decision_dim(population.dim_state());
    constraint.validate(n)?;
    objective.validate(n, population.dim_state())?;
    if !(settings.eta > T::zero()) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {}", settings.eta)));
    }
    if settings.n_mb == 0 || settings.n_mb > population.len() {
        return Err(Error::SampleSize {
            requested: settings.n_mb,
            available: population.len(),
        });
    }
    let mut u = match &settings.u0 {
        Some(u0) => {
            crate::error::check_dim("initial decision", n, u0.len())?;
            constraint.project(u0)?
        }
        None => constraint.project(&vec![T::zero(); n])?,
    };
    let mut pop = population.clone();
    let mut dfo = DfoState::new(settings.dfo_delta)?;
    let mut monitor = Monitor {
        model,
        objective,
        settings,
        reference,
        steady: None,
        previous: None,
        last_w1: f64::NAN,
    };
    let mut rows = Vec::with_capacity(settings.horizon + 1);
    let mut decisions = Vec::with_capacity(settings.horizon + 1);
    let mut exact_grad_sq = Vec::new();
    let sense = objective.sense();
    for k in 0..=settings.horizon {
        let last = k == settings.horizon;
        let (mut row, exact) = monitor.row(k, &u, &pop, last).map_err(|e| e.at_iteration(k))?;
        exact_grad_sq.extend(exact);
        let (next, g) = algorithm_step(model, objective, constraint, &pop, &u, settings, &mut dfo, sense, k)
            .map_err(|e| e.at_iteration(k))?;
        row.grad_norm = vector::norm(&g.total).to_f64_lossy();
        row.grad_adapt_norm = vector::norm(&g.term_adapt).to_f64_lossy();
        row.grad_anticipate_norm = vector::norm(&g.term_anticipate).to_f64_lossy();
        rows.push(row);
        decisions.push(to_f64(&u));
        if last {
            break;
        }
        u = next;
        pop = evolve_population(model, &pop, &u).map_err(|e| e.at_iteration(k))?;
    }
    Ok(OnlineOutcome {
        record: RunRecord {
            algorithm: settings.algorithm,
            trial: settings.trial,
            rows,
            decisions,
            exact_grad_sq,
        },
        final_population: pop,
        final_decision: u,
    })
}

#[allow(clippy::too_many_arguments)]
fn algorithm_step<T: Scalar>(
    model: &DynamicsModel<T>,
    objective: &Objective<T>,
    constraint: &Constraint<T>,
    pop: &Population<T>,
    u: &[T],
    s: &OnlineSettings<T>,
    dfo: &mut DfoState<T>,
    sense: Sense,
    k: usize,
) -> Result<(Vec<T>, GradientEstimate<T>)> {
    let mut rng = keyed_rng(s.master_seed, s.trial, Purpose::Minibatch, k as u64);
    let idx = draw_minibatch(pop.len(), s.n_mb, &mut rng)?;
    let batch = pop.select(&idx);
    match s.algorithm {
        Algorithm::Composite => {
            let g = composite_gradient(objective, model, u, &batch, s.sensitivity_mode)?;
            Ok((descend(u, &g.total, sense, s.eta, constraint)?, g))
        }
        Algorithm::Vanilla => {
            let g = vanilla_gradient(objective, u, &batch)?;
            Ok((descend(u, &g.total, sense, s.eta, constraint)?, g))
        }
        Algorithm::Dfo => {
            let mut drng = keyed_rng(s.master_seed, s.trial, Purpose::Dfo, k as u64);
            let x = dfo.query(u, &mut drng);
            let total: T = batch.iter().map(|ind| objective.value(&x, &ind.p)).sum();
            let value = total / T::from_usize_lossy(batch.len());
            dfo.step(u, value, sense, s.eta, constraint)
        }
    }
}
