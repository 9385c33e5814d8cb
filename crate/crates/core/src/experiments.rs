//! Case studies, rate sweeps and trial replication, driven by an
//! [`ExperimentConfig`].

use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{
    ConstraintSection, DynamicsSection, ExperimentConfig, LoadedConfig, ObjectiveSection, Scenario,
};
use crate::distributions::{sample_gaussian, sample_hemisphere, sample_simplex, Population};
use crate::dynamics::{ContractionCertificate, DynamicsModel};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::optimizers::{
    oracle_solve, run_online, Algorithm, Constraint, Objective, OnlineSettings, OracleOptions, OracleSolution,
    Reference, RunRecord, W1Diagnostic,
};
use crate::optimizers::online::{fmt_float, CSV_SCHEMA_VERSION};
use crate::rng::{derive_seed, keyed_rng, Purpose};
use crate::transport::{angle_histogram, angle_histogram_of, convergence_measures, AngleHistogram, ConvergenceSummary};

/// Everything one trial needs besides the algorithm settings.
#[derive(Clone, Debug)]
pub struct Instance {
    pub model: DynamicsModel<f64>,
    pub objective: Objective<f64>,
    pub constraint: Constraint<f64>,
    pub population: Population<f64>,
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<DynamicsModel<f64>> {
    match cfg.dynamics {
        DynamicsSection::Polarized { lambda, sigma } => DynamicsModel::polarized(lambda, sigma),
        DynamicsSection::Softmax {
            lambda1,
            lambda2,
            epsilon,
        } => DynamicsModel::softmax(lambda1, lambda2, epsilon),
        DynamicsSection::Linear {
            decision_dim,
            spectral_norm,
            input_scale,
            exo_scale,
        } => {
            let m = cfg.population.dim;
            let mut rng = keyed_rng(cfg.experiment.seed, 0, Purpose::Instance, 0);
            let mut gauss = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = gauss(m, m);
            let a = g.scale(spectral_norm / g.spectral_norm());
            let b = gauss(m, decision_dim).scale(input_scale / (m as f64).sqrt());
            DynamicsModel::linear(a, b, Matrix::scaled_identity(m, exo_scale))
        }
    }
}

pub fn build_objective(cfg: &ExperimentConfig, n: usize) -> Objective<f64> {
    match cfg.objective {
        ObjectiveSection::Affinity => Objective::Affinity,
        ObjectiveSection::GainEntropy { rho } => Objective::GainEntropy { rho },
        ObjectiveSection::Quadratic { target_scale } => {
            // Stream 1 of the instance key; stream 0 builds the matrices.
            let mut rng = keyed_rng(cfg.experiment.seed, 0, Purpose::Instance, 1);
            let mut draw = |k: usize| -> Vec<f64> {
                (0..k).map(|_| target_scale * rng.sample::<f64, _>(StandardNormal)).collect()
            };
            let target_u = draw(n);
            let target_p = draw(cfg.population.dim);
            Objective::QuadraticTest { target_u, target_p }
        }
    }
}

pub fn build_constraint(cfg: &ExperimentConfig) -> Constraint<f64> {
    match cfg.constraint {
        ConstraintSection::NormBall { radius } => Constraint::NormBall { radius },
        ConstraintSection::CappedSimplex { budget, cap } => Constraint::CappedSimplex { b: budget, qbar: cap },
        ConstraintSection::Unconstrained => Constraint::Unconstrained,
    }
}

/// Population seed of a trial, split from the master seed by trial index.
pub fn population_seed(cfg: &ExperimentConfig, trial: u64) -> u64 {
    derive_seed(cfg.experiment.seed, trial, Purpose::Population)
}

/// Instance of a trial. Only the polarized scenario draws a fresh population
/// per trial; the others keep the trial-0 instance and vary the sampling.
pub fn build_instance(cfg: &ExperimentConfig, trial: u64) -> Result<Instance> {
    let model = build_model(cfg)?;
    let m = cfg.population.dim;
    let n = model.decision_dim(m);
    let population = match cfg.experiment.scenario {
        Scenario::Polarized => sample_hemisphere(m, cfg.population.size, population_seed(cfg, trial))?,
        Scenario::Recommender => sample_simplex(m, cfg.population.size, population_seed(cfg, 0))?,
        Scenario::RateSweep => sample_gaussian(m, model.exo_dim(m), cfg.population.size, 1.0, population_seed(cfg, 0))?,
    };
    Ok(Instance {
        objective: build_objective(cfg, n),
        constraint: build_constraint(cfg),
        model,
        population,
    })
}

pub fn oracle_options(cfg: &ExperimentConfig, trial: u64) -> OracleOptions<f64> {
    OracleOptions {
        restarts: cfg.oracle.restarts,
        max_iter: cfg.oracle.max_iter,
        tol: cfg.oracle.tol,
        seed: derive_seed(cfg.experiment.seed, trial, Purpose::Oracle),
        ..OracleOptions::default()
    }
}

pub fn solve_oracle(cfg: &ExperimentConfig, inst: &Instance, trial: u64) -> Result<OracleSolution<f64>> {
    oracle_solve(&inst.model, &inst.objective, &inst.constraint, &inst.population, &oracle_options(cfg, trial))
}

/// Certificate of the model, or the reason it is unavailable.
pub fn certificate(
    model: &DynamicsModel<f64>,
    state_dim: usize,
) -> std::result::Result<ContractionCertificate<f64>, String> {
    model.contraction_certificate(state_dim).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOracle {
    pub trial: u64,
    pub solution: OracleSolution<f64>,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub record: RunRecord,
    pub horizon: usize,
    pub eta: f64,
    pub final_decision: Vec<f64>,
    /// Angles of the initial positions to `u*` and of the final positions
    /// to the final decision (polarized scenario only).
    pub initial_histogram: Option<AngleHistogram>,
    pub final_histogram: Option<AngleHistogram>,
    pub wall_seconds: f64,
}

impl TrialOutcome {
    pub fn file_name(&self, sweep: bool) -> String {
        if sweep {
            format!("{}_T{}_trial{}.csv", self.record.algorithm, self.horizon, self.record.trial)
        } else {
            format!("{}_trial{}.csv", self.record.algorithm, self.record.trial)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub summary: ConvergenceSummary,
}

impl AlgorithmSummary {
    pub fn final_gap(&self) -> f64 {
        *self.summary.opt_gap.mean.last().expect("nonempty")
    }

    pub fn final_distance(&self) -> f64 {
        *self.summary.distance.mean.last().expect("nonempty")
    }

    pub fn final_w1(&self) -> f64 {
        *self.summary.w1.mean.last().expect("nonempty")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub horizon: usize,
    pub eta: f64,
    /// `(1/T) sum_{k<T} |grad F(u_k)|^2` per trial.
    pub per_trial: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `ln mean` against `ln T`.
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub runs: Vec<TrialOutcome>,
    pub oracles: Vec<TrialOracle>,
    pub certificate: std::result::Result<ContractionCertificate<f64>, String>,
    pub summaries: Vec<AlgorithmSummary>,
    pub sweep: Option<SweepSummary>,
    /// Hemisphere reference vectors by trial (polarized scenario).
    pub references: Vec<(u64, Vec<f64>)>,
    /// Steady state of the single user at `u*` (recommender scenario).
    pub target: Option<Vec<f64>>,
}

impl ExperimentOutput {
    pub fn summary(&self, alg: Algorithm) -> Option<&AlgorithmSummary> {
        self.summaries.iter().find(|s| s.algorithm == alg)
    }

    pub fn runs_of(&self, alg: Algorithm) -> impl Iterator<Item = &TrialOutcome> {
        self.runs.iter().filter(move |r| r.record.algorithm == alg)
    }
}

/// Runs `n_trials` trials in parallel and returns the records in trial
/// order with their aggregate. Seeds must be keyed by the trial index for
/// the result to be independent of scheduling.
pub fn replicate<F>(n_trials: usize, run: F) -> Result<(Vec<RunRecord>, ConvergenceSummary)>
where
    F: Fn(u64) -> Result<RunRecord> + Sync,
{
    if n_trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let records = (0..n_trials as u64)
        .into_par_iter()
        .map(&run)
        .collect::<Result<Vec<_>>>()?;
    let summary = convergence_measures(&records)?;
    Ok((records, summary))
}

fn settings_for(
    cfg: &ExperimentConfig,
    alg: Algorithm,
    trial: u64,
    p_metric: Option<Cholesky<f64>>,
    w1: W1Diagnostic<f64>,
) -> OnlineSettings<f64> {
    let (eta, n_mb) = match alg {
        Algorithm::Dfo => (cfg.dfo.eta, cfg.optimizer.n_mb),
        _ => (cfg.optimizer.eta, cfg.optimizer.n_mb),
    };
    let mut s = OnlineSettings::new(alg, cfg.experiment.horizon, eta, n_mb, cfg.experiment.seed);
    s.trial = trial;
    if alg == Algorithm::Composite {
        s.sensitivity_mode = cfg.optimizer.sensitivity;
    }
    s.dfo_delta = cfg.dfo.delta;
    s.ss_tol = cfg.diagnostics.ss_tol;
    s.ss_max_iter = cfg.diagnostics.ss_max_iter;
    s.p_metric = p_metric;
    s.w1 = w1;
    s
}

fn population_w1(cfg: &ExperimentConfig) -> W1Diagnostic<f64> {
    match cfg.diagnostics.w1_atoms {
        0 => W1Diagnostic::None,
        atoms => W1Diagnostic::Population {
            atoms,
            stride: cfg.diagnostics.w1_stride,
        },
    }
}

fn trials_of(cfg: &ExperimentConfig, alg: Algorithm) -> usize {
    match alg {
        Algorithm::Dfo => cfg.dfo.trials,
        _ => cfg.experiment.trials,
    }
}

fn summarize(cfg: &ExperimentConfig, runs: &[TrialOutcome]) -> Result<Vec<AlgorithmSummary>> {
    cfg.experiment
        .algorithms
        .iter()
        .map(|&alg| {
            let records: Vec<RunRecord> = runs
                .iter()
                .filter(|r| r.record.algorithm == alg)
                .map(|r| r.record.clone())
                .collect();
            Ok(AlgorithmSummary {
                algorithm: alg,
                summary: convergence_measures(&records)?,
            })
        })
        .collect()
}

fn require(cfg: &ExperimentConfig, scenario: Scenario) -> Result<()> {
    if cfg.experiment.scenario == scenario {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "expected a {scenario} configuration, got {}",
            cfg.experiment.scenario
        )))
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

/// Opinion-steering case study: per trial a fresh hemisphere population and
/// its oracle, shared by every algorithm of that trial.
pub fn case_study_polarized(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    require(cfg, Scenario::Polarized)?;
    cfg.validate()?;
    let bins = cfg.diagnostics.histogram_bins;
    let max_trials = cfg.experiment.algorithms.iter().map(|&a| trials_of(cfg, a)).max().unwrap_or(0);
    let per_trial = (0..max_trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<_> {
            let inst = build_instance(cfg, trial)?;
            let oracle = solve_oracle(cfg, &inst, trial).map_err(|e| e.in_trial("oracle", trial as usize))?;
            let reference = Reference {
                u_star: oracle.u_star.clone(),
                value_star: oracle.value_star,
            };
            let initial = angle_histogram_of(inst.population.individuals().iter().map(|i| i.p0.as_slice()), &oracle.u_star, bins)?;
            let mut runs = Vec::new();
            for &alg in &cfg.experiment.algorithms {
                if trial as usize >= trials_of(cfg, alg) {
                    continue;
                }
                let s = settings_for(cfg, alg, trial, None, population_w1(cfg));
                let (out, secs) = timed(|| {
                    run_online(&inst.model, &inst.objective, &inst.constraint, &inst.population, &s, Some(&reference))
                })
                .map_err(|e| e.in_trial(alg.name(), trial as usize))?;
                let fin = angle_histogram(&out.final_population, &out.final_decision, bins)?;
                runs.push(TrialOutcome {
                    record: out.record,
                    horizon: cfg.experiment.horizon,
                    eta: s.eta,
                    final_decision: out.final_decision,
                    initial_histogram: Some(initial.clone()),
                    final_histogram: Some(fin),
                    wall_seconds: secs,
                });
            }
            let reference_vec = inst.population.reference().map(<[f64]>::to_vec).unwrap_or_default();
            Ok((TrialOracle { trial, solution: oracle }, runs, (trial, reference_vec)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut oracles = Vec::new();
    let mut runs = Vec::new();
    let mut references = Vec::new();
    for (o, r, refv) in per_trial {
        oracles.push(o);
        runs.extend(r);
        references.push(refv);
    }
    sort_runs(cfg, &mut runs);
    let model = build_model(cfg)?;
    Ok(ExperimentOutput {
        summaries: summarize(cfg, &runs)?,
        certificate: certificate(&model, cfg.population.dim),
        config: cfg.clone(),
        runs,
        oracles,
        sweep: None,
        references,
        target: None,
    })
}

fn sort_runs(cfg: &ExperimentConfig, runs: &mut [TrialOutcome]) {
    let rank = |a: Algorithm| cfg.experiment.algorithms.iter().position(|&x| x == a).unwrap_or(usize::MAX);
    runs.sort_by_key(|r| (rank(r.record.algorithm), r.horizon, r.record.trial));
}

/// Recommender case study: a single user, one oracle, W1 of the user's
/// choice distribution to its steady state at `u*` at every iteration.
pub fn case_study_recommender(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    require(cfg, Scenario::Recommender)?;
    cfg.validate()?;
    let inst = build_instance(cfg, 0)?;
    let oracle = solve_oracle(cfg, &inst, 0).map_err(|e| e.in_trial("oracle", 0))?;
    let reference = Reference {
        u_star: oracle.u_star.clone(),
        value_star: oracle.value_star,
    };
    let user = &inst.population.individuals()[0];
    let target = inst
        .model
        .steady_state(&oracle.u_star, &user.d, cfg.diagnostics.ss_tol, cfg.diagnostics.ss_max_iter)?
        .p_ss;
    let w1 = W1Diagnostic::Categorical {
        target: target.clone(),
        metric: cfg.diagnostics.ground_metric,
    };
    let jobs: Vec<(Algorithm, u64)> = cfg
        .experiment
        .algorithms
        .iter()
        .flat_map(|&a| (0..trials_of(cfg, a) as u64).map(move |t| (a, t)))
        .collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(alg, trial)| {
            let s = settings_for(cfg, alg, trial, None, w1.clone());
            let (out, secs) = timed(|| {
                run_online(&inst.model, &inst.objective, &inst.constraint, &inst.population, &s, Some(&reference))
            })
            .map_err(|e| e.in_trial(alg.name(), trial as usize))?;
            Ok(TrialOutcome {
                record: out.record,
                horizon: cfg.experiment.horizon,
                eta: s.eta,
                final_decision: out.final_decision,
                initial_histogram: None,
                final_histogram: None,
                wall_seconds: secs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_runs(cfg, &mut runs);
    Ok(ExperimentOutput {
        summaries: summarize(cfg, &runs)?,
        certificate: certificate(&inst.model, cfg.population.dim),
        config: cfg.clone(),
        runs,
        oracles: vec![TrialOracle { trial: 0, solution: oracle }],
        sweep: None,
        references: Vec::new(),
        target: Some(target),
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Composite runs over several horizons with `eta = eta0 * T^(-eta_exponent)`,
/// recording the time-averaged squared norm of the exact reduced gradient.
pub fn rate_sweep(cfg: &ExperimentConfig, horizons: &[usize]) -> Result<ExperimentOutput> {
    require(cfg, Scenario::RateSweep)?;
    cfg.validate()?;
    if horizons.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "a rate fit needs at least 3 horizons, got {}",
            horizons.len()
        )));
    }
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("rate_sweep needs a [sweep] section".into()))?;
    let inst = build_instance(cfg, 0)?;
    let oracle = solve_oracle(cfg, &inst, 0).map_err(|e| e.in_trial("oracle", 0))?;
    let reference = Reference {
        u_star: oracle.u_star.clone(),
        value_star: oracle.value_star,
    };
    let cert = certificate(&inst.model, cfg.population.dim);
    let p_metric = cert.as_ref().ok().map(|c| c.p.cholesky()).transpose()?;
    let n_mb = if sweep.noise_free { cfg.population.size } else { cfg.optimizer.n_mb };
    let jobs: Vec<(usize, u64)> = horizons
        .iter()
        .flat_map(|&h| (0..cfg.experiment.trials as u64).map(move |t| (h, t)))
        .collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(horizon, trial)| {
            let mut s = settings_for(cfg, Algorithm::Composite, trial, p_metric.clone(), population_w1(cfg));
            s.horizon = horizon;
            s.eta = sweep.eta0 * (horizon as f64).powf(-sweep.eta_exponent);
            s.n_mb = n_mb;
            s.track_exact_gradient = true;
            let (out, secs) = timed(|| {
                run_online(&inst.model, &inst.objective, &inst.constraint, &inst.population, &s, Some(&reference))
            })
            .map_err(|e| e.in_trial("composite", trial as usize))?;
            Ok(TrialOutcome {
                record: out.record,
                horizon,
                eta: s.eta,
                final_decision: out.final_decision,
                initial_histogram: None,
                final_histogram: None,
                wall_seconds: secs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_runs(cfg, &mut runs);
    let mut points = Vec::new();
    let mut summaries = Vec::new();
    for &h in horizons {
        let records: Vec<RunRecord> = runs.iter().filter(|r| r.horizon == h).map(|r| r.record.clone()).collect();
        let per_trial: Vec<f64> = records
            .iter()
            .map(|r| {
                let g = &r.exact_grad_sq[..h.max(1).min(r.exact_grad_sq.len())];
                g.iter().sum::<f64>() / g.len() as f64
            })
            .collect();
        let mean = per_trial.iter().sum::<f64>() / per_trial.len() as f64;
        points.push(SweepPoint {
            horizon: h,
            eta: sweep.eta0 * (h as f64).powf(-sweep.eta_exponent),
            per_trial,
            mean,
        });
        summaries.push(AlgorithmSummary {
            algorithm: Algorithm::Composite,
            summary: convergence_measures(&records)?,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| (p.horizon as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean.ln()).collect();
    let slope = fit_slope(&x, &y);
    Ok(ExperimentOutput {
        config: cfg.clone(),
        runs,
        oracles: vec![TrialOracle { trial: 0, solution: oracle }],
        certificate: cert,
        summaries,
        sweep: Some(SweepSummary { points, slope }),
        references: Vec::new(),
        target: None,
    })
}

/// Runs the configured scenario.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.experiment.scenario {
        Scenario::Polarized => case_study_polarized(cfg),
        Scenario::Recommender => case_study_recommender(cfg),
        Scenario::RateSweep => {
            let horizons = cfg.sweep.as_ref().map(|s| s.horizons.clone()).unwrap_or_default();
            rate_sweep(cfg, &horizons)
        }
    }
}

const AGGREGATE_MEASURES: [&str; 5] = ["objective", "grad_sq", "opt_gap", "distance", "w1"];

fn envelopes(s: &ConvergenceSummary) -> [&crate::transport::Envelope; 5] {
    [&s.objective, &s.grad_sq, &s.opt_gap, &s.distance, &s.w1]
}

/// Aggregate CSV: one row per (algorithm, horizon, iteration) with the mean
/// and envelope of each convergence measure.
pub fn write_aggregate_csv<W: std::io::Write>(out: &ExperimentOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["algorithm".to_string(), "horizon".into(), "trials".into(), "iter".into()];
    for m in AGGREGATE_MEASURES {
        for stat in ["mean", "min", "max"] {
            header.push(format!("{m}_{stat}"));
        }
    }
    w.write_record(&header)?;
    for s in &out.summaries {
        let env = envelopes(&s.summary);
        let len = env[0].mean.len();
        let horizon = len - 1;
        for i in 0..len {
            let mut rec = vec![
                s.algorithm.name().to_string(),
                horizon.to_string(),
                s.summary.trials.to_string(),
                i.to_string(),
            ];
            for e in env {
                rec.extend([e.mean[i], e.min[i], e.max[i]].map(fmt_float));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_histograms_csv<W: std::io::Write>(out: &ExperimentOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["algorithm", "trial", "stage", "bin_lo_deg", "bin_hi_deg", "count"])?;
    for r in &out.runs {
        for (stage, h) in [("initial", &r.initial_histogram), ("final", &r.final_histogram)] {
            let Some(h) = h else { continue };
            let width = h.bin_width();
            for (b, c) in h.counts.iter().enumerate() {
                w.write_record([
                    r.record.algorithm.name().to_string(),
                    r.record.trial.to_string(),
                    stage.to_string(),
                    fmt_float(b as f64 * width),
                    fmt_float((b + 1) as f64 * width),
                    c.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn certificate_json(c: &std::result::Result<ContractionCertificate<f64>, String>) -> Value {
    match c {
        Ok(c) => json!({
            "lfp": c.lfp,
            "lhu": c.lhu,
            "rho1": c.rho1,
            "rho2": c.rho2,
            "lambda_max_p": c.lambda_max_p,
            "lambda_min_p": c.lambda_min_p,
            "p": (0..c.p.rows()).map(|i| c.p.row(i).to_vec()).collect::<Vec<_>>(),
        }),
        Err(reason) => json!({ "unavailable": reason }),
    }
}

pub fn oracle_json(o: &TrialOracle) -> Value {
    json!({
        "trial": o.trial,
        "u_star": o.solution.u_star,
        "value_star": o.solution.value_star,
        "residual": o.solution.residual,
        "restart": o.solution.restart,
        "converged_restarts": o.solution.converged_restarts,
    })
}

fn ground_metric_name(cfg: &ExperimentConfig) -> String {
    match cfg.experiment.scenario {
        Scenario::Recommender => format!("categorical_{}", cfg.diagnostics.ground_metric.name()),
        _ if cfg.diagnostics.w1_atoms == 0 => "none".into(),
        _ => "joint: |p - p'|_P + |d - d'| (P = I unless a certificate metric is available)".into(),
    }
}

/// Metadata sidecar: seeds, overrides, oracle solutions, certificate,
/// ground metric and per-run summaries.
pub fn metadata(out: &ExperimentOutput, loaded: Option<&LoadedConfig>) -> Result<Value> {
    let cfg = &out.config;
    let sweep = matches!(cfg.experiment.scenario, Scenario::RateSweep);
    let trial_seeds: Vec<Value> = (0..out.runs.iter().map(|r| r.record.trial + 1).max().unwrap_or(0))
        .map(|t| {
            json!({
                "trial": t,
                "population": population_seed(cfg, if cfg.experiment.scenario == Scenario::Polarized { t } else { 0 }),
                "minibatch": derive_seed(cfg.experiment.seed, t, Purpose::Minibatch),
                "dfo": derive_seed(cfg.experiment.seed, t, Purpose::Dfo),
                "oracle": derive_seed(cfg.experiment.seed, t, Purpose::Oracle),
            })
        })
        .collect();
    let runs: Vec<Value> = out
        .runs
        .iter()
        .map(|r| {
            let f = r.record.final_row();
            json!({
                "algorithm": r.record.algorithm.name(),
                "trial": r.record.trial,
                "horizon": r.horizon,
                "eta": r.eta,
                "file": format!("runs/{}", r.file_name(sweep)),
                "final_gap": f.opt_gap_rel,
                "final_distance": f.dist_to_ustar,
                "final_w1": f.w1_to_ss,
                "wall_seconds": r.wall_seconds,
            })
        })
        .collect();
    let config_json =
        serde_json::to_value(cfg).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    let mut meta = json!({
        "schema_version": CSV_SCHEMA_VERSION,
        "scenario": cfg.experiment.scenario.name(),
        "master_seed": cfg.experiment.seed,
        "config": config_json,
        "trial_seeds": trial_seeds,
        "oracles": out.oracles.iter().map(oracle_json).collect::<Vec<_>>(),
        "certificate": certificate_json(&out.certificate),
        "ground_metric": ground_metric_name(cfg),
        "reference_vectors": out.references.iter().map(|(t, v)| json!({"trial": t, "reference": v})).collect::<Vec<_>>(),
        "runs": runs,
        "summaries": out.summaries.iter().map(|s| json!({
            "algorithm": s.algorithm.name(),
            "trials": s.summary.trials,
            "final_gap_mean": s.final_gap(),
            "final_distance_mean": s.final_distance(),
            "final_w1_mean": s.final_w1(),
            "avg_grad_sq": s.summary.avg_grad_sq,
        })).collect::<Vec<_>>(),
    });
    if let Some(t) = &out.target {
        meta["steady_state_at_u_star"] = json!(t);
    }
    if let Some(s) = &out.sweep {
        meta["sweep"] = json!({
            "slope": s.slope,
            "points": s.points.iter().map(|p| json!({
                "horizon": p.horizon, "eta": p.eta, "mean_avg_grad_sq": p.mean, "per_trial": p.per_trial,
            })).collect::<Vec<_>>(),
        });
    }
    if let Some(l) = loaded {
        meta["overrides"] = json!(l
            .overrides
            .iter()
            .map(|(k, v)| json!({"key": k, "value": v}))
            .collect::<Vec<_>>());
        meta["seed_from_env"] = json!(l.seed_from_env);
    }
    Ok(meta)
}

/// Writes `runs/*.csv`, `aggregate.csv`, `histograms.csv` (when present) and
/// `metadata.json` under `dir`.
pub fn write_outputs(out: &ExperimentOutput, loaded: Option<&LoadedConfig>, dir: &Path) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let sweep = matches!(out.config.experiment.scenario, Scenario::RateSweep);
    for r in &out.runs {
        let f = fs::File::create(runs_dir.join(r.file_name(sweep)))?;
        r.record.write_csv(BufWriter::new(f))?;
    }
    write_aggregate_csv(out, BufWriter::new(fs::File::create(dir.join("aggregate.csv"))?))?;
    if out.runs.iter().any(|r| r.final_histogram.is_some()) {
        write_histograms_csv(out, BufWriter::new(fs::File::create(dir.join("histograms.csv"))?))?;
    }
    let meta = metadata(out, loaded)?;
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(dir.join("metadata.json"), text + "\n")?;
    Ok(())
}

/// Mean fraction of final angles in `[lo, hi]` degrees across runs of `alg`.
pub fn mean_final_fraction(out: &ExperimentOutput, alg: Algorithm, lo: f64, hi: f64) -> Option<f64> {
    let fr: Vec<f64> = out
        .runs_of(alg)
        .filter_map(|r| r.final_histogram.as_ref().map(|h| h.fraction(lo, hi)))
        .collect();
    (!fr.is_empty()).then(|| fr.iter().sum::<f64>() / fr.len() as f64)
}

/// Mean fraction of initial angles (to `u*`) in `[lo, hi]` degrees, one
/// value per trial.
pub fn mean_initial_fraction(out: &ExperimentOutput, lo: f64, hi: f64) -> Option<f64> {
    let mut seen = std::collections::BTreeMap::new();
    for r in &out.runs {
        if let Some(h) = &r.initial_histogram {
            seen.entry(r.record.trial).or_insert_with(|| h.fraction(lo, hi));
        }
    }
    (!seen.is_empty()).then(|| seen.values().sum::<f64>() / seen.len() as f64)
}
