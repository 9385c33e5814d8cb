use std::path::Path;

use ddopt::config::{ExperimentConfig, Profile, Scenario};
use ddopt::experiments::{
    build_instance, case_study_polarized, rate_sweep, replicate, run_experiment, solve_oracle, write_outputs,
};
use ddopt::optimizers::{run_online, Algorithm, OnlineSettings, Reference};
use ddopt::transport::convergence_measures;
use ddopt::Error;

fn tiny_polarized(trials: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(Scenario::Polarized, Profile::Fast);
    cfg.experiment.trials = trials;
    cfg.experiment.horizon = 30;
    cfg.population.size = 60;
    cfg.optimizer.n_mb = 10;
    cfg.oracle.restarts = 2;
    cfg.diagnostics.w1_atoms = 10;
    cfg.diagnostics.w1_stride = 5;
    cfg
}

fn sweep_config(trials: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(Scenario::RateSweep, Profile::Fast);
    cfg.experiment.trials = trials;
    cfg
}

#[test]
fn single_trial_envelope_is_the_trace() {
    let out = case_study_polarized(&tiny_polarized(1)).unwrap();
    for s in &out.summaries {
        let run = out.runs_of(s.algorithm).next().unwrap();
        let gap: Vec<f64> = run.record.rows.iter().map(|r| r.opt_gap_rel).collect();
        assert_eq!(s.summary.trials, 1);
        assert_eq!(s.summary.opt_gap.mean, gap);
        assert_eq!(s.summary.opt_gap.min, gap);
        assert_eq!(s.summary.opt_gap.max, gap);
        assert!((0..gap.len()).all(|i| s.summary.distance.half_width(i) == 0.0));
    }
    let again = case_study_polarized(&tiny_polarized(1)).unwrap();
    for (a, b) in out.runs.iter().zip(&again.runs) {
        assert_eq!(a.record, b.record);
    }
}

#[test]
fn records_have_horizon_plus_one_finite_rows() {
    let out = case_study_polarized(&tiny_polarized(2)).unwrap();
    assert_eq!(out.runs.len(), 4);
    for r in &out.runs {
        assert_eq!(r.record.rows.len(), 31);
        assert!(r.record.rows.iter().all(|row| row.values().iter().all(|x| x.is_finite())));
    }
}

#[test]
fn trials_use_distinct_populations() {
    let cfg = tiny_polarized(2);
    let a = build_instance(&cfg, 0).unwrap();
    let b = build_instance(&cfg, 1).unwrap();
    assert_ne!(a.population, b.population);
    assert_eq!(a.population, build_instance(&cfg, 0).unwrap().population);
}

#[test]
fn replicate_is_independent_of_execution_order() {
    let cfg = tiny_polarized(4);
    let inst = build_instance(&cfg, 0).unwrap();
    let reference = Reference {
        u_star: vec![0.1; cfg.population.dim],
        value_star: 1.0,
    };
    let run = |trial: u64| {
        let mut s = OnlineSettings::new(Algorithm::Composite, 25, cfg.optimizer.eta, 10, cfg.experiment.seed);
        s.trial = trial;
        run_online(&inst.model, &inst.objective, &inst.constraint, &inst.population, &s, Some(&reference))
            .map(|o| o.record)
    };
    let (records, summary) = replicate(4, run).unwrap();
    let mut reversed: Vec<_> = (0..4u64).rev().map(|t| run(t).unwrap()).collect();
    reversed.reverse();
    // Unused diagnostic columns are NaN, so compare serialized forms.
    let csv = |r: &ddopt::optimizers::RunRecord| {
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(records.iter().map(csv).collect::<Vec<_>>(), reversed.iter().map(csv).collect::<Vec<_>>());
    assert_eq!(format!("{summary:?}"), format!("{:?}", convergence_measures(&reversed).unwrap()));
    assert!(matches!(replicate(0, run), Err(Error::InvalidParameter(_))));
}

/// Mean over iterations of the half-width of the decision-distance envelope
/// for 20 composite trials on one fixed population.
fn distance_spread(n_mb: usize) -> f64 {
    let mut cfg = ExperimentConfig::defaults(Scenario::Polarized, Profile::Fast);
    cfg.oracle.restarts = 2;
    let inst = build_instance(&cfg, 0).unwrap();
    let sol = solve_oracle(&cfg, &inst, 0).unwrap();
    let reference = Reference {
        u_star: sol.u_star,
        value_star: sol.value_star,
    };
    let horizon = 150;
    let (_, summary) = replicate(20, |trial| {
        let mut s = OnlineSettings::new(Algorithm::Composite, horizon, cfg.optimizer.eta, n_mb, cfg.experiment.seed);
        s.trial = trial;
        run_online(&inst.model, &inst.objective, &inst.constraint, &inst.population, &s, Some(&reference))
            .map(|o| o.record)
    })
    .unwrap();
    (1..=horizon).map(|i| summary.distance.half_width(i)).sum::<f64>() / horizon as f64
}

#[test]
fn envelope_narrows_with_larger_minibatch() {
    let small = distance_spread(50);
    let large = distance_spread(200);
    assert!(large < small, "half-width {large} at n_mb=200 vs {small} at n_mb=50");
}

#[test]
fn sweep_needs_three_horizons() {
    let cfg = sweep_config(2);
    assert!(matches!(rate_sweep(&cfg, &[100, 200]), Err(Error::InsufficientData(_))));
    assert!(matches!(rate_sweep(&cfg, &[]), Err(Error::InsufficientData(_))));
}

#[test]
fn sweep_is_deterministic() {
    let cfg = sweep_config(2);
    let a = rate_sweep(&cfg, &[50, 100, 200]).unwrap();
    let b = rate_sweep(&cfg, &[50, 100, 200]).unwrap();
    assert_eq!(a.sweep, b.sweep);
}

#[test]
fn noise_free_sweep_with_fixed_step_reaches_slope_minus_one() {
    let mut cfg = sweep_config(1);
    let sweep = cfg.sweep.as_mut().unwrap();
    sweep.noise_free = true;
    sweep.eta_exponent = 0.0;
    sweep.eta0 = 0.1;
    let out = rate_sweep(&cfg, &[400, 1600, 6400]).unwrap();
    let s = out.sweep.unwrap();
    // With a fixed step the average is S_T / T for a nondecreasing partial
    // sum S_T, so -1 is the limit once the iterates have converged.
    assert!(s.slope <= -1.0 + 1e-9, "slope {}", s.slope);
}

#[test]
fn doubling_horizon_shrinks_average_squared_gradient() {
    let cfg = sweep_config(10);
    let out = rate_sweep(&cfg, &[400, 800, 1600]).unwrap();
    let s = out.sweep.unwrap();
    for w in s.points.windows(2) {
        let ratio = w[0].mean / w[1].mean;
        assert!((1.2..=1.8).contains(&ratio), "ratio {ratio} between T={} and T={}", w[0].horizon, w[1].horizon);
    }
}

fn write_run(cfg: &ExperimentConfig, dir: &Path) -> Vec<u8> {
    let out = run_experiment(cfg).unwrap();
    write_outputs(&out, None, dir).unwrap();
    std::fs::read(dir.join("aggregate.csv")).unwrap()
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg = tiny_polarized(3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = write_run(&cfg, a.path());
    assert_eq!(first, write_run(&cfg, b.path()));
    let text = String::from_utf8(first).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("algorithm,horizon,trials,iter,objective_mean"));
    for name in ["vanilla_trial2.csv", "composite_trial0.csv"] {
        assert_eq!(
            std::fs::read(a.path().join("runs").join(name)).unwrap(),
            std::fs::read(b.path().join("runs").join(name)).unwrap()
        );
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["trial_seeds"].as_array().unwrap().len(), 3);
    assert!(meta["ground_metric"].as_str().unwrap().starts_with("joint"));
    assert!(meta["certificate"]["unavailable"].is_string());
    assert_eq!(meta["oracles"].as_array().unwrap().len(), 3);
}

#[test]
fn histograms_are_recorded_for_polarized_runs() {
    let out = case_study_polarized(&tiny_polarized(1)).unwrap();
    for r in &out.runs {
        let init = r.initial_histogram.as_ref().unwrap();
        let fin = r.final_histogram.as_ref().unwrap();
        assert_eq!(init.total(), 60);
        assert_eq!(fin.total(), 60);
    }
}
