//! Invariant suites run by `ddopt check`: each compares an implementation
//! against an independent oracle on seeded random instances.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::distributions::{sample_gaussian, sample_sphere, Population};
use crate::dynamics::{lyapunov_residual, DynamicsModel};
use crate::error::{Error, Result};
use crate::linalg::{vector, Matrix};
use crate::optimizers::{
    project_capped_simplex, project_norm_ball, run_online, Algorithm, Constraint, Objective, OnlineSettings,
};
use crate::rng::{keyed_rng, Purpose, Rng};
use crate::sensitivity::{sensitivity_fd_oracle, sensitivity_implicit, sensitivity_polarized, sensitivity_softmax};
use crate::transport::{w1_categorical_1d, w1_discrete_exact, DiscreteMeasure, GroundMetric};

pub const SUITES: [&str; 6] = ["sensitivity", "projection", "transport", "vk", "lyapunov", "steady_state"];

/// Outcome of one suite. `worst` is the largest observed value of the
/// suite's error measure, to be compared with `tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(suite: &'static str, tolerance: f64) -> Self {
        Self {
            suite,
            cases: 0,
            worst: 0.0,
            tolerance,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Records one measured error against `tol`; `describe` names the
    /// property and inputs and is only evaluated on failure.
    fn record(&mut self, err: f64, tol: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
        if !(err <= tol) {
            if self.failures.len() < 10 {
                self.failures.push(format!("{} (error {err:e} > {tol:e})", describe()));
            } else if self.failures.len() == 10 {
                self.failures.push("further failures omitted".into());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    /// Multiplies the default case counts.
    pub scale: f64,
    /// Suite whose measured errors are perturbed, to exercise failure reporting.
    pub inject: Option<String>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: 1.0,
            inject: None,
        }
    }
}

impl CheckOptions {
    fn count(&self, base: usize) -> usize {
        ((base as f64 * self.scale).round() as usize).max(1)
    }

    fn bump(&self, suite: &str) -> f64 {
        if self.inject.as_deref() == Some(suite) {
            1.0
        } else {
            0.0
        }
    }
}

/// Runs one suite or, with `filter = None`, all of them.
pub fn run_checks(filter: Option<&str>, opts: &CheckOptions) -> Result<Vec<SuiteReport>> {
    let names: Vec<&str> = match filter {
        None => SUITES.to_vec(),
        Some(s) if SUITES.contains(&s) => vec![s],
        Some(s) => {
            return Err(Error::Config(format!(
                "unknown suite '{s}' (expected one of {})",
                SUITES.join(", ")
            )))
        }
    };
    if let Some(s) = &opts.inject {
        if !SUITES.contains(&s.as_str()) {
            return Err(Error::Config(format!("cannot inject a failure into unknown suite '{s}'")));
        }
    }
    names
        .into_iter()
        .map(|name| {
            let bump = opts.bump(name);
            let seed = opts.seed;
            match name {
                "sensitivity" => check_sensitivity(opts.count(30), seed, bump),
                "projection" => check_projection(opts.count(300), seed, bump),
                "transport" => check_transport(opts.count(60), opts.count(30), seed, bump),
                "vk" => check_vk_recursion(opts.count(300), seed, bump),
                "lyapunov" => check_lyapunov(opts.count(10), opts.count(2000), seed, bump),
                "steady_state" => check_linear_steady_state(opts.count(20), seed, bump),
                _ => unreachable!(),
            }
        })
        .collect()
}

fn rng_for(seed: u64, suite: u64, case: u64) -> Rng {
    keyed_rng(seed, suite, Purpose::Check, case)
}

fn gaussian_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random linear model whose `A` has spectral norm `norm`, so its spectral
/// radius is at most `norm`.
pub fn random_linear(rng: &mut Rng, m: usize, n: usize, norm: f64) -> Result<DynamicsModel<f64>> {
    let g = gaussian_matrix(rng, m, m);
    let a = g.scale(norm / g.spectral_norm());
    let b = gaussian_matrix(rng, m, n);
    let e = gaussian_matrix(rng, m, m);
    DynamicsModel::linear(a, b, e)
}

fn random_simplex(rng: &mut Rng, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", items.join(", "))
}

/// Sensitivity of each model variant against central finite differences of
/// the steady state, `cases_per_model` random `(u, d)` each.
pub fn check_sensitivity(cases_per_model: usize, seed: u64, bump: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("sensitivity", 1e-4);
    let (tol_ls, tol_pol) = (1e-6, 1e-4);
    for case in 0..cases_per_model as u64 {
        // Linear: implicit formula at the closed-form steady state.
        let mut rng = rng_for(seed, 1, case);
        let m = rng.random_range(2..=6);
        let n = rng.random_range(1..=m);
        let norm = rng.random_range(0.1..0.9);
        let model = random_linear(&mut rng, m, n, norm)?;
        let (u, d) = (gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, m));
        let ss = model.steady_state(&u, &d, 1e-14, 10)?.p_ss;
        let h = sensitivity_implicit(&model, &u, &d, &ss)?;
        let fd = sensitivity_fd_oracle(&model, &u, &d, 1e-5, 1e-14, 10)?;
        let err = h.relative_error(&fd) + bump;
        rep.record(err, tol_ls, || format!("linear implicit vs FD, m={m} n={n} u={} d={}", fmt_vec(&u), fmt_vec(&d)));

        // Softmax: closed form.
        let mut rng = rng_for(seed, 2, case);
        let m = rng.random_range(3..=10);
        let (l1, l2, eps) = (rng.random_range(0.0..0.5), rng.random_range(0.1..0.5), rng.random_range(0.1..2.0));
        let model = DynamicsModel::softmax(l1, l2, eps)?;
        let q: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
        let d = random_simplex(&mut rng, m);
        let h = sensitivity_softmax(&q, l1, l2, eps)?;
        let fd = sensitivity_fd_oracle(&model, &q, &d, 1e-5, 1e-14, 10)?;
        let err = h.relative_error(&fd) + bump;
        rep.record(err, tol_ls, || {
            format!("softmax analytic vs FD, lambda1={l1} lambda2={l2} eps={eps} q={}", fmt_vec(&q))
        });

        // Polarized: closed form at the iterated steady state.
        let mut rng = rng_for(seed, 3, case);
        let m = rng.random_range(3..=8);
        let (lambda, sigma) = (0.4, 0.5);
        let model = DynamicsModel::polarized(lambda, sigma)?;
        let d: Vec<f64> = sample_sphere(&mut rng, m);
        let q = vector::scale(&sample_sphere::<f64>(&mut rng, m), rng.random::<f64>());
        let ss = model.steady_state(&q, &d, 1e-14, 100_000)?.p_ss;
        let DynamicsModel::Polarized(pm) = &model else { unreachable!() };
        let (_, t) = pm.pre_normalized(&ss, &q, &d);
        let h = sensitivity_polarized(&q, &ss, t, lambda, sigma)?;
        let fd = sensitivity_fd_oracle(&model, &q, &d, 1e-5, 1e-14, 100_000)?;
        let err = h.relative_error(&fd) + bump;
        rep.record(err, tol_pol, || format!("polarized analytic vs FD, q={} d={}", fmt_vec(&q), fmt_vec(&d)));
    }
    Ok(rep)
}

/// Largest violation of the clip-form optimality conditions of a capped
/// simplex projection `q` of `v`: a single `theta` with
/// `q_i = clip(v_i - theta, 0, qbar)`.
pub fn capped_simplex_kkt_violation(v: &[f64], q: &[f64], qbar: f64) -> f64 {
    let free: Vec<f64> = v.iter().zip(q).filter(|(_, &x)| x > 0.0 && x < qbar).map(|(&a, &x)| a - x).collect();
    // Admissible interval for theta from the clipped coordinates.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&a, &x) in v.iter().zip(q) {
        if x <= 0.0 {
            lo = lo.max(a);
        } else if x >= qbar {
            hi = hi.min(a - qbar);
        }
    }
    let mut viol: f64 = 0.0;
    if free.is_empty() {
        viol = viol.max(lo - hi);
    } else {
        let tmin = free.iter().copied().fold(f64::INFINITY, f64::min);
        let tmax = free.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        viol = viol.max(tmax - tmin).max(lo - tmin).max(tmax - hi);
    }
    viol.max(0.0)
}

/// Capped simplex: budget, exact box bounds, clip-form KKT and idempotence;
/// norm ball: feasibility, idempotence and the radial form.
pub fn check_projection(cases: usize, seed: u64, bump: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("projection", 1e-10);
    for case in 0..cases as u64 {
        let mut rng = rng_for(seed, 4, case);
        let m = rng.random_range(2..=60);
        let qbar = rng.random_range(0.2..6.0);
        let b = rng.random_range(0.01..=1.0) * m as f64 * qbar;
        let scale = rng.random_range(0.1..20.0);
        let v: Vec<f64> = (0..m).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let q = project_capped_simplex(&v, b, qbar)?;
        let inputs = || format!("m={m} b={b} qbar={qbar} v={}", fmt_vec(&v));
        let budget = (vector::sum(&q) - b).abs() + bump;
        rep.record(budget, 1e-10, || format!("capped simplex budget, {}", inputs()));
        let box_ok = q.iter().all(|&x| (0.0..=qbar).contains(&x));
        rep.record(if box_ok { 0.0 } else { f64::INFINITY }, 0.0, || format!("capped simplex box bounds, {}", inputs()));
        let kkt = capped_simplex_kkt_violation(&v, &q, qbar);
        rep.record(kkt, 1e-9 * (1.0 + scale), || format!("capped simplex clip-form KKT, {}", inputs()));
        let again = project_capped_simplex(&q, b, qbar)?;
        rep.record(vector::max_abs_diff(&again, &q), 1e-10, || format!("capped simplex idempotence, {}", inputs()));

        let r = rng.random_range(0.1..3.0);
        let pb = project_norm_ball(&v, r);
        let nv = vector::norm(&v);
        let expected = if nv <= r { v.clone() } else { vector::scale(&v, r / nv) };
        let err = vector::max_abs_diff(&pb, &expected)
            .max(vector::norm(&pb) - r)
            .max(vector::max_abs_diff(&project_norm_ball(&pb, r), &pb));
        rep.record(err, 1e-12 * (1.0 + scale), || format!("norm ball projection, r={r}, {}", inputs()));
    }
    Ok(rep)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum cost over all vertices of the transportation polytope, found by
/// enumerating every basis of `rows + cols - 1` cells. Only for tiny problems.
pub fn w1_brute_force(mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>, metric: &GroundMetric<f64>) -> Result<f64> {
    let (n, m) = (mu.len(), nu.len());
    if n * m > 25 {
        return Err(Error::InvalidParameter("brute-force transport is limited to 25 cells".into()));
    }
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let cost: Vec<f64> = cells.iter().map(|&(i, j)| metric.cost(&mu.support()[i], &nu.support()[j])).collect();
    // Row sums and the first m - 1 column sums; the last is implied.
    let k = n + m - 1;
    let rhs: Vec<f64> = mu.mass().iter().chain(&nu.mass()[..m - 1]).copied().collect();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let a = Matrix::from_fn(k, k, |r, c| {
            let (i, j) = cells[idx[c]];
            let hit = if r < n { i == r } else { j == r - n };
            if hit {
                1.0
            } else {
                0.0
            }
        });
        if let Ok(x) = a.solve(&rhs) {
            if x.iter().all(|&v| v >= -1e-12) {
                let c: f64 = idx.iter().zip(&x).map(|(&cell, &v)| cost[cell] * v).sum();
                best = best.min(c);
            }
        }
        if !next_combination(&mut idx, cells.len()) {
            break;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Infeasible("no feasible basis".into()))
    }
}

fn random_measure(rng: &mut Rng, atoms: usize, dim: usize, zero_prob: f64) -> Result<DiscreteMeasure<f64>> {
    let support = (0..atoms).map(|_| gaussian_vec(rng, dim)).collect();
    let mut mass: Vec<f64> = (0..atoms)
        .map(|_| if rng.random::<f64>() < zero_prob { 0.0 } else { rng.random::<f64>() + 0.01 })
        .collect();
    if mass.iter().all(|&x| x == 0.0) {
        mass[0] = 1.0;
    }
    let s: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|x| *x /= s);
    DiscreteMeasure::new(support, mass)
}

/// 1D CDF formula vs the transportation simplex on categorical pairs,
/// the simplex vs brute-force vertex enumeration on tiny instances, plan
/// marginals and the metric axioms.
pub fn check_transport(pairs: usize, brute: usize, seed: u64, bump: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("transport", 1e-9);
    for case in 0..pairs as u64 {
        let mut rng = rng_for(seed, 5, case);
        let m = rng.random_range(2..=6);
        let (p, q) = (random_simplex(&mut rng, m), random_simplex(&mut rng, m));
        let cdf = w1_categorical_1d(&p, &q)?;
        let plan = w1_discrete_exact(
            &DiscreteMeasure::categorical(&p)?,
            &DiscreteMeasure::categorical(&q)?,
            &GroundMetric::IndexAbs,
        )?;
        rep.record((cdf - plan.cost).abs() + bump, 1e-9, || {
            format!("1D CDF vs exact solver, p={} q={}", fmt_vec(&p), fmt_vec(&q))
        });
        let rows: Vec<f64> = (0..m).map(|i| vector::sum(plan.plan.row(i))).collect();
        let cols: Vec<f64> = (0..m).map(|j| (0..m).map(|i| plan.plan[(i, j)]).sum()).collect();
        rep.record(vector::max_abs_diff(&rows, &p).max(vector::max_abs_diff(&cols, &q)), 1e-9, || {
            format!("plan marginals, p={} q={}", fmt_vec(&p), fmt_vec(&q))
        });
    }
    for case in 0..brute as u64 {
        let mut rng = rng_for(seed, 6, case);
        let (a, b) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let dim = rng.random_range(1..=3);
        let zero_prob = if case % 3 == 0 { 0.3 } else { 0.0 };
        let mu = random_measure(&mut rng, a, dim, zero_prob)?;
        let nu = random_measure(&mut rng, b, dim, zero_prob)?;
        let exact = w1_discrete_exact(&mu, &nu, &GroundMetric::Euclidean)?.cost;
        let bf = w1_brute_force(&mu, &nu, &GroundMetric::Euclidean)?;
        rep.record((exact - bf).abs() + bump, 1e-9, || {
            format!("exact solver vs vertex enumeration, mu={:?} nu={:?}", mu, nu)
        });
        // Metric axioms with a third measure.
        let atoms = rng.random_range(1..=4);
        let xi = random_measure(&mut rng, atoms, dim, 0.0)?;
        let w = |x: &DiscreteMeasure<f64>, y: &DiscreteMeasure<f64>| {
            w1_discrete_exact(x, y, &GroundMetric::Euclidean).map(|p| p.cost)
        };
        let (mn, nm, mx, xn, mm) = (exact, w(&nu, &mu)?, w(&mu, &xi)?, w(&xi, &nu)?, w(&mu, &mu)?);
        let axioms = (-mn).max(mm.abs()).max((mn - nm).abs()).max(mn - mx - xn);
        rep.record(axioms, 1e-9, || format!("metric axioms, mu={:?} nu={:?} xi={:?}", mu, nu, xi));
    }
    Ok(rep)
}

/// Max over `k` of `V_{k+1} - Lfp V_k - Lfp Lhu sqrt(lambda_max(P)) |u_{k+1} - u_k|`
/// for a composite run on a random linear instance, in the certificate metric.
pub fn vk_recursion_slack(steps: usize, seed: u64) -> Result<(f64, String)> {
    let mut rng = rng_for(seed, 7, 0);
    let (m, n) = (4, 2);
    let model = random_linear(&mut rng, m, n, 0.8)?;
    let cert = model.contraction_certificate(m)?;
    let pop: Population<f64> = sample_gaussian(m, m, 40, 1.0, rng.random())?;
    let objective = Objective::QuadraticTest {
        target_u: gaussian_vec(&mut rng, n),
        target_p: gaussian_vec(&mut rng, m),
    };
    let mut s = OnlineSettings::new(Algorithm::Composite, steps, 0.05, 5, seed);
    s.p_metric = Some(cert.p.cholesky()?);
    let out = run_online(&model, &objective, &Constraint::Unconstrained, &pop, &s, None)?;
    let rows = &out.record.rows;
    let dec = &out.record.decisions;
    let c = cert.lfp * cert.lhu * cert.lambda_max_p.sqrt();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..rows.len() - 1 {
        let bound = cert.lfp * rows[k].v_k_estimate + c * vector::dist(&dec[k + 1], &dec[k]);
        worst = worst.max(rows[k + 1].v_k_estimate - bound);
    }
    Ok((worst, format!("linear m={m} n={n}, Lfp={} Lhu={}, {steps} steps", cert.lfp, cert.lhu)))
}

pub fn check_vk_recursion(steps: usize, seed: u64, bump: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("vk", 1e-8);
    let (slack, desc) = vk_recursion_slack(steps, seed)?;
    rep.record(slack.max(0.0) + bump, 1e-8, || format!("V_k perturbed contraction, {desc}"));
    Ok(rep)
}

/// Lyapunov residual on random Schur matrices and the measured contraction
/// of `f` in the certificate metric on random state pairs.
pub fn check_lyapunov(instances: usize, pairs: usize, seed: u64, bump: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("lyapunov", 1e-9);
    for case in 0..instances as u64 {
        let mut rng = rng_for(seed, 8, case);
        let m = rng.random_range(1..=8);
        let n = rng.random_range(1..=3);
        let norm = rng.random_range(0.05..0.95);
        let model = random_linear(&mut rng, m, n, norm)?;
        let cert = model.contraction_certificate(m)?;
        let DynamicsModel::Linear(l) = &model else { unreachable!() };
        let q = Matrix::identity(m);
        let res = lyapunov_residual(l.a(), &cert.p, &q)?.frobenius_norm() / q.frobenius_norm() + bump;
        rep.record(res, 1e-10, || format!("Lyapunov residual, A={:?}", l.a()));
        let ch = cert.p.cholesky()?;
        let per = pairs / instances.max(1);
        let mut worst: f64 = 0.0;
        for _ in 0..per {
            let (p1, p2) = (gaussian_vec(&mut rng, m), gaussian_vec(&mut rng, m));
            let (u, d) = (gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, m));
            let num = ch.weighted_norm(&vector::sub(&model.step(&p1, &u, &d)?, &model.step(&p2, &u, &d)?));
            let den = ch.weighted_norm(&vector::sub(&p1, &p2));
            if den > 0.0 {
                worst = worst.max(num / den - cert.lfp);
            }
        }
        rep.record(worst.max(0.0) + bump, 1e-9, || {
            format!("contraction ratio above Lfp={}, A={:?}", cert.lfp, l.a())
        });
    }
    Ok(rep)
}

/// Fixed-point iteration of the linear dynamics vs the closed-form steady state.
pub fn check_linear_steady_state(cases: usize, seed: u64, bump: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("steady_state", 1e-8);
    for case in 0..cases as u64 {
        let mut rng = rng_for(seed, 9, case);
        let m = rng.random_range(1..=10);
        let n = rng.random_range(1..=m);
        let norm = rng.random_range(0.05..0.9);
        let model = random_linear(&mut rng, m, n, norm)?;
        let (u, d) = (gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, m));
        let closed = model.steady_state(&u, &d, 1e-14, 10)?.p_ss;
        let mut p = vec![0.0; m];
        for _ in 0..100_000 {
            let next = model.step(&p, &u, &d)?;
            let done = vector::max_abs_diff(&next, &p) <= 1e-15 * (1.0 + vector::norm(&next));
            p = next;
            if done {
                break;
            }
        }
        let err = vector::max_abs_diff(&p, &closed) / (1.0 + closed.iter().fold(0.0f64, |a, &x| a.max(x.abs())));
        rep.record(err + bump, 1e-8, || format!("linear fixed point vs closed form, m={m} n={n} u={}", fmt_vec(&u)));
    }
    Ok(rep)
}
