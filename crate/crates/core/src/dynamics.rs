//! Distribution dynamics `p_k = f(p_{k-1}, u_k, d)`, steady states,
//! Jacobians and contraction certificates.
//!
//! Jacobians follow the gradient convention used throughout the crate:
//! `grad_p f` is the transpose of the Jacobian (m x m) and `grad_u f` is
//! n x m, so that `grad_u h = -grad_u f [grad_p f - I]^{-1}`.

use rayon::prelude::*;

use crate::distributions::Population;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{vector, Lu, Matrix};
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEGENERATE_NORM: f64 = 1e-12;
const UNIT_NORM_TOL: f64 = 1e-9;
const LYAPUNOV_MAX_DIM: usize = 50;

fn unit_tol<T: Scalar>() -> T {
    T::c(UNIT_NORM_TOL).max(T::epsilon() * T::c(64.0))
}

#[derive(Clone, Debug)]
pub struct LinearDynamics<T> {
    a: Matrix<T>,
    b: Matrix<T>,
    e: Matrix<T>,
    /// LU of `I - A` and of its transpose.
    resolvent: Lu<T>,
    resolvent_t: Lu<T>,
}

impl<T: Scalar> LinearDynamics<T> {
    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }

    pub fn e(&self) -> &Matrix<T> {
        &self.e
    }

    /// `(I - A)^{-1} x`
    pub fn solve_resolvent(&self, x: &[T]) -> Result<Vec<T>> {
        self.resolvent.solve(x)
    }

    /// `(I - A)^{-T} x`
    pub fn solve_resolvent_t(&self, x: &[T]) -> Result<Vec<T>> {
        self.resolvent_t.solve(x)
    }

    /// Zero-frequency gain `(I - A)^{-1} B`.
    pub fn dc_gain(&self) -> Result<Matrix<T>> {
        let inv = self.resolvent.inverse()?;
        inv.matmul(&self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizedDynamics<T> {
    pub lambda: T,
    pub sigma: T,
}

impl<T: Scalar> PolarizedDynamics<T> {
    /// `p~ = lambda p + (1 - lambda) p0 + sigma (p . q) q` and its norm.
    pub fn pre_normalized(&self, p: &[T], q: &[T], p0: &[T]) -> (Vec<T>, T) {
        let pq = vector::dot(p, q);
        let one_m = T::one() - self.lambda;
        let pt: Vec<T> = p
            .iter()
            .zip(p0)
            .zip(q)
            .map(|((&pi, &p0i), &qi)| self.lambda * pi + one_m * p0i + self.sigma * pq * qi)
            .collect();
        let n = vector::norm(&pt);
        (pt, n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftmaxDynamics<T> {
    pub lambda1: T,
    pub lambda2: T,
    pub epsilon: T,
}

impl<T: Scalar> SoftmaxDynamics<T> {
    /// `softmax(-epsilon q)`, max-shifted.
    pub fn choice(&self, q: &[T]) -> Vec<T> {
        softmax_neg(q, self.epsilon)
    }

    fn anchor_weight(&self) -> T {
        T::one() - self.lambda1 - self.lambda2
    }
}

/// `exp(-eps q) / sum exp(-eps q)` with the exponent shifted by its maximum.
pub fn softmax_neg<T: Scalar>(q: &[T], eps: T) -> Vec<T> {
    let shift = q.iter().fold(T::infinity(), |m, &x| m.min(x));
    let z: Vec<T> = q.iter().map(|&x| (-eps * (x - shift)).exp()).collect();
    let s = vector::sum(&z);
    z.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Debug)]
pub enum DynamicsModel<T> {
    Linear(LinearDynamics<T>),
    Polarized(PolarizedDynamics<T>),
    Softmax(SoftmaxDynamics<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState<T> {
    pub p_ss: Vec<T>,
    pub iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionCertificate<T> {
    pub p: Matrix<T>,
    pub lfp: T,
    pub lhu: T,
    pub rho1: T,
    pub rho2: T,
    pub lambda_max_p: T,
    pub lambda_min_p: T,
}

impl<T: Scalar> ContractionCertificate<T> {
    fn from_parts(p: Matrix<T>, lfp: T, lhu: T) -> Result<Self> {
        let eig = p.symmetric_eigenvalues()?;
        let lambda_min_p = eig[0];
        let lambda_max_p = *eig.last().expect("nonempty");
        if !(lambda_min_p > T::zero()) {
            return Err(Error::NotPositiveDefinite("certificate metric"));
        }
        let l2 = lfp * lfp;
        let rho1 = (T::one() + l2) / T::c(2.0);
        let rho2 = (T::one() + l2) / (T::one() - l2) * (lfp * lhu).powi(2) * lambda_max_p;
        Ok(Self {
            p,
            lfp,
            lhu,
            rho1,
            rho2,
            lambda_max_p,
            lambda_min_p,
        })
    }
}

impl<T: Scalar> DynamicsModel<T> {
    pub fn linear(a: Matrix<T>, b: Matrix<T>, e: Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension {
                context: "linear A (square)",
                expected: a.rows(),
                got: a.cols(),
            });
        }
        check_dim("linear B rows", a.rows(), b.rows())?;
        check_dim("linear E rows", a.rows(), e.rows())?;
        if !a.is_schur_stable() {
            return Err(Error::Unstable);
        }
        let ima = Matrix::identity(a.rows()).sub(&a)?;
        let resolvent = ima.lu()?;
        let resolvent_t = ima.transpose().lu()?;
        Ok(Self::Linear(LinearDynamics {
            a,
            b,
            e,
            resolvent,
            resolvent_t,
        }))
    }

    pub fn polarized(lambda: T, sigma: T) -> Result<Self> {
        if !(lambda >= T::zero() && lambda < T::one()) || !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "polarized dynamics needs lambda in [0,1) and sigma > 0, got lambda={lambda}, sigma={sigma}"
            )));
        }
        Ok(Self::Polarized(PolarizedDynamics { lambda, sigma }))
    }

    pub fn softmax(lambda1: T, lambda2: T, epsilon: T) -> Result<Self> {
        let unit = |x: T| x >= T::zero() && x < T::one();
        if !unit(lambda1)
            || !unit(lambda2)
            || lambda1 + lambda2 > T::one()
            || !(epsilon > T::zero())
            || !epsilon.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "softmax dynamics needs lambda1, lambda2 in [0,1), lambda1 + lambda2 <= 1, epsilon > 0; \
                 got {lambda1}, {lambda2}, {epsilon}"
            )));
        }
        Ok(Self::Softmax(SoftmaxDynamics {
            lambda1,
            lambda2,
            epsilon,
        }))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear(_) => "linear",
            Self::Polarized(_) => "polarized",
            Self::Softmax(_) => "softmax",
        }
    }

    /// Decision dimension n for a state of dimension m.
    pub fn decision_dim(&self, state_dim: usize) -> usize {
        match self {
            Self::Linear(l) => l.b.cols(),
            _ => state_dim,
        }
    }

    /// Exogenous dimension r for a state of dimension m.
    pub fn exo_dim(&self, state_dim: usize) -> usize {
        match self {
            Self::Linear(l) => l.e.cols(),
            _ => state_dim,
        }
    }

    fn check_inputs(&self, p: &[T], u: &[T], d: &[T]) -> Result<()> {
        if let Self::Linear(l) = self {
            check_dim("linear state", l.a.rows(), p.len())?;
        }
        check_dim("decision", self.decision_dim(p.len()), u.len())?;
        check_dim("exogenous input", self.exo_dim(p.len()), d.len())
    }

    pub fn step(&self, p: &[T], u: &[T], d: &[T]) -> Result<Vec<T>> {
        self.check_inputs(p, u, d)?;
        match self {
            Self::Linear(l) => {
                let mut out = l.a.mul_vec(p)?;
                vector::axpy(T::one(), &l.b.mul_vec(u)?, &mut out);
                vector::axpy(T::one(), &l.e.mul_vec(d)?, &mut out);
                Ok(out)
            }
            Self::Polarized(pm) => {
                let np = vector::norm(p);
                if (np - T::one()).abs() > unit_tol() {
                    return Err(Error::InvalidParameter(format!(
                        "polarized state must have unit norm, got {np}"
                    )));
                }
                let (pt, n) = pm.pre_normalized(p, u, d);
                if !(n >= T::c(DEGENERATE_NORM)) {
                    return Err(Error::DegenerateState {
                        norm: n.to_f64_lossy(),
                    });
                }
                Ok(vector::scale(&pt, T::one() / n))
            }
            Self::Softmax(s) => {
                let z = s.choice(u);
                let w = s.anchor_weight();
                Ok(p.iter()
                    .zip(&z)
                    .zip(d)
                    .map(|((&pi, &zi), &di)| s.lambda1 * pi + s.lambda2 * zi + w * di)
                    .collect())
            }
        }
    }

    /// Steady state with closed forms where available. Polarized dynamics
    /// iterate from `d` (the individual's initial state).
    pub fn steady_state(&self, u: &[T], d: &[T], tol: T, max_iter: usize) -> Result<SteadyState<T>> {
        self.steady_state_from(d, u, d, tol, max_iter)
    }

    /// As [`Self::steady_state`], starting a fixed-point iteration at `start`.
    pub fn steady_state_from(
        &self,
        start: &[T],
        u: &[T],
        d: &[T],
        tol: T,
        max_iter: usize,
    ) -> Result<SteadyState<T>> {
        if !(tol > T::zero()) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        match self {
            Self::Linear(l) => {
                check_dim("decision", l.b.cols(), u.len())?;
                check_dim("exogenous input", l.e.cols(), d.len())?;
                let mut rhs = l.b.mul_vec(u)?;
                vector::axpy(T::one(), &l.e.mul_vec(d)?, &mut rhs);
                Ok(SteadyState {
                    p_ss: l.resolvent.solve(&rhs)?,
                    iters: 0,
                })
            }
            Self::Softmax(s) => {
                check_dim("decision", d.len(), u.len())?;
                let z = s.choice(u);
                let den = T::one() - s.lambda1;
                let (a, b) = (s.lambda2 / den, s.anchor_weight() / den);
                Ok(SteadyState {
                    p_ss: z.iter().zip(d).map(|(&zi, &di)| a * zi + b * di).collect(),
                    iters: 0,
                })
            }
            Self::Polarized(pm) => {
                self.check_inputs(start, u, d)?;
                let ns = vector::norm(start);
                if (ns - T::one()).abs() > unit_tol() {
                    return Err(Error::InvalidParameter(format!(
                        "polarized state must have unit norm, got {ns}"
                    )));
                }
                // In-place iteration; this is the hot loop of every polarized run.
                let mut p = start.to_vec();
                let mut next = vec![T::zero(); p.len()];
                let one_m = T::one() - pm.lambda;
                let mut residual = T::infinity();
                for it in 1..=max_iter {
                    let pq = vector::dot(&p, u);
                    let mut sq = T::zero();
                    for i in 0..p.len() {
                        let v = pm.lambda * p[i] + one_m * d[i] + pm.sigma * pq * u[i];
                        next[i] = v;
                        sq += v * v;
                    }
                    let n = sq.sqrt();
                    if !(n >= T::c(DEGENERATE_NORM)) {
                        return Err(Error::DegenerateState {
                            norm: n.to_f64_lossy(),
                        });
                    }
                    let inv = T::one() / n;
                    let mut r2 = T::zero();
                    for i in 0..p.len() {
                        let v = next[i] * inv;
                        let diff = v - p[i];
                        r2 += diff * diff;
                        p[i] = v;
                    }
                    residual = r2.sqrt();
                    if residual <= tol {
                        return Ok(SteadyState { p_ss: p, iters: it });
                    }
                }
                Err(Error::NonConvergence {
                    iters: max_iter,
                    residual: residual.to_f64_lossy(),
                })
            }
        }
    }

    /// `(grad_p f, grad_u f)` at `(p, u, d)`: m x m and n x m.
    pub fn jacobians(&self, p: &[T], u: &[T], d: &[T]) -> Result<(Matrix<T>, Matrix<T>)> {
        self.check_inputs(p, u, d)?;
        match self {
            Self::Linear(l) => Ok((l.a.transpose(), l.b.transpose())),
            Self::Softmax(s) => {
                let m = p.len();
                let z = s.choice(u);
                let c = -s.epsilon * s.lambda2;
                let gu = Matrix::from_fn(m, m, |i, j| {
                    let dij = if i == j { z[i] } else { T::zero() };
                    c * (dij - z[i] * z[j])
                });
                Ok((Matrix::scaled_identity(m, s.lambda1), gu))
            }
            Self::Polarized(pm) => {
                let m = p.len();
                let (pt, n) = pm.pre_normalized(p, u, d);
                if !(n >= T::c(DEGENERATE_NORM)) {
                    return Err(Error::DegenerateState {
                        norm: n.to_f64_lossy(),
                    });
                }
                let ph = vector::scale(&pt, T::one() / n);
                let inv_n = T::one() / n;
                let proj = Matrix::from_fn(m, m, |i, j| {
                    let id = if i == j { T::one() } else { T::zero() };
                    (id - ph[i] * ph[j]) * inv_n
                });
                let pq = vector::dot(p, u);
                let dp = Matrix::from_fn(m, m, |i, j| {
                    let id = if i == j { pm.lambda } else { T::zero() };
                    id + pm.sigma * u[i] * u[j]
                });
                let du = Matrix::from_fn(m, m, |i, j| {
                    let id = if i == j { pq } else { T::zero() };
                    pm.sigma * (id + p[i] * u[j])
                });
                Ok((dp.matmul(&proj)?, du.matmul(&proj)?))
            }
        }
    }

    pub fn contraction_certificate(&self, state_dim: usize) -> Result<ContractionCertificate<T>> {
        match self {
            Self::Linear(l) => {
                let m = l.a.rows();
                let p = lyapunov_solve(&l.a, &Matrix::identity(m))?;
                let eig = p.symmetric_eigenvalues()?;
                let (lmin, lmax) = (eig[0], eig[m - 1]);
                let lfp = (T::one() - T::one() / lmax).max(T::zero()).sqrt();
                let lhu = l.b.spectral_norm() * (lmax / lmin).sqrt() / (T::one() - lfp);
                ContractionCertificate::from_parts(p, lfp, lhu)
            }
            Self::Softmax(s) => {
                let lfp = s.lambda1;
                let lhu = s.lambda2 * s.epsilon / (T::c(2.0) * (T::one() - s.lambda1));
                ContractionCertificate::from_parts(Matrix::identity(state_dim), lfp, lhu)
            }
            Self::Polarized(_) => Err(Error::UnsupportedCertificate("polarized")),
        }
    }
}

/// Applies one dynamics step to every individual under decision `u`.
pub fn evolve_population<T: Scalar>(
    model: &DynamicsModel<T>,
    pop: &Population<T>,
    u: &[T],
) -> Result<Population<T>> {
    let states = pop
        .individuals()
        .par_iter()
        .enumerate()
        .map(|(i, ind)| model.step(&ind.p, u, &ind.d).map_err(|e| e.at_individual(i)))
        .collect::<Result<Vec<_>>>()?;
    pop.with_states(states)
}

/// Steady states of every individual, optionally warm-started.
pub fn population_steady_states<T: Scalar>(
    model: &DynamicsModel<T>,
    pop: &Population<T>,
    u: &[T],
    tol: T,
    max_iter: usize,
    warm: Option<&[Vec<T>]>,
) -> Result<Vec<Vec<T>>> {
    if let Some(w) = warm {
        check_dim("warm start count", pop.len(), w.len())?;
    }
    pop.individuals()
        .par_iter()
        .enumerate()
        .map(|(i, ind)| {
            let start = warm.map_or(ind.d.as_slice(), |w| w[i].as_slice());
            model
                .steady_state_from(start, u, &ind.d, tol, max_iter)
                .map(|s| s.p_ss)
                .map_err(|e| e.at_individual(i))
        })
        .collect()
}

/// Solves `A^T P A - P + Q = 0` through the vectorized linear system,
/// followed by one step of iterative refinement.
pub fn lyapunov_solve<T: Scalar>(a: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::Dimension {
            context: "Lyapunov A (square)",
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let m = a.rows();
    check_dim("Lyapunov Q rows", m, q.rows())?;
    check_dim("Lyapunov Q cols", m, q.cols())?;
    if m > LYAPUNOV_MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "Lyapunov solver supports m <= {LYAPUNOV_MAX_DIM}, got {m}"
        )));
    }
    let tol = T::c(1e-10).max(T::epsilon() * T::c(16.0)) * q.max_abs();
    if !q.is_symmetric(tol) {
        return Err(Error::InvalidParameter("Lyapunov Q must be symmetric".into()));
    }
    q.cholesky()?;
    if !a.is_schur_stable() {
        return Err(Error::Unstable);
    }
    // Row (i,j) of the system: sum_{k,l} A_ki A_lj P_kl - P_ij = -Q_ij.
    let mm = m * m;
    let k = Matrix::from_fn(mm, mm, |row, col| {
        let (i, j) = (row / m, row % m);
        let (kk, l) = (col / m, col % m);
        let id = if row == col { T::one() } else { T::zero() };
        a[(kk, i)] * a[(l, j)] - id
    });
    let lu = k.lu()?;
    let rhs: Vec<T> = q.as_slice().iter().map(|&x| -x).collect();
    let mut p = Matrix::new(m, m, lu.solve(&rhs)?)?.symmetrize();
    let r = lyapunov_residual(a, &p, q)?;
    let corr = lu.solve(&r.as_slice().iter().map(|&x| -x).collect::<Vec<_>>())?;
    p = p.add(&Matrix::new(m, m, corr)?)?.symmetrize();
    p.cholesky()?;
    Ok(p)
}

/// `A^T P A - P + Q`.
pub fn lyapunov_residual<T: Scalar>(a: &Matrix<T>, p: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    a.transpose().matmul(p)?.matmul(a)?.sub(p)?.add(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_hemisphere, Individual};
    use approx::assert_relative_eq;

    fn diag(v: f64, n: usize) -> Matrix<f64> {
        Matrix::scaled_identity(n, v)
    }

    #[test]
    fn linear_step_substitution() {
        let m = DynamicsModel::linear(diag(0.5, 2), diag(1.0, 2), Matrix::zeros(2, 2)).unwrap();
        assert_eq!(m.step(&[0.0, 0.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn linear_steady_state_closed_form() {
        let m = DynamicsModel::linear(diag(0.5, 2), diag(1.0, 2), diag(1.0, 2)).unwrap();
        let ss = m.steady_state(&[1.0, 0.0], &[0.0, 1.0], 1e-10, 100).unwrap();
        assert_relative_eq!(ss.p_ss[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(ss.p_ss[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn unstable_linear_is_rejected() {
        let r = DynamicsModel::linear(diag(1.0, 2), diag(1.0, 2), diag(1.0, 2));
        assert!(matches!(r, Err(Error::Unstable)));
    }

    #[test]
    fn softmax_step_substitution() {
        let m = DynamicsModel::softmax(0.2, 0.5, 0.5).unwrap();
        let p = m.step(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn softmax_steady_state_matches_iteration() {
        let m = DynamicsModel::softmax(0.2, 0.5, 0.5).unwrap();
        let ss = m.steady_state(&[0.0, 0.0], &[1.0, 0.0], 1e-10, 100).unwrap();
        assert_relative_eq!(ss.p_ss[0], 0.6875, epsilon = 1e-15);
        assert_relative_eq!(ss.p_ss[1], 0.3125, epsilon = 1e-15);
        let mut p = vec![1.0, 0.0];
        for _ in 0..200 {
            p = m.step(&p, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        }
        assert!(vector::dist(&p, &ss.p_ss) < 1e-14);
    }

    #[test]
    fn softmax_handles_large_exponents() {
        let z = softmax_neg::<f64>(&[-1e4, 0.0, 1e4], 1.0);
        assert!(z.iter().all(|x| x.is_finite()));
        assert_relative_eq!(z[0], 1.0);
    }

    #[test]
    fn polarized_orthogonal_decision_keeps_initial_state() {
        let m = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let p0 = [1.0, 0.0, 0.0];
        let q = [0.0, 0.7, 0.0];
        assert_eq!(m.step(&p0, &q, &p0).unwrap(), p0.to_vec());
        let ss = m.steady_state(&q, &p0, 1e-12, 1000).unwrap();
        assert!(vector::dist(&ss.p_ss, &p0) < 1e-15);
    }

    #[test]
    fn polarized_rejects_non_unit_and_degenerate_states() {
        let m = DynamicsModel::polarized(0.5, 1.0).unwrap();
        assert!(m.step(&[2.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]).is_err());
        let r = m.step(&[1.0, 0.0], &[0.0, 0.0], &[-1.0, 0.0]);
        assert!(matches!(r, Err(Error::DegenerateState { .. })));
    }

    #[test]
    fn polarized_steady_state_is_fixed_point() {
        let m = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let pop = sample_hemisphere::<f64>(5, 20, 3).unwrap();
        let q = vec![0.3, -0.2, 0.5, 0.1, 0.4];
        for ind in pop.individuals() {
            let ss = m.steady_state(&q, &ind.d, 1e-10, 100_000).unwrap();
            let next = m.step(&ss.p_ss, &q, &ind.d).unwrap();
            assert!(vector::dist(&next, &ss.p_ss) <= 1e-9);
        }
    }

    #[test]
    fn polarized_angles_shrink_under_one_evolution() {
        let m = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let q = vec![0.0, 0.0, 1.0];
        let inds: Vec<_> = (0..30)
            .map(|i| {
                let t = 0.05 + 1.4 * i as f64 / 30.0;
                Individual::anchored(vec![t.sin() * 0.6, t.sin() * 0.8, t.cos()])
            })
            .collect();
        let pop = Population::new(inds, 0).unwrap();
        let next = evolve_population(&m, &pop, &q).unwrap();
        for (a, b) in pop.individuals().iter().zip(next.individuals()) {
            assert!(vector::dot(&b.p, &q) >= vector::dot(&a.p, &q) - 1e-15);
        }
    }

    #[test]
    fn evolution_errors_name_the_individual() {
        let m = DynamicsModel::polarized(0.5, 1.0).unwrap();
        let pop = Population::new(
            vec![
                Individual::anchored(vec![1.0, 0.0]),
                Individual { p0: vec![-1.0, 0.0], d: vec![-1.0, 0.0], p: vec![1.0, 0.0] },
            ],
            0,
        )
        .unwrap();
        match evolve_population(&m, &pop, &[0.0, 0.0]) {
            Err(Error::Individual { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_individual_evolution_equals_step() {
        let m = DynamicsModel::softmax(0.3, 0.4, 1.0).unwrap();
        let pop = Population::new(vec![Individual::anchored(vec![0.2, 0.3, 0.5])], 0).unwrap();
        let u = [0.5, 1.0, -0.2];
        let next = evolve_population(&m, &pop, &u).unwrap();
        assert_eq!(next.individuals()[0].p, m.step(&[0.2, 0.3, 0.5], &u, &[0.2, 0.3, 0.5]).unwrap());
    }

    #[test]
    fn lyapunov_small_cases() {
        let q = Matrix::identity(2);
        assert!(lyapunov_solve(&Matrix::zeros(2, 2), &q).unwrap().sub(&q).unwrap().max_abs() < 1e-15);
        let p = lyapunov_solve(&diag(0.5, 2), &q).unwrap();
        assert!(p.sub(&diag(4.0 / 3.0, 2)).unwrap().max_abs() < 1e-14);
        assert!(matches!(lyapunov_solve(&diag(1.5, 2), &q), Err(Error::Unstable)));
    }

    #[test]
    fn certificates() {
        let lin = DynamicsModel::linear(diag(0.5, 2), diag(1.0, 2), diag(1.0, 2)).unwrap();
        let c = lin.contraction_certificate(2).unwrap();
        assert_relative_eq!(c.lfp, 0.5, epsilon = 1e-12);
        assert_relative_eq!(c.rho1, 0.625, epsilon = 1e-12);
        let sm = DynamicsModel::softmax(0.2, 0.5, 0.5).unwrap();
        let c = sm.contraction_certificate(4).unwrap();
        assert_relative_eq!(c.lfp, 0.2);
        assert_relative_eq!(c.rho1, 0.52, epsilon = 1e-15);
        assert!(c.rho1 > 0.0 && c.rho1 < 1.0 && c.rho2 > 0.0);
        let pol = DynamicsModel::<f64>::polarized(0.4, 0.5).unwrap();
        assert!(matches!(pol.contraction_certificate(3), Err(Error::UnsupportedCertificate(_))));
    }

    #[test]
    fn f32_polarized_step_keeps_unit_norm() {
        let m = DynamicsModel::<f32>::polarized(0.4, 0.5).unwrap();
        let p = m.step(&[0.6, 0.8], &[0.3, 0.1], &[0.6, 0.8]).unwrap();
        assert!((vector::norm(&p) - 1.0).abs() < 1e-6);
    }
}
