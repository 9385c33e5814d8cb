use crate::distributions::{draw_minibatch, Individual, Population, sample_sphere};
use crate::dynamics::{DynamicsModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{check_dim, Error, Result};
use crate::linalg::vector;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::sensitivity::polarized_sensitivity_apply;

use super::objective::{Objective, Sense};
use super::projection::Constraint;

/// Which sensitivity weights the anticipation term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMode {
    /// Sensitivity at each sample's steady state under the current decision.
    Exact,
    /// Sensitivity formula evaluated at the sample's current state.
    OnlineApprox,
    /// No anticipation term.
    None,
}

/// Mini-batch gradient of the objective in its own orientation (ascent
/// direction for maximized objectives).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate<T> {
    pub total: Vec<T>,
    pub term_adapt: Vec<T>,
    pub term_anticipate: Vec<T>,
}

impl<T: Scalar> GradientEstimate<T> {
    fn from_terms(term_adapt: Vec<T>, term_anticipate: Vec<T>) -> Self {
        Self {
            total: vector::add(&term_adapt, &term_anticipate),
            term_adapt,
            term_anticipate,
        }
    }

    /// Estimate with no anticipation part.
    pub fn adaptation_only(term_adapt: Vec<T>) -> Self {
        let n = term_adapt.len();
        Self {
            total: term_adapt.clone(),
            term_adapt,
            term_anticipate: vec![T::zero(); n],
        }
    }
}

/// `H v` where `H` is the steady-state sensitivity for this sample.
pub fn anticipation<T: Scalar>(
    model: &DynamicsModel<T>,
    u: &[T],
    ind: &Individual<T>,
    v: &[T],
    mode: SensitivityMode,
) -> Result<Vec<T>> {
    match model {
        DynamicsModel::Linear(l) => {
            // H = [(I - A)^{-1} B]^T, so H v = B^T (I - A)^{-T} v.
            let x = l.solve_resolvent_t(v)?;
            l.b().vec_mul(&x)
        }
        DynamicsModel::Softmax(s) => {
            let z = s.choice(u);
            let c = -s.epsilon * s.lambda2 / (T::one() - s.lambda1);
            let zv = vector::dot(&z, v);
            Ok(z.iter().zip(v).map(|(&zi, &vi)| c * zi * (vi - zv)).collect())
        }
        DynamicsModel::Polarized(pm) => {
            let p = match mode {
                SensitivityMode::Exact => {
                    model
                        .steady_state_from(&ind.p, u, &ind.d, T::c(DEFAULT_TOL), DEFAULT_MAX_ITER)?
                        .p_ss
                }
                _ => ind.p.clone(),
            };
            let (_, t) = pm.pre_normalized(&p, u, &ind.d);
            polarized_sensitivity_apply(u, &p, t, pm.lambda, pm.sigma, v)
        }
    }
}

/// Average of `grad_u Phi + H grad_p Phi` over the batch.
pub fn composite_gradient<T: Scalar>(
    objective: &Objective<T>,
    model: &DynamicsModel<T>,
    u: &[T],
    batch: &[&Individual<T>],
    mode: SensitivityMode,
) -> Result<GradientEstimate<T>> {
    if batch.is_empty() {
        return Err(Error::SampleSize {
            requested: 0,
            available: 0,
        });
    }
    let n = u.len();
    let mut adapt = vec![T::zero(); n];
    let mut antic = vec![T::zero(); n];
    for ind in batch {
        let gu = objective.grad_u(u, &ind.p);
        check_dim("objective decision gradient", n, gu.len())?;
        vector::axpy(T::one(), &gu, &mut adapt);
        if mode != SensitivityMode::None {
            let gp = objective.grad_p(u, &ind.p);
            let a = anticipation(model, u, ind, &gp, mode)?;
            vector::axpy(T::one(), &a, &mut antic);
        }
    }
    let inv = T::one() / T::from_usize_lossy(batch.len());
    adapt.iter_mut().for_each(|x| *x *= inv);
    antic.iter_mut().for_each(|x| *x *= inv);
    Ok(GradientEstimate::from_terms(adapt, antic))
}

/// Adaptation term only: the performative (vanilla) gradient.
pub fn vanilla_gradient<T: Scalar>(
    objective: &Objective<T>,
    u: &[T],
    batch: &[&Individual<T>],
) -> Result<GradientEstimate<T>> {
    if batch.is_empty() {
        return Err(Error::SampleSize {
            requested: 0,
            available: 0,
        });
    }
    let mut adapt = vec![T::zero(); u.len()];
    for ind in batch {
        vector::axpy(T::one(), &objective.grad_u(u, &ind.p), &mut adapt);
    }
    let inv = T::one() / T::from_usize_lossy(batch.len());
    adapt.iter_mut().for_each(|x| *x *= inv);
    Ok(GradientEstimate::adaptation_only(adapt))
}

/// `Proj(u - eta * sign * g)`, descending for minimization and ascending for maximization.
pub fn descend<T: Scalar>(
    u: &[T],
    g: &[T],
    sense: Sense,
    eta: T,
    constraint: &Constraint<T>,
) -> Result<Vec<T>> {
    check_dim("gradient", u.len(), g.len())?;
    let s = sense.descent_sign::<T>();
    let mut next = u.to_vec();
    vector::axpy(-eta * s, g, &mut next);
    constraint.project(&next)
}

fn check_eta<T: Scalar>(eta: T) -> Result<()> {
    if eta > T::zero() && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("step size must be positive, got {eta}")))
    }
}

/// One composite step on a freshly drawn mini-batch.
#[allow(clippy::too_many_arguments)]
pub fn step_composite<T: Scalar>(
    u: &[T],
    objective: &Objective<T>,
    constraint: &Constraint<T>,
    model: &DynamicsModel<T>,
    pop: &Population<T>,
    eta: T,
    n_mb: usize,
    rng: &mut Rng,
    mode: SensitivityMode,
) -> Result<(Vec<T>, GradientEstimate<T>)> {
    check_eta(eta)?;
    let idx = draw_minibatch(pop.len(), n_mb, rng)?;
    let g = composite_gradient(objective, model, u, &pop.select(&idx), mode)?;
    Ok((descend(u, &g.total, objective.sense(), eta, constraint)?, g))
}

/// One vanilla step on a given batch.
pub fn step_vanilla<T: Scalar>(
    u: &[T],
    objective: &Objective<T>,
    constraint: &Constraint<T>,
    eta: T,
    batch: &[&Individual<T>],
) -> Result<(Vec<T>, GradientEstimate<T>)> {
    check_eta(eta)?;
    let g = vanilla_gradient(objective, u, batch)?;
    Ok((descend(u, &g.total, objective.sense(), eta, constraint)?, g))
}

/// Two-point derivative-free method. The memory of the previous perturbed
/// evaluation lives here.
#[derive(Clone, Debug, PartialEq)]
pub struct DfoState<T> {
    delta: T,
    prev_value: Option<T>,
    direction: Option<Vec<T>>,
}

impl<T: Scalar> DfoState<T> {
    pub fn new(delta: T) -> Result<Self> {
        if !(delta > T::zero()) {
            return Err(Error::InvalidParameter(format!("DFO delta must be positive, got {delta}")));
        }
        Ok(Self {
            delta,
            prev_value: None,
            direction: None,
        })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Draws `v_k` uniform on the unit sphere and returns the query point `u + delta v_k`.
    pub fn query(&mut self, u: &[T], rng: &mut Rng) -> Vec<T> {
        let v: Vec<T> = sample_sphere(rng, u.len());
        let mut x = u.to_vec();
        vector::axpy(self.delta, &v, &mut x);
        self.direction = Some(v);
        x
    }

    /// Two-point estimate `(n / delta) (value - prev) v_k`; zero on the
    /// bootstrap call, which only stores the value.
    pub fn estimate(&mut self, value: T) -> Result<GradientEstimate<T>> {
        let v = self
            .direction
            .take()
            .ok_or_else(|| Error::InvalidParameter("DFO estimate requested before a query".into()))?;
        let n = T::from_usize_lossy(v.len());
        let g = match self.prev_value {
            Some(prev) => vector::scale(&v, n / self.delta * (value - prev)),
            None => vec![T::zero(); v.len()],
        };
        self.prev_value = Some(value);
        Ok(GradientEstimate::adaptation_only(g))
    }

    /// `Proj(u + eta (n / delta) (Phi_k - Phi_{k-1}) v_k)` for maximization.
    pub fn step(
        &mut self,
        u: &[T],
        value: T,
        sense: Sense,
        eta: T,
        constraint: &Constraint<T>,
    ) -> Result<(Vec<T>, GradientEstimate<T>)> {
        check_eta(eta)?;
        let g = self.estimate(value)?;
        Ok((descend(u, &g.total, sense, eta, constraint)?, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_hemisphere;
    use crate::linalg::Matrix;
    use crate::rng::{keyed_rng, Purpose};
    use crate::sensitivity::{sensitivity_polarized, sensitivity_softmax};

    #[test]
    fn affinity_terms_follow_the_per_sample_form() {
        let model = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let pop = sample_hemisphere::<f64>(4, 3, 5).unwrap();
        let q = [0.3, 0.1, -0.2, 0.4];
        let batch: Vec<_> = pop.individuals().iter().collect();
        let g = composite_gradient(&Objective::Affinity, &model, &q, &batch, SensitivityMode::OnlineApprox).unwrap();
        let mut adapt = vec![0.0; 4];
        let mut antic = vec![0.0; 4];
        for ind in &batch {
            vector::axpy(1.0 / 3.0, &ind.p, &mut adapt);
            let DynamicsModel::Polarized(pm) = &model else { unreachable!() };
            let (_, t) = pm.pre_normalized(&ind.p, &q, &ind.d);
            let h = sensitivity_polarized(&q, &ind.p, t, 0.4, 0.5).unwrap();
            vector::axpy(1.0 / 3.0, &h.apply(&q).unwrap(), &mut antic);
        }
        assert!(vector::max_abs_diff(&g.term_adapt, &adapt) < 1e-15);
        assert!(vector::max_abs_diff(&g.term_anticipate, &antic) < 1e-14);
        assert_eq!(g.total, vector::add(&g.term_adapt, &g.term_anticipate));
    }

    #[test]
    fn identical_batch_equals_single_sample() {
        let model = DynamicsModel::softmax(0.2, 0.5, 0.5).unwrap();
        let ind = Individual::anchored(vec![0.1, 0.6, 0.3]);
        let q: [f64; 3] = [1.0, 0.0, 2.0];
        let obj = Objective::GainEntropy { rho: 0.1 };
        let one = composite_gradient(&obj, &model, &q, &[&ind], SensitivityMode::OnlineApprox).unwrap();
        let many = composite_gradient(&obj, &model, &q, &[&ind, &ind, &ind], SensitivityMode::OnlineApprox).unwrap();
        assert!(vector::max_abs_diff(&one.total, &many.total) < 1e-15);
        // p + H (q + rho (1 + log p))
        let h = sensitivity_softmax(&q, 0.2, 0.5, 0.5).unwrap();
        let gp: Vec<f64> = q.iter().zip(&ind.p).map(|(&qi, &pi)| qi + 0.1 * (1.0 + pi.ln())).collect();
        let expect = vector::add(&ind.p, &h.apply(&gp).unwrap());
        assert!(vector::max_abs_diff(&one.total, &expect) < 1e-15);
    }

    #[test]
    fn linear_anticipation_uses_dc_gain() {
        let a = Matrix::from_rows(&[vec![0.2, 0.1], vec![0.0, 0.5]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let model = DynamicsModel::linear(a, b, Matrix::identity(2)).unwrap();
        let ind = Individual { p0: vec![0.0, 0.0], d: vec![0.0, 0.0], p: vec![0.0, 0.0] };
        let v: [f64; 2] = [1.0, -1.0];
        let got = anticipation(&model, &[0.0], &ind, &v, SensitivityMode::OnlineApprox).unwrap();
        let DynamicsModel::Linear(l) = &model else { unreachable!() };
        let expect = l.dc_gain().unwrap().transpose().mul_vec(&v).unwrap();
        assert!((got[0] - expect[0]).abs() < 1e-14);
    }

    #[test]
    fn vanilla_step_ascends_on_mean_state() {
        let inds = [Individual::anchored(vec![0.6, 0.8]), Individual::anchored(vec![0.0, 1.0])];
        let batch: Vec<_> = inds.iter().collect();
        let c = Constraint::NormBall { radius: 1.0 };
        let (q, g) = step_vanilla(&[0.0, 0.0], &Objective::Affinity, &c, 0.1, &batch).unwrap();
        assert!(vector::max_abs_diff(&q, &[0.03, 0.09]) < 1e-15);
        assert!(g.term_anticipate.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_gradient_leaves_feasible_point() {
        let c = Constraint::NormBall { radius: 1.0 };
        let u = [0.2, 0.3];
        assert_eq!(descend(&u, &[0.0, 0.0], Sense::Minimize, 0.5, &c).unwrap(), u.to_vec());
    }

    #[test]
    fn dfo_bootstrap_and_equal_values() {
        let c = Constraint::CappedSimplex { b: 3.0, qbar: 2.0 };
        let mut st = DfoState::new(2.0).unwrap();
        let mut rng = keyed_rng(0, 0, Purpose::Dfo, 0);
        let u = vec![1.0, 1.0, 1.0];
        st.query(&u, &mut rng);
        let (u1, g) = st.step(&u, 5.0, Sense::Maximize, 0.1, &c).unwrap();
        assert_eq!(u1, u);
        assert!(g.total.iter().all(|&x| x == 0.0));
        st.query(&u1, &mut rng);
        let (u2, _) = st.step(&u1, 5.0, Sense::Maximize, 0.1, &c).unwrap();
        assert_eq!(u2, u);
    }

    #[test]
    fn minibatch_step_is_reproducible() {
        let model = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let pop = sample_hemisphere::<f64>(5, 40, 2).unwrap();
        let c = Constraint::NormBall { radius: 1.0 };
        let run = || {
            let mut rng = keyed_rng(3, 0, Purpose::Minibatch, 0);
            step_composite(&[0.0; 5], &Objective::Affinity, &c, &model, &pop, 5e-3, 10, &mut rng, SensitivityMode::OnlineApprox)
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
