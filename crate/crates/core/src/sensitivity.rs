//! Steady-state sensitivities `grad_u h` (n x m: rows are decision
//! coordinates, columns are state coordinates).

use crate::dynamics::{softmax_neg, DynamicsModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{vector, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensitivitySource {
    Implicit,
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMatrix<T> {
    pub h: Matrix<T>,
    pub source: SensitivitySource,
}

impl<T: Scalar> SensitivityMatrix<T> {
    /// `H v` for a state-space vector `v` (length m), giving a decision-space vector.
    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        self.h.mul_vec(v)
    }

    /// Largest entrywise relative deviation, scaled by the larger of the
    /// two matrices' maximum entries.
    pub fn relative_error(&self, other: &Self) -> T {
        let scale = self.h.max_abs().max(other.h.max_abs());
        let diff = self.h.sub(&other.h).map(|d| d.max_abs()).unwrap_or(T::infinity());
        if scale == T::zero() {
            diff
        } else {
            diff / scale
        }
    }
}

/// `-grad_u f [grad_p f - I]^{-1}` at a steady state.
pub fn sensitivity_implicit<T: Scalar>(
    model: &DynamicsModel<T>,
    u: &[T],
    d: &[T],
    p_ss: &[T],
) -> Result<SensitivityMatrix<T>> {
    let (gp, gu) = model.jacobians(p_ss, u, d)?;
    let m = gp.rows();
    // H (gp - I) = -gu  <=>  (gp - I)^T H^T = -gu^T
    let lu = gp.add_identity(-T::one()).transpose().lu()?;
    let mut h = Matrix::zeros(gu.rows(), m);
    for i in 0..gu.rows() {
        let rhs: Vec<T> = gu.row(i).iter().map(|&x| -x).collect();
        let row = lu.solve(&rhs)?;
        for j in 0..m {
            h[(i, j)] = row[j];
        }
    }
    Ok(SensitivityMatrix {
        h,
        source: SensitivitySource::Implicit,
    })
}

fn polarized_factors<T: Scalar>(
    q: &[T],
    p: &[T],
    p_tilde_norm: T,
    lambda: T,
    sigma: T,
) -> Result<Matrix<T>> {
    check_dim("polarized sensitivity q", p.len(), q.len())?;
    let np = vector::norm(p);
    if (np - T::one()).abs() > T::c(1e-9).max(T::epsilon() * T::c(64.0)) {
        return Err(Error::InvalidParameter(format!(
            "polarized sensitivity needs a unit state, got norm {np}"
        )));
    }
    if !(p_tilde_norm > T::c(crate::dynamics::DEGENERATE_NORM)) {
        return Err(Error::DegenerateState {
            norm: p_tilde_norm.to_f64_lossy(),
        });
    }
    let m = p.len();
    // (lambda I + sigma q q^T)(I - p p^T) - |p~| I
    let qp = vector::dot(q, p);
    Ok(Matrix::from_fn(m, m, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        // (lambda I + sigma q q^T)(I - p p^T) = lambda (I - p p^T) + sigma q (q - (q.p) p)^T
        lambda * (id - p[i] * p[j]) + sigma * q[i] * (q[j] - qp * p[j]) - p_tilde_norm * id
    }))
}

/// `-sigma (p.q I + p q^T)(I - p p^T) [(lambda I + sigma q q^T)(I - p p^T) - |p~| I]^{-1}`.
///
/// With `p` a steady state this is the exact sensitivity; with the current
/// state it is the online approximation used by the composite algorithm.
pub fn sensitivity_polarized<T: Scalar>(
    q: &[T],
    p: &[T],
    p_tilde_norm: T,
    lambda: T,
    sigma: T,
) -> Result<SensitivityMatrix<T>> {
    let bracket = polarized_factors(q, p, p_tilde_norm, lambda, sigma)?;
    let m = p.len();
    let qp = vector::dot(q, p);
    // Left factor L = -sigma (qp I + p q^T)(I - p p^T).
    let left = Matrix::from_fn(m, m, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        let proj_ij = id - p[i] * p[j];
        // (p q^T)(I - p p^T) = p (q - qp p)^T
        -sigma * (qp * proj_ij + p[i] * (q[j] - qp * p[j]))
    });
    // H B = L  <=>  B^T H^T = L^T
    let lu = bracket.transpose().lu()?;
    let mut h = Matrix::zeros(m, m);
    for i in 0..m {
        let row = lu.solve(left.row(i))?;
        for j in 0..m {
            h[(i, j)] = row[j];
        }
    }
    Ok(SensitivityMatrix {
        h,
        source: SensitivitySource::Analytic,
    })
}

/// `H v` for the polarized sensitivity with a single linear solve.
pub fn polarized_sensitivity_apply<T: Scalar>(
    q: &[T],
    p: &[T],
    p_tilde_norm: T,
    lambda: T,
    sigma: T,
    v: &[T],
) -> Result<Vec<T>> {
    check_dim("sensitivity argument", p.len(), v.len())?;
    let bracket = polarized_factors(q, p, p_tilde_norm, lambda, sigma)?;
    let x = bracket.solve(v)?;
    let px = vector::dot(p, &x);
    let y: Vec<T> = x.iter().zip(p).map(|(&xi, &pi)| xi - px * pi).collect();
    let qp = vector::dot(q, p);
    let qy = vector::dot(q, &y);
    Ok(y.iter().zip(p).map(|(&yi, &pi)| -sigma * (qp * yi + pi * qy)).collect())
}

/// `-(eps lambda2 / (1 - lambda1)) (diag(s) - s s^T)` with `s = softmax(-eps q)`.
pub fn sensitivity_softmax<T: Scalar>(
    q: &[T],
    lambda1: T,
    lambda2: T,
    epsilon: T,
) -> Result<SensitivityMatrix<T>> {
    if !(epsilon > T::zero()) || !(lambda1 < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "softmax sensitivity needs epsilon > 0 and lambda1 < 1, got {epsilon}, {lambda1}"
        )));
    }
    let s = softmax_neg(q, epsilon);
    let c = -epsilon * lambda2 / (T::one() - lambda1);
    let m = q.len();
    let h = Matrix::from_fn(m, m, |i, j| {
        let dij = if i == j { s[i] } else { T::zero() };
        c * (dij - s[i] * s[j])
    });
    Ok(SensitivityMatrix {
        h,
        source: SensitivitySource::Analytic,
    })
}

/// Central differences of the steady-state map, one decision coordinate per row.
pub fn sensitivity_fd_oracle<T: Scalar>(
    model: &DynamicsModel<T>,
    u: &[T],
    d: &[T],
    h_step: T,
    tol: T,
    max_iter: usize,
) -> Result<SensitivityMatrix<T>> {
    if !(h_step > T::zero()) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h_step}")));
    }
    let base = model.steady_state(u, d, tol, max_iter)?.p_ss;
    let m = base.len();
    let n = u.len();
    let mut h = Matrix::zeros(n, m);
    let mut up = u.to_vec();
    for j in 0..n {
        up[j] = u[j] + h_step;
        let plus = model.steady_state_from(&base, &up, d, tol, max_iter)?.p_ss;
        up[j] = u[j] - h_step;
        let minus = model.steady_state_from(&base, &up, d, tol, max_iter)?.p_ss;
        up[j] = u[j];
        let two_h = T::c(2.0) * h_step;
        for k in 0..m {
            h[(j, k)] = (plus[k] - minus[k]) / two_h;
        }
    }
    Ok(SensitivityMatrix {
        h,
        source: SensitivitySource::FiniteDifference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_hemisphere;
    use approx::assert_relative_eq;

    #[test]
    fn linear_implicit_is_dc_gain_transpose() {
        let a = Matrix::scaled_identity(2, 0.5);
        let model = DynamicsModel::linear(a, Matrix::identity(2), Matrix::identity(2)).unwrap();
        let h = sensitivity_implicit(&model, &[0.3, -1.0], &[2.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(h.h.sub(&Matrix::scaled_identity(2, 2.0)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn softmax_at_zero_decision() {
        let h = sensitivity_softmax(&[0.0, 0.0], 0.2, 0.5, 0.5).unwrap();
        let expect = [[-0.078125, 0.078125], [0.078125, -0.078125]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(h.h[(i, j)], expect[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_zero_and_match_implicit() {
        let q: [f64; 5] = [0.4, -1.3, 2.0, 0.0, 0.7];
        let h = sensitivity_softmax(&q, 0.2, 0.5, 0.5).unwrap();
        for i in 0..5 {
            assert!(vector::sum(h.h.row(i)).abs() < 1e-15);
        }
        let model = DynamicsModel::softmax(0.2, 0.5, 0.5).unwrap();
        let d = [0.2; 5];
        let pss = model.steady_state(&q, &d, 1e-12, 10).unwrap().p_ss;
        let hi = sensitivity_implicit(&model, &q, &d, &pss).unwrap();
        assert!(h.relative_error(&hi) < 1e-10);
    }

    #[test]
    fn polarized_zero_decision_gives_zero_matrix() {
        let p = [0.6, 0.8, 0.0];
        let h = sensitivity_polarized(&[0.0; 3], &p, 1.0, 0.4, 0.5).unwrap();
        assert_eq!(h.h.max_abs(), 0.0);
    }

    #[test]
    fn polarized_analytic_matches_implicit_and_apply() {
        let model = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let pop = sample_hemisphere::<f64>(6, 4, 21).unwrap();
        let q = [0.2, -0.3, 0.4, 0.1, 0.0, 0.5];
        for ind in pop.individuals() {
            let pss = model.steady_state(&q, &ind.d, 1e-13, 100_000).unwrap().p_ss;
            let DynamicsModel::Polarized(pm) = &model else { unreachable!() };
            let (_, t) = pm.pre_normalized(&pss, &q, &ind.d);
            let ha = sensitivity_polarized(&q, &pss, t, 0.4, 0.5).unwrap();
            let hi = sensitivity_implicit(&model, &q, &ind.d, &pss).unwrap();
            assert!(ha.relative_error(&hi) < 1e-9, "{}", ha.relative_error(&hi));
            let v = [1.0, 2.0, -1.0, 0.5, 0.3, -0.7];
            let direct = ha.apply(&v).unwrap();
            let fast = polarized_sensitivity_apply(&q, &pss, t, 0.4, 0.5, &v).unwrap();
            assert!(vector::max_abs_diff(&direct, &fast) < 1e-12);
            // B p = -|p~| p and (I - p p^T) p = 0, so H p = 0.
            let hp = ha.apply(&pss).unwrap();
            assert!(vector::norm(&hp) < 1e-12);
        }
    }

    #[test]
    fn fd_oracle_is_exact_for_linear() {
        let a = Matrix::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.4]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 2.0]]).unwrap();
        let model = DynamicsModel::linear(a, b, Matrix::identity(2)).unwrap();
        let u = [0.1, 0.2, 0.3];
        let d = [1.0, -1.0];
        let ex = sensitivity_implicit(&model, &u, &d, &[0.0, 0.0]).unwrap();
        for h_step in [1e-6, 1e-4, 1e-3] {
            let fd = sensitivity_fd_oracle(&model, &u, &d, h_step, 1e-12, 10).unwrap();
            assert!(fd.h.sub(&ex.h).unwrap().max_abs() < 1e-8);
            assert_eq!(fd.source, SensitivitySource::FiniteDifference);
        }
    }

    #[test]
    fn generic_over_f32() {
        let h = sensitivity_softmax::<f32>(&[0.0, 1.0], 0.2, 0.5, 0.5).unwrap();
        assert!((h.h[(0, 0)] + h.h[(0, 1)]).abs() < 1e-7);
    }
}
