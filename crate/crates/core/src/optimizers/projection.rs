use crate::error::{Error, Result};
use crate::linalg::vector;
use crate::scalar::Scalar;

const BISECTION_ITERS: usize = 200;
const BISECTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint<T> {
    NormBall { radius: T },
    CappedSimplex { b: T, qbar: T },
    Unconstrained,
}

impl<T: Scalar> Constraint<T> {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            Constraint::NormBall { radius } if !(radius > T::zero()) => Err(Error::InvalidParameter(
                format!("norm ball radius must be positive, got {radius}"),
            )),
            Constraint::CappedSimplex { b, qbar } => check_capped(b, qbar, dim),
            _ => Ok(()),
        }
    }

    pub fn project(&self, v: &[T]) -> Result<Vec<T>> {
        match *self {
            Constraint::NormBall { radius } => {
                self.validate(v.len())?;
                Ok(project_norm_ball(v, radius))
            }
            Constraint::CappedSimplex { b, qbar } => project_capped_simplex(v, b, qbar),
            Constraint::Unconstrained => Ok(v.to_vec()),
        }
    }

    pub fn contains(&self, v: &[T], tol: T) -> bool {
        match *self {
            Constraint::NormBall { radius } => vector::norm(v) <= radius + tol,
            Constraint::CappedSimplex { b, qbar } => {
                (vector::sum(v) - b).abs() <= tol
                    && v.iter().all(|&x| x >= -tol && x <= qbar + tol)
            }
            Constraint::Unconstrained => true,
        }
    }
}

fn check_capped<T: Scalar>(b: T, qbar: T, dim: usize) -> Result<()> {
    let cap = qbar * T::from_usize_lossy(dim);
    if b > T::zero() && qbar > T::zero() && b <= cap && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Infeasible(format!(
            "capped simplex needs 0 < b <= m qbar, got b={b}, qbar={qbar}, m={dim}"
        )))
    }
}

/// `v` if inside the ball, otherwise `radius v / |v|`.
pub fn project_norm_ball<T: Scalar>(v: &[T], radius: T) -> Vec<T> {
    let n = vector::norm(v);
    if n <= radius {
        v.to_vec()
    } else {
        vector::scale(v, radius / n)
    }
}

fn clipped_sum<T: Scalar>(v: &[T], theta: T, qbar: T) -> T {
    v.iter()
        .map(|&x| (x - theta).max(T::zero()).min(qbar))
        .sum()
}

/// Euclidean projection onto `{q : 1^T q = b, 0 <= q_i <= qbar}`:
/// `q_i = clip(v_i - theta, 0, qbar)` with `theta` found by bisection and
/// then recomputed exactly from the free coordinates.
pub fn project_capped_simplex<T: Scalar>(v: &[T], b: T, qbar: T) -> Result<Vec<T>> {
    check_capped(b, qbar, v.len())?;
    let feas_tol = T::c(BISECTION_TOL) * b.max(T::one());
    if (vector::sum(v) - b).abs() <= feas_tol && v.iter().all(|&x| x >= T::zero() && x <= qbar) {
        return Ok(v.to_vec());
    }
    let vmin = v.iter().fold(T::infinity(), |m, &x| m.min(x));
    let vmax = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let (mut lo, mut hi) = (vmin - qbar, vmax);
    let scale = vmax.abs().max(vmin.abs()).max(qbar).max(T::one());
    for _ in 0..BISECTION_ITERS {
        let mid = (lo + hi) / T::c(2.0);
        if clipped_sum(v, mid, qbar) > b {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::c(BISECTION_TOL) * scale {
            break;
        }
    }
    let mut theta = (lo + hi) / T::c(2.0);
    // On the free set the sum is linear in theta; solve it exactly.
    let (mut free_sum, mut free_n, mut capped) = (T::zero(), 0usize, 0usize);
    for &x in v {
        let y = x - theta;
        if y >= qbar {
            capped += 1;
        } else if y > T::zero() {
            free_sum += x;
            free_n += 1;
        }
    }
    if free_n > 0 {
        let exact = (free_sum + T::from_usize_lossy(capped) * qbar - b) / T::from_usize_lossy(free_n);
        if (clipped_sum(v, exact, qbar) - b).abs() <= (clipped_sum(v, theta, qbar) - b).abs() {
            theta = exact;
        }
    }
    Ok(v.iter()
        .map(|&x| (x - theta).max(T::zero()).min(qbar))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_ball_examples() {
        assert_eq!(project_norm_ball(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        let p: Vec<f64> = project_norm_ball(&[3.0, 4.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_norm_ball(&p, 1.0), p);
    }

    #[test]
    fn capped_simplex_example() {
        let q: Vec<f64> = project_capped_simplex(&[1.0, 2.0, 3.0], 3.0, 2.0).unwrap();
        for (a, b) in q.iter().zip([0.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn capped_simplex_member_and_full_budget() {
        let v = [0.5, 1.5, 1.0];
        assert_eq!(project_capped_simplex(&v, 3.0, 2.0).unwrap(), v.to_vec());
        assert_eq!(project_capped_simplex(&[-4.0, 9.0, 0.1], 6.0, 2.0).unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn infeasible_budget_is_rejected() {
        assert!(matches!(project_capped_simplex(&[0.0; 3], 7.0, 2.0), Err(Error::Infeasible(_))));
        assert!(matches!(project_capped_simplex(&[0.0; 3], 0.0, 2.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn projection_of_zero_is_uniform() {
        let q = Constraint::<f64>::CappedSimplex { b: 250.0, qbar: 5.0 }.project(&[0.0; 100]).unwrap();
        assert!(q.iter().all(|&x| (x - 2.5).abs() < 1e-12));
    }
}
