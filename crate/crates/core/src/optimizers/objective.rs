use crate::error::{check_dim, Error, Result};
use crate::linalg::vector;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// Factor turning a gradient of the objective into a descent gradient.
    pub fn descent_sign<T: Scalar>(self) -> T {
        match self {
            Sense::Minimize => T::one(),
            Sense::Maximize => -T::one(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Objective<T> {
    /// `p^T u`, maximized.
    Affinity,
    /// `p^T u + rho sum p_i log p_i`, maximized.
    GainEntropy { rho: T },
    /// `0.5 |u - target_u|^2 + 0.5 |p - target_p|^2`, minimized.
    QuadraticTest { target_u: Vec<T>, target_p: Vec<T> },
}

impl<T: Scalar> Objective<T> {
    pub fn sense(&self) -> Sense {
        match self {
            Objective::QuadraticTest { .. } => Sense::Minimize,
            _ => Sense::Maximize,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Affinity => "affinity",
            Objective::GainEntropy { .. } => "gain_entropy",
            Objective::QuadraticTest { .. } => "quadratic_test",
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        match self {
            Objective::Affinity | Objective::GainEntropy { .. } => {
                if n != m {
                    return Err(Error::InvalidParameter(format!(
                        "{} objective needs decision and state of equal dimension, got {n} and {m}",
                        self.name()
                    )));
                }
                Ok(())
            }
            Objective::QuadraticTest { target_u, target_p } => {
                check_dim("quadratic decision target", n, target_u.len())?;
                check_dim("quadratic state target", m, target_p.len())
            }
        }
    }

    pub fn value(&self, u: &[T], p: &[T]) -> T {
        match self {
            Objective::Affinity => vector::dot(p, u),
            Objective::GainEntropy { rho } => {
                let ent = p
                    .iter()
                    .fold(T::zero(), |s, &x| if x > T::zero() { s + x * x.ln() } else { s });
                vector::dot(p, u) + *rho * ent
            }
            Objective::QuadraticTest { target_u, target_p } => {
                let half = T::c(0.5);
                half * vector::dist(u, target_u).powi(2) + half * vector::dist(p, target_p).powi(2)
            }
        }
    }

    pub fn grad_u(&self, u: &[T], p: &[T]) -> Vec<T> {
        match self {
            Objective::Affinity | Objective::GainEntropy { .. } => p.to_vec(),
            Objective::QuadraticTest { target_u, .. } => vector::sub(u, target_u),
        }
    }

    pub fn grad_p(&self, u: &[T], p: &[T]) -> Vec<T> {
        match self {
            Objective::Affinity => u.to_vec(),
            Objective::GainEntropy { rho } => u
                .iter()
                .zip(p)
                .map(|(&ui, &pi)| ui + *rho * (T::one() + pi.ln()))
                .collect(),
            Objective::QuadraticTest { target_p, .. } => vector::sub(p, target_p),
        }
    }
}
