//! Populations of individuals, seeded samplers and mini-batch selection.

use std::io::Write;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::vector;
use crate::rng::{keyed_rng, Purpose, Rng};
use crate::scalar::Scalar;

/// One member of the population: initial state, exogenous input, current state.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual<T> {
    pub p0: Vec<T>,
    pub d: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Scalar> Individual<T> {
    /// Individual whose exogenous input is its own initial state.
    pub fn anchored(p0: Vec<T>) -> Self {
        Self {
            d: p0.clone(),
            p: p0.clone(),
            p0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population<T> {
    individuals: Vec<Individual<T>>,
    dim_state: usize,
    dim_exo: usize,
    seed: u64,
    reference: Option<Vec<T>>,
}

impl<T: Scalar> Population<T> {
    pub fn new(individuals: Vec<Individual<T>>, seed: u64) -> Result<Self> {
        let first = individuals
            .first()
            .ok_or_else(|| Error::InsufficientData("empty population".into()))?;
        let (m, r) = (first.p0.len(), first.d.len());
        for ind in &individuals {
            crate::error::check_dim("individual p0", m, ind.p0.len())?;
            crate::error::check_dim("individual p", m, ind.p.len())?;
            crate::error::check_dim("individual d", r, ind.d.len())?;
        }
        Ok(Self {
            individuals,
            dim_state: m,
            dim_exo: r,
            seed,
            reference: None,
        })
    }

    pub fn individuals(&self) -> &[Individual<T>] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_exo(&self) -> usize {
        self.dim_exo
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Reference direction of a hemisphere population.
    pub fn reference(&self) -> Option<&[T]> {
        self.reference.as_deref()
    }

    pub fn states(&self) -> impl Iterator<Item = &[T]> {
        self.individuals.iter().map(|i| i.p.as_slice())
    }

    /// Same population with every current state replaced.
    pub fn with_states(&self, states: Vec<Vec<T>>) -> Result<Self> {
        crate::error::check_dim("state count", self.len(), states.len())?;
        let mut out = self.clone();
        for (ind, p) in out.individuals.iter_mut().zip(states) {
            crate::error::check_dim("replacement state", self.dim_state, p.len())?;
            ind.p = p;
        }
        Ok(out)
    }

    /// First `n` individuals (all if `n >= len`).
    pub fn head(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.individuals.truncate(n.max(1));
        out
    }

    /// Population reset to its initial states.
    pub fn reset(&self) -> Self {
        let mut out = self.clone();
        for ind in &mut out.individuals {
            ind.p.clone_from(&ind.p0);
        }
        out
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&Individual<T>> {
        indices.iter().map(|&i| &self.individuals[i]).collect()
    }

    /// One row per individual: p0 components then d components.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.dim_state)
            .map(|i| format!("p0_{i}"))
            .chain((0..self.dim_exo).map(|i| format!("d_{i}")))
            .collect();
        w.write_record(&header)?;
        for ind in &self.individuals {
            let row: Vec<String> = ind
                .p0
                .iter()
                .chain(&ind.d)
                .map(|v| format!("{:e}", v.to_f64_lossy()))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gaussian<T: Scalar>(rng: &mut Rng, dim: usize) -> Vec<T> {
    (0..dim)
        .map(|_| T::c(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

fn normalized<T: Scalar>(v: &[T]) -> Option<Vec<T>> {
    let n = vector::norm(v);
    (n > T::zero() && n.is_finite()).then(|| vector::scale(v, T::one() / n))
}

/// Uniform on the unit sphere.
pub fn sample_sphere<T: Scalar>(rng: &mut Rng, dim: usize) -> Vec<T> {
    loop {
        if let Some(v) = normalized(&gaussian::<T>(rng, dim)) {
            return v;
        }
    }
}

/// Uniform samples on the open hemisphere `{x : |x| = 1, x . ref > 0}`.
/// The reference is the first draw from the seeded stream.
pub fn sample_hemisphere<T: Scalar>(dim: usize, count: usize, seed: u64) -> Result<Population<T>> {
    if dim < 2 || count == 0 {
        return Err(Error::InvalidParameter(format!(
            "hemisphere sampling needs dim >= 2 and count >= 1, got dim={dim}, count={count}"
        )));
    }
    let mut rng = keyed_rng(seed, 0, Purpose::Population, 0);
    let reference: Vec<T> = sample_sphere(&mut rng, dim);
    let mut individuals = Vec::with_capacity(count);
    while individuals.len() < count {
        let x: Vec<T> = sample_sphere(&mut rng, dim);
        let s = vector::dot(&x, &reference);
        if s == T::zero() {
            continue;
        }
        let x = if s < T::zero() {
            let mut y = x;
            vector::axpy(-T::c(2.0) * s, &reference, &mut y);
            match normalized(&y) {
                Some(y) => y,
                None => continue,
            }
        } else {
            x
        };
        if vector::dot(&x, &reference) > T::zero() {
            individuals.push(Individual::anchored(x));
        }
    }
    let mut pop = Population::new(individuals, seed)?;
    pop.reference = Some(reference);
    Ok(pop)
}

/// Uniform samples on the probability simplex (flat Dirichlet), `d = p0`.
pub fn sample_simplex<T: Scalar>(dim: usize, count: usize, seed: u64) -> Result<Population<T>> {
    if dim == 0 || count == 0 {
        return Err(Error::InvalidParameter(format!(
            "simplex sampling needs dim >= 1 and count >= 1, got dim={dim}, count={count}"
        )));
    }
    let mut rng = keyed_rng(seed, 0, Purpose::Population, 0);
    let individuals = (0..count)
        .map(|_| {
            let e: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = e.iter().sum();
            Individual::anchored(e.iter().map(|&x| T::c(x / s)).collect())
        })
        .collect();
    Population::new(individuals, seed)
}

/// Gaussian initial states and independent Gaussian exogenous inputs,
/// both with standard deviation `scale`.
pub fn sample_gaussian<T: Scalar>(
    dim_state: usize,
    dim_exo: usize,
    count: usize,
    scale: T,
    seed: u64,
) -> Result<Population<T>> {
    if dim_state == 0 || count == 0 {
        return Err(Error::InvalidParameter(
            "gaussian sampling needs dim_state >= 1 and count >= 1".into(),
        ));
    }
    let mut rng = keyed_rng(seed, 0, Purpose::Population, 0);
    let individuals = (0..count)
        .map(|_| {
            let p0 = vector::scale(&gaussian::<T>(&mut rng, dim_state), scale);
            let d = vector::scale(&gaussian::<T>(&mut rng, dim_exo), scale);
            Individual {
                p: p0.clone(),
                p0,
                d,
            }
        })
        .collect();
    Population::new(individuals, seed)
}

/// `n_mb` distinct indices drawn uniformly without replacement.
pub fn draw_minibatch(len: usize, n_mb: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n_mb == 0 || n_mb > len {
        return Err(Error::SampleSize {
            requested: n_mb,
            available: len,
        });
    }
    Ok(index::sample(rng, len, n_mb).into_vec())
}
