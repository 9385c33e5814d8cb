//! Exact discrete Wasserstein-1 distances and related diagnostics.

use std::collections::VecDeque;

use crate::distributions::Population;
use crate::dynamics::DynamicsModel;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{vector, Cholesky, Matrix};
use crate::optimizers::RunRecord;
use crate::scalar::Scalar;

pub const MAX_ATOMS: usize = 500;
const MASS_TOL: f64 = 1e-10;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure<T> {
    support: Vec<Vec<T>>,
    mass: Vec<T>,
}

impl<T: Scalar> DiscreteMeasure<T> {
    pub fn new(support: Vec<Vec<T>>, mass: Vec<T>) -> Result<Self> {
        check_dim("measure support vs masses", support.len(), mass.len())?;
        if mass.is_empty() {
            return Err(Error::Mass("empty measure".into()));
        }
        if let Some(m) = mass.iter().find(|&&m| !(m >= T::zero()) || !m.is_finite()) {
            return Err(Error::Mass(format!("negative or non-finite mass {m}")));
        }
        let total = vector::sum(&mass);
        if (total - T::one()).abs() > T::c(MASS_TOL).max(T::epsilon() * T::c(64.0)) {
            return Err(Error::Mass(format!("masses sum to {total}, expected 1")));
        }
        Ok(Self { support, mass })
    }

    /// Uniform weights on the given points.
    pub fn uniform(support: Vec<Vec<T>>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::Mass("empty measure".into()));
        }
        let w = T::one() / T::from_usize_lossy(n);
        Self::new(support, vec![w; n])
    }

    /// Categorical distribution on indices `0..m`, the support being `[i]`.
    pub fn categorical(p: &[T]) -> Result<Self> {
        Self::new((0..p.len()).map(|i| vec![T::from_usize_lossy(i)]).collect(), p.to_vec())
    }

    pub fn support(&self) -> &[Vec<T>] {
        &self.support
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

/// Ground metric on support points.
#[derive(Clone, Debug)]
pub enum GroundMetric<T> {
    Euclidean,
    /// `|x - y|_P` through the Cholesky factor of P.
    WeightedP(Cholesky<T>),
    /// `|i - j|` on the first coordinate (category index).
    IndexAbs,
    /// Points are `(p, d)` concatenated: `|p - p'|_P + |d - d'|`, with P = I when absent.
    Joint {
        state_dim: usize,
        p: Option<Cholesky<T>>,
    },
}

impl<T: Scalar> GroundMetric<T> {
    pub fn weighted(p: &Matrix<T>) -> Result<Self> {
        Ok(Self::WeightedP(p.cholesky()?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Euclidean => "euclidean",
            Self::WeightedP(_) => "weighted_p",
            Self::IndexAbs => "index_abs",
            Self::Joint { p: Some(_), .. } => "joint_weighted_p",
            Self::Joint { p: None, .. } => "joint_euclidean",
        }
    }

    pub fn cost(&self, x: &[T], y: &[T]) -> T {
        match self {
            Self::Euclidean => vector::dist(x, y),
            Self::WeightedP(ch) => ch.weighted_norm(&vector::sub(x, y)),
            Self::IndexAbs => (x[0] - y[0]).abs(),
            Self::Joint { state_dim, p } => {
                let k = *state_dim;
                let dp = vector::sub(&x[..k], &y[..k]);
                let sp = match p {
                    Some(ch) => ch.weighted_norm(&dp),
                    None => vector::norm(&dp),
                };
                sp + vector::dist(&x[k..], &y[k..])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan<T> {
    pub plan: Matrix<T>,
    pub cost: T,
}

/// Sum of `|CDF_p - CDF_q|` over indices: W1 for the index metric `|i - j|`.
pub fn w1_categorical_1d<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    check_dim("categorical W1", p.len(), q.len())?;
    let (mut cp, mut cq, mut acc) = (T::zero(), T::zero(), T::zero());
    for i in 0..p.len().saturating_sub(1) {
        cp += p[i];
        cq += q[i];
        acc += (cp - cq).abs();
    }
    Ok(acc)
}

/// Ground metric between the categories of a choice distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalMetric {
    /// `|i - j|`.
    Index,
    /// Euclidean distance between one-hot vectors: `sqrt 2` between distinct categories.
    Euclidean,
}

impl CategoricalMetric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Index => "index",
            Self::Euclidean => "euclidean",
        }
    }
}

/// W1 between two distributions over the same categories.
pub fn w1_categorical<T: Scalar>(p: &[T], q: &[T], metric: CategoricalMetric) -> Result<T> {
    match metric {
        CategoricalMetric::Index => w1_categorical_1d(p, q),
        CategoricalMetric::Euclidean => {
            check_dim("categorical W1", p.len(), q.len())?;
            // Mass that stays put costs nothing; the rest moves at distance sqrt 2.
            let moved: T = p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum();
            Ok(moved / T::c(2.0) * T::c(2.0).sqrt())
        }
    }
}

/// Exact W1 by the transportation simplex method.
pub fn w1_discrete_exact<T: Scalar>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    metric: &GroundMetric<T>,
) -> Result<TransportPlan<T>> {
    if mu.len() > MAX_ATOMS || nu.len() > MAX_ATOMS {
        return Err(Error::InvalidParameter(format!(
            "exact W1 supports at most {MAX_ATOMS} atoms, got {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    // Drop zero-mass atoms; they carry no flow.
    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu.mass[i] > T::zero()).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu.mass[j] > T::zero()).collect();
    let a: Vec<T> = rows.iter().map(|&i| mu.mass[i]).collect();
    let b: Vec<T> = cols.iter().map(|&j| nu.mass[j]).collect();
    let cost = Matrix::from_fn(rows.len(), cols.len(), |i, j| {
        metric.cost(&mu.support[rows[i]], &nu.support[cols[j]])
    });
    let reduced = transportation_simplex(&a, &b, &cost)?;
    let mut plan = Matrix::zeros(mu.len(), nu.len());
    let mut total = T::zero();
    for (i, &ri) in rows.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            let f = reduced[(i, j)];
            plan[(ri, cj)] = f;
            total += f * cost[(i, j)];
        }
    }
    Ok(TransportPlan { plan, cost: total })
}

struct Basis<T> {
    cells: Vec<(usize, usize)>,
    flow: Vec<T>,
}

/// Minimizes `sum c_ij x_ij` subject to row sums `a`, column sums `b`, `x >= 0`.
fn transportation_simplex<T: Scalar>(a: &[T], b: &[T], c: &Matrix<T>) -> Result<Matrix<T>> {
    let (m, n) = (a.len(), b.len());
    let mut basis = northwest_corner(a, b);
    let scale = c.max_abs().max(T::one());
    let tol = T::epsilon() * T::c(1e3) * scale;
    let mut degenerate_run = 0usize;
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    for _ in 0..max_pivots {
        let (u, v) = potentials(m, n, &basis, c);
        let in_basis = basis_mask(m, n, &basis);
        let bland = degenerate_run >= DEGENERATE_RUN;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -tol;
        'search: for i in 0..m {
            for j in 0..n {
                if in_basis[i * n + j] {
                    continue;
                }
                let r = c[(i, j)] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'search;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let mut x = Matrix::zeros(m, n);
            for (&(i, j), &f) in basis.cells.iter().zip(&basis.flow) {
                x[(i, j)] = f;
            }
            return Ok(x);
        };
        let path = tree_path(m, n, &basis, ei, ej);
        // path holds basis cell indices from row ei to column ej; signs alternate
        // starting with '-' at the cell next to column ej.
        let k = path.len();
        let mut theta = T::infinity();
        let mut leave = usize::MAX;
        for (pos, &cell) in path.iter().enumerate() {
            if (k - 1 - pos) % 2 == 0 {
                let f = basis.flow[cell];
                let better = f < theta
                    || (f == theta && bland && basis.cells[cell] < basis.cells[leave]);
                if better {
                    theta = f;
                    leave = cell;
                }
            }
        }
        for (pos, &cell) in path.iter().enumerate() {
            if (k - 1 - pos) % 2 == 0 {
                basis.flow[cell] -= theta;
            } else {
                basis.flow[cell] += theta;
            }
        }
        basis.flow[leave] = theta;
        basis.cells[leave] = (ei, ej);
        degenerate_run = if theta > T::zero() { 0 } else { degenerate_run + 1 };
    }
    Err(Error::NonConvergence {
        iters: max_pivots,
        residual: f64::NAN,
    })
}

fn northwest_corner<T: Scalar>(a: &[T], b: &[T]) -> Basis<T> {
    let (m, n) = (a.len(), b.len());
    let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
    let mut cells = Vec::with_capacity(m + n - 1);
    let mut flow = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = if i == m - 1 && j == n - 1 {
            ra[i].max(T::zero())
        } else {
            ra[i].min(rb[j]).max(T::zero())
        };
        cells.push((i, j));
        flow.push(x);
        ra[i] -= x;
        rb[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    Basis { cells, flow }
}

fn basis_mask<T>(m: usize, n: usize, basis: &Basis<T>) -> Vec<bool> {
    let mut mask = vec![false; m * n];
    for &(i, j) in &basis.cells {
        mask[i * n + j] = true;
    }
    mask
}

/// Node ids: rows `0..m`, columns `m..m+n`. Adjacency lists hold basis cell indices.
fn adjacency<T>(m: usize, n: usize, basis: &Basis<T>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m + n];
    for (k, &(i, j)) in basis.cells.iter().enumerate() {
        adj[i].push(k);
        adj[m + j].push(k);
    }
    adj
}

fn potentials<T: Scalar>(m: usize, n: usize, basis: &Basis<T>, c: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let adj = adjacency(m, n, basis);
    let mut pot = vec![T::nan(); m + n];
    pot[0] = T::zero();
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        for &k in &adj[node] {
            let (i, j) = basis.cells[k];
            let other = if node < m { m + j } else { i };
            if pot[other].is_nan() {
                // u_i + v_j = c_ij
                pot[other] = c[(i, j)] - pot[node];
                queue.push_back(other);
            }
        }
    }
    let v = pot.split_off(m);
    (pot, v)
}

/// Basis cells on the unique tree path from row `r` to column `col`.
fn tree_path<T>(m: usize, n: usize, basis: &Basis<T>, r: usize, col: usize) -> Vec<usize> {
    let adj = adjacency(m, n, basis);
    let mut via = vec![usize::MAX; m + n];
    let mut seen = vec![false; m + n];
    seen[r] = true;
    let mut queue = VecDeque::from([r]);
    let target = m + col;
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        for &k in &adj[node] {
            let (i, j) = basis.cells[k];
            let other = if node < m { m + j } else { i };
            if !seen[other] {
                seen[other] = true;
                via[other] = k;
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = target;
    while node != r {
        let k = via[node];
        path.push(k);
        let (i, j) = basis.cells[k];
        node = if node < m { m + j } else { i };
    }
    path.reverse();
    path
}

/// Empirical mean of `|p_i - h(u, d_i)|_P` (Euclidean when `p_metric` is `None`).
pub fn vk_estimate<T: Scalar>(
    pop: &Population<T>,
    model: &DynamicsModel<T>,
    u: &[T],
    p_metric: Option<&Cholesky<T>>,
    tol: T,
    max_iter: usize,
) -> Result<T> {
    let ss = crate::dynamics::population_steady_states(model, pop, u, tol, max_iter, None)?;
    vk_from_steady_states(pop, &ss, p_metric)
}

/// As [`vk_estimate`] with steady states already computed.
pub fn vk_from_steady_states<T: Scalar>(
    pop: &Population<T>,
    steady: &[Vec<T>],
    p_metric: Option<&Cholesky<T>>,
) -> Result<T> {
    check_dim("steady-state count", pop.len(), steady.len())?;
    let total: T = pop
        .individuals()
        .iter()
        .zip(steady)
        .map(|(ind, ss)| {
            let diff = vector::sub(&ind.p, ss);
            match p_metric {
                Some(ch) => ch.weighted_norm(&diff),
                None => vector::norm(&diff),
            }
        })
        .sum();
    Ok(total / T::from_usize_lossy(pop.len()))
}

/// W1 between the joint empirical measures `{(p_i, d_i)}` and `{(s_i, d_i)}`
/// over the first `atoms` individuals.
pub fn w1_population_to_states<T: Scalar>(
    pop: &Population<T>,
    states: &[Vec<T>],
    atoms: usize,
    p_metric: Option<&Cholesky<T>>,
) -> Result<T> {
    check_dim("state count", pop.len(), states.len())?;
    let k = atoms.clamp(1, pop.len());
    let joint = |p: &[T], d: &[T]| p.iter().chain(d).copied().collect::<Vec<T>>();
    let inds = &pop.individuals()[..k];
    let mu = DiscreteMeasure::uniform(inds.iter().map(|i| joint(&i.p, &i.d)).collect())?;
    let nu = DiscreteMeasure::uniform(
        inds.iter()
            .zip(states)
            .map(|(i, s)| joint(s, &i.d))
            .collect(),
    )?;
    let metric = GroundMetric::Joint {
        state_dim: pop.dim_state(),
        p: p_metric.cloned(),
    };
    Ok(w1_discrete_exact(&mu, &nu, &metric)?.cost)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleHistogram {
    pub n_bins: usize,
    pub counts: Vec<usize>,
}

impl AngleHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        180.0 / self.n_bins as f64
    }

    /// Fraction of the mass in bins lying inside `[lo, hi]` degrees.
    pub fn fraction(&self, lo: f64, hi: f64) -> f64 {
        let w = self.bin_width();
        let inside: usize = self
            .counts
            .iter()
            .enumerate()
            .filter(|(b, _)| {
                let (a, z) = (*b as f64 * w, (*b + 1) as f64 * w);
                a >= lo - 1e-9 && z <= hi + 1e-9
            })
            .map(|(_, &c)| c)
            .sum();
        inside as f64 / self.total().max(1) as f64
    }
}

/// Angle between two nonzero vectors in degrees.
pub fn angle_deg<T: Scalar>(p: &[T], q: &[T]) -> Result<f64> {
    let (np, nq) = (vector::norm(p), vector::norm(q));
    if np == T::zero() || nq == T::zero() {
        return Err(Error::DegenerateAngle);
    }
    let c = (vector::dot(p, q) / (np * nq)).to_f64_lossy().clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Histogram over `[0, 180]` degrees of the angles between the given vectors and `q`.
pub fn angle_histogram_of<'a, T: Scalar>(
    vectors: impl IntoIterator<Item = &'a [T]>,
    q: &[T],
    n_bins: usize,
) -> Result<AngleHistogram> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0usize; n_bins];
    let w = 180.0 / n_bins as f64;
    for p in vectors {
        let a = angle_deg(p, q)?;
        counts[((a / w) as usize).min(n_bins - 1)] += 1;
    }
    Ok(AngleHistogram { n_bins, counts })
}

/// Histogram of the angles between the current states and `q`.
pub fn angle_histogram<T: Scalar>(pop: &Population<T>, q: &[T], n_bins: usize) -> Result<AngleHistogram> {
    angle_histogram_of(pop.states(), q, n_bins)
}

/// Per-iteration mean and pointwise min/max across trials.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Envelope {
    fn of(series: &[Vec<f64>]) -> Self {
        let len = series[0].len();
        let k = series.len() as f64;
        let mut env = Envelope {
            mean: vec![0.0; len],
            min: vec![f64::INFINITY; len],
            max: vec![f64::NEG_INFINITY; len],
        };
        for s in series {
            for (i, &x) in s.iter().enumerate() {
                env.mean[i] += x;
                env.min[i] = env.min[i].min(x);
                env.max[i] = env.max[i].max(x);
            }
        }
        env.mean.iter_mut().for_each(|m| *m /= k);
        env
    }

    pub fn half_width(&self, i: usize) -> f64 {
        0.5 * (self.max[i] - self.min[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSummary {
    pub trials: usize,
    pub objective: Envelope,
    /// Squared gradient norm: the exact reduced gradient when every record
    /// tracked it, otherwise the norm of the estimate that was applied.
    pub grad_sq: Envelope,
    pub opt_gap: Envelope,
    pub distance: Envelope,
    pub w1: Envelope,
    /// Mean over trials of `(1/T) sum_{k<T} grad_sq_k`.
    pub avg_grad_sq: f64,
}

/// Aggregates records of equal horizon, in the order given.
pub fn convergence_measures(records: &[RunRecord]) -> Result<ConvergenceSummary> {
    let Some(first) = records.first() else {
        return Err(Error::InsufficientData("no records to aggregate".into()));
    };
    let len = first.rows.len();
    if let Some(r) = records.iter().find(|r| r.rows.len() != len) {
        return Err(Error::Dimension {
            context: "record length",
            expected: len,
            got: r.rows.len(),
        });
    }
    let exact = records.iter().all(|r| r.exact_grad_sq.len() == len);
    let column = |f: &dyn Fn(&crate::optimizers::RunRow) -> f64| -> Vec<Vec<f64>> {
        records.iter().map(|r| r.rows.iter().map(f).collect()).collect()
    };
    let grad_sq: Vec<Vec<f64>> = if exact {
        records.iter().map(|r| r.exact_grad_sq.clone()).collect()
    } else {
        column(&|r| r.grad_norm * r.grad_norm)
    };
    let steps = (len - 1).max(1);
    let avg = grad_sq
        .iter()
        .map(|g| g[..steps].iter().sum::<f64>() / steps as f64)
        .sum::<f64>()
        / records.len() as f64;
    Ok(ConvergenceSummary {
        trials: records.len(),
        objective: Envelope::of(&column(&|r| r.objective)),
        grad_sq: Envelope::of(&grad_sq),
        opt_gap: Envelope::of(&column(&|r| r.opt_gap_rel)),
        distance: Envelope::of(&column(&|r| r.dist_to_ustar)),
        w1: Envelope::of(&column(&|r| r.w1_to_ss)),
        avg_grad_sq: avg,
    })
}
