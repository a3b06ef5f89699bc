//! Statistics and distances over strategy distributions.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::SimplexPoint;
use crate::micro::AgentPopulation;
use crate::rng;
use crate::stats::CompensatedSum;

/// A finite weighted cloud of simplex points.
pub trait StrategyCloud {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn point(&self, i: usize) -> &[f64];
    fn weight(&self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weighted atoms of the projection `x -> <x, direction>`.
    fn project(&self, direction: &[f64]) -> Vec<(f64, f64)> {
        (0..self.len())
            .map(|i| (self.point(i).iter().zip(direction).map(|(a, b)| a * b).sum(), self.weight(i)))
            .collect()
    }
}

impl StrategyCloud for AgentPopulation {
    fn dim(&self) -> usize {
        AgentPopulation::dim(self)
    }
    fn len(&self) -> usize {
        AgentPopulation::len(self)
    }
    fn point(&self, i: usize) -> &[f64] {
        self.strategy(i)
    }
    fn weight(&self, _i: usize) -> f64 {
        1.0 / AgentPopulation::len(self) as f64
    }
}

/// Weighted average of the cloud, summed in index order.
pub fn mean_strategy<C: StrategyCloud + ?Sized>(cloud: &C) -> Result<SimplexPoint> {
    if cloud.is_empty() {
        return Err(Error::Empty);
    }
    let mut acc = vec![CompensatedSum::default(); cloud.dim()];
    let mut total = CompensatedSum::default();
    for i in 0..cloud.len() {
        let w = cloud.weight(i);
        total.add(w);
        for (a, x) in acc.iter_mut().zip(cloud.point(i)) {
            a.add(w * x);
        }
    }
    SimplexPoint::normalized(acc.iter().map(|a| a.value() / total.value()).collect())
}

/// Exact Wasserstein-1 distance between two weighted sets of reals, computed
/// as the area between their distribution functions.
pub fn w1_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0_f64, 0.0_f64);
    let mut prev: Option<f64> = None;
    let mut area = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(u), Some(v)) => u.0.min(v.0),
            (Some(u), None) => u.0,
            (None, Some(v)) => v.0,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            area += (fa - fb).abs() * (x - p);
        }
        while i < a.len() && a[i].0 == x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == x {
            fb += b[j].1;
            j += 1;
        }
        prev = Some(x);
    }
    area
}

/// Uniform-weight convenience wrapper over [`w1_1d`].
pub fn w1_1d_uniform(a: &[f64], b: &[f64]) -> f64 {
    let wa = 1.0 / a.len() as f64;
    let wb = 1.0 / b.len() as f64;
    let a: Vec<_> = a.iter().map(|x| (*x, wa)).collect();
    let b: Vec<_> = b.iter().map(|x| (*x, wb)).collect();
    w1_1d(&a, &b)
}

/// Random unit directions inside the hyperplane `{sum x_i = 0}`.
pub fn hyperplane_directions(dim: usize, n_proj: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(rng::derive_seed(seed, 0x5117_CED0), 0);
    let mut dirs = Vec::with_capacity(n_proj);
    while dirs.len() < n_proj {
        let mut g: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = g.iter().sum::<f64>() / dim as f64;
        g.iter_mut().for_each(|x| *x -= mean);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            g.iter_mut().for_each(|x| *x /= norm);
            dirs.push(g);
        }
    }
    dirs
}

/// Sliced Wasserstein-1 distance: the average of exact 1-D distances over
/// `n_proj` seeded directions of the simplex hyperplane. Never exceeds the
/// Euclidean W1 between the clouds.
pub fn sliced_w1<A, B>(a: &A, b: &B, n_proj: usize, seed: u64) -> Result<f64>
where
    A: StrategyCloud + ?Sized,
    B: StrategyCloud + ?Sized,
{
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    if n_proj == 0 {
        return Err(Error::ConfigInvalid("sliced_w1 needs at least one projection".into()));
    }
    let dirs = hyperplane_directions(a.dim(), n_proj, seed);
    Ok(sliced_w1_with(a, b, &dirs))
}

/// [`sliced_w1`] over an explicit direction set.
pub fn sliced_w1_with<A, B>(a: &A, b: &B, directions: &[Vec<f64>]) -> f64
where
    A: StrategyCloud + ?Sized,
    B: StrategyCloud + ?Sized,
{
    directions.iter().map(|u| w1_1d(&a.project(u), &b.project(u))).sum::<f64>() / directions.len() as f64
}

/// Exact Euclidean W1 between two equal-size uniform clouds by solving the
/// assignment problem (Hungarian method, `O(n^3)`). Intended for checking
/// [`sliced_w1`] on small instances.
pub fn exact_w1_assignment<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: StrategyCloud + ?Sized,
    B: StrategyCloud + ?Sized,
{
    let n = a.len();
    if n != b.len() {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    let cost = |i: usize, j: usize| -> f64 {
        a.point(i).iter().zip(b.point(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    // potentials formulation, 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let total: f64 = (1..=n).map(|j| cost(owner[j] - 1, j - 1)).sum();
    Ok(total / n as f64)
}

/// Marginal histogram of one coordinate on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub axis: usize,
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn first(&self) -> f64 {
        self.masses[0]
    }

    pub fn last(&self) -> f64 {
        *self.masses.last().unwrap()
    }

    /// `(edge_lo, edge_hi, mass)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.masses.iter().enumerate().map(|(k, m)| (self.edges[k], self.edges[k + 1], *m))
    }
}

/// Bins coordinate `axis` into `n_bins` equal bins of `[0, 1]`: bins are
/// right-open except the last, and atoms sitting on an edge go right.
pub fn marginal_histogram<C: StrategyCloud + ?Sized>(cloud: &C, axis: usize, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::ConfigInvalid("histogram needs at least one bin".into()));
    }
    if axis >= cloud.dim() {
        return Err(Error::DimensionMismatch { expected: cloud.dim(), found: axis + 1 });
    }
    let edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
    let mut masses = vec![0.0; n_bins];
    let mut total = 0.0;
    for i in 0..cloud.len() {
        let x = cloud.point(i)[axis];
        let mut k = ((x * n_bins as f64).floor() as isize).clamp(0, n_bins as isize - 1) as usize;
        if k + 1 < n_bins && x >= edges[k + 1] {
            k += 1;
        } else if k > 0 && x < edges[k] {
            k -= 1;
        }
        masses[k] += cloud.weight(i);
        total += cloud.weight(i);
    }
    if total > 0.0 {
        masses.iter_mut().for_each(|m| *m /= total);
    }
    Ok(Histogram { axis, edges, masses })
}

/// Covariance of the uniform distribution on the simplex:
/// `(d-1) / (d^2 (d+1))` on the diagonal, `-1 / (d^2 (d+1))` elsewhere.
pub fn uniform_simplex_covariance(dim: usize) -> Result<DMatrix<f64>> {
    if dim < 2 {
        return Err(Error::BadDimension(format!("simplex dimension {dim} < 2")));
    }
    let d = dim as f64;
    let denom = d * d * (d + 1.0);
    Ok(DMatrix::from_fn(dim, dim, |i, j| if i == j { (d - 1.0) / denom } else { -1.0 / denom }))
}
