//! Particle solver for the mean-field transport equation
//! `d/dt v + div(F[v] v) = 0` with the nonlocal field
//! `F_i[v](p) = h(p) (p_i (A pbar)_i + pbar_i (A p)_i)`, `pbar` the mean of `v`.
//!
//! A weighted particle cloud is transported along the characteristics of the
//! field. The coupled system is advanced with RK4, recomputing the mean from
//! the stage states so the scheme keeps its fourth order. A stochastic
//! Euler-Maruyama step covers the diffusive variant of the limit equation.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{check_simplex, PayoffMatrix, SimplexPoint, StepFunction, SIMPLEX_TOL};
use crate::metrics::{self, StrategyCloud};
use crate::micro::AgentPopulation;
use crate::ode::{rk4_step, settle_simplex, settle_unit_interval, step_schedule, Rk4Workspace};
use crate::rng;
use crate::stats::{sum_compensated, CompensatedSum};

/// Particle counts at or above this use the thread pool for field evaluation.
const PAR_THRESHOLD: usize = 2048;

/// Weighted particle approximation of a strategy distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(points: &[SimplexPoint], weights: Vec<f64>) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty)?;
        let dim = first.dim();
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), found: weights.len() });
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
            flat.extend_from_slice(p.coords());
        }
        Self::from_flat(dim, flat, weights)
    }

    pub fn uniform(points: &[SimplexPoint]) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        Self::new(points, vec![w; points.len()])
    }

    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim < 2 || points.len() != dim * weights.len() {
            return Err(Error::BadDimension(format!(
                "{} coordinates for {} particles of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::ConfigInvalid("particle weights must be nonnegative".into()));
        }
        let total = sum_compensated(weights.iter().copied());
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::ConfigInvalid(format!("particle weights sum to {total:.17}, expected 1")));
        }
        for p in points.chunks_exact(dim) {
            check_simplex(p)?;
        }
        Ok(ParticleEnsemble { dim, points, weights, time: 0.0 })
    }

    pub fn from_population(pop: &AgentPopulation) -> Self {
        let n = pop.len();
        ParticleEnsemble { dim: pop.dim(), points: pop.flat().to_vec(), weights: vec![1.0 / n as f64; n], time: pop.time }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Weighted mean, summed in particle order.
    pub fn mean(&self) -> Vec<f64> {
        weighted_mean(&self.points, &self.weights, self.dim)
    }

    /// Smallest `prod_i p_i` over particles carrying positive weight.
    pub fn min_product(&self) -> f64 {
        self.iter().filter(|(_, w)| *w > 0.0).map(|(p, _)| p.iter().product::<f64>()).fold(f64::INFINITY, f64::min)
    }

    /// Applies a map to every particle (e.g. a linear transform of the simplex).
    pub fn map_points<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Result<Self> {
        let mut pts = Vec::with_capacity(self.points.len());
        for p in self.points.chunks_exact(self.dim) {
            pts.extend(f(p));
        }
        let mut out = Self::from_flat(self.dim, pts, self.weights.clone())?;
        out.time = self.time;
        Ok(out)
    }

    /// Linear interpolation between two ensembles with matching particles.
    pub fn lerp(&self, other: &Self, w: f64) -> Self {
        let points = self.points.iter().zip(&other.points).map(|(a, b)| a + w * (b - a)).collect();
        ParticleEnsemble {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
            time: self.time + w * (other.time - self.time),
        }
    }

    /// Writes `weight,p_1,...,p_d` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["weight".to_string()];
        header.extend((1..=self.dim).map(|k| format!("p_{k}")));
        w.write_record(&header)?;
        for (p, weight) in self.iter() {
            let mut row = vec![fmt_f64(weight)];
            row.extend(p.iter().map(|x| fmt_f64(*x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let dim = headers.len().saturating_sub(1);
        if headers.get(0) != Some("weight") || dim < 2 {
            return Err(Error::Parse(format!("unexpected ensemble header {headers:?}")));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            weights.push(vals[0]);
            points.extend_from_slice(&vals[1..]);
        }
        Self::from_flat(dim, points, weights)
    }
}

impl StrategyCloud for ParticleEnsemble {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.weights.len()
    }
    fn point(&self, i: usize) -> &[f64] {
        self.particle(i)
    }
    fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x:?}")
}

fn weighted_mean(points: &[f64], weights: &[f64], dim: usize) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::default(); dim];
    for (p, w) in points.chunks_exact(dim).zip(weights) {
        for (a, x) in acc.iter_mut().zip(p) {
            a.add(w * x);
        }
    }
    acc.iter().map(CompensatedSum::value).collect()
}

/// Parameters of the transport field and its optional diffusion.
#[derive(Debug, Clone)]
pub struct FieldParams {
    pub game: PayoffMatrix,
    pub step: StepFunction,
    /// Diffusion ratio `r^2 / delta`; zero for pure transport.
    pub lambda: f64,
    /// Covariance of the noise; populated by [`FieldParams::with_diffusion`].
    pub noise_cov: Option<DMatrix<f64>>,
}

impl FieldParams {
    pub fn transport(game: PayoffMatrix, c: f64) -> Result<Self> {
        game.require_antisymmetric()?;
        Ok(FieldParams { game, step: StepFunction::new(c)?, lambda: 0.0, noise_cov: None })
    }

    /// Adds diffusion of strength `lambda` with the uniform-simplex covariance.
    pub fn with_diffusion(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::ConfigInvalid(format!("lambda must be >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        self.noise_cov = Some(metrics::uniform_simplex_covariance(self.game.dim())?);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.game.dim()
    }
}

/// Evaluates the field at `p` given the mean `pbar` and `a_pbar = A pbar`.
#[inline]
pub fn field_into(p: &[f64], pbar: &[f64], a_pbar: &[f64], game: &PayoffMatrix, step: &StepFunction, out: &mut [f64]) {
    let h = step.eval(p);
    if h == 0.0 {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    for i in 0..p.len() {
        let ap_i: f64 = game.row(i).iter().zip(p).map(|(a, x)| a * x).sum();
        out[i] = h * (p[i] * a_pbar[i] + pbar[i] * ap_i);
    }
}

/// `F[v](p)` for a distribution with mean `pbar`.
pub fn field_f(p: &SimplexPoint, pbar: &[f64], params: &FieldParams) -> Vec<f64> {
    let a_pbar = params.game.apply(pbar);
    let mut out = vec![0.0; p.dim()];
    field_into(p.coords(), pbar, &a_pbar, &params.game, &params.step, &mut out);
    out
}

/// Whole-ensemble field evaluation: writes `F[v](p_k)` for every particle.
fn ensemble_field(points: &[f64], pbar: &[f64], params: &FieldParams, out: &mut [f64]) {
    let d = params.dim();
    let a_pbar = params.game.apply(pbar);
    let eval = |(o, p): (&mut [f64], &[f64])| field_into(p, pbar, &a_pbar, &params.game, &params.step, o);
    if points.len() / d >= PAR_THRESHOLD {
        out.par_chunks_mut(d).zip(points.par_chunks(d)).for_each(eval);
    } else {
        out.chunks_mut(d).zip(points.chunks(d)).for_each(eval);
    }
}

/// How the population mean enters the RK4 stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MeanCoupling {
    /// Mean recomputed from every stage state; fourth order.
    #[default]
    SelfConsistent,
    /// Mean frozen at the start of each step; cheaper, first order in the coupling.
    Frozen,
}

#[derive(Debug, Clone)]
pub struct TransportOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `record_every`-th step as a snapshot (the final state is always kept).
    pub record_every: usize,
    pub coupling: MeanCoupling,
}

impl TransportOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        TransportOptions { dt, t_end, record_every: 1, coupling: MeanCoupling::SelfConsistent }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn coupling(mut self, coupling: MeanCoupling) -> Self {
        self.coupling = coupling;
        self
    }
}

/// Output of [`integrate_transport`].
#[derive(Debug, Clone)]
pub struct TransportRun {
    pub snapshots: Vec<ParticleEnsemble>,
    /// Times of every step (including 0).
    pub step_times: Vec<f64>,
    /// Ensemble mean at every step.
    pub means: Vec<Vec<f64>>,
    /// Smallest `prod_i p_i` over the support at every step.
    pub min_products: Vec<f64>,
    /// Particle-steps on which the clamping policy modified a state.
    pub clamps: u64,
}

impl TransportRun {
    pub fn last(&self) -> &ParticleEnsemble {
        self.snapshots.last().expect("initial snapshot is always recorded")
    }

    /// Ensemble at time `t`, interpolated linearly between recorded snapshots.
    pub fn ensemble_at(&self, t: f64) -> Result<ParticleEnsemble> {
        let first = &self.snapshots[0];
        let last = self.last();
        if t < first.time - 1e-9 || t > last.time + 1e-9 {
            return Err(Error::RangeOutOfSpan { t0: t, t1: t, start: first.time, end: last.time });
        }
        let k = self.snapshots.partition_point(|s| s.time <= t);
        if k == 0 {
            return Ok(first.clone());
        }
        if k >= self.snapshots.len() {
            return Ok(last.clone());
        }
        let (a, b) = (&self.snapshots[k - 1], &self.snapshots[k]);
        Ok(a.lerp(b, (t - a.time) / (b.time - a.time)))
    }
}

/// Transports the ensemble along the field up to `opts.t_end`.
pub fn integrate_transport(ens0: &ParticleEnsemble, params: &FieldParams, opts: &TransportOptions) -> Result<TransportRun> {
    if params.lambda != 0.0 {
        return Err(Error::ConfigInvalid("integrate_transport requires lambda = 0; use diffusion_step".into()));
    }
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) {
        return Err(Error::ConfigInvalid(format!("need dt > 0 and t_end >= 0, got dt={}, t_end={}", opts.dt, opts.t_end)));
    }
    if ens0.dim() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), found: ens0.dim() });
    }
    let d = ens0.dim();
    let weights = ens0.weights.clone();
    let mut y = ens0.points.clone();
    let mut ws = Rk4Workspace::new(y.len());
    let steps = step_schedule(opts.t_end, opts.dt);
    let t0 = ens0.time;

    let mut run = TransportRun {
        snapshots: vec![ens0.clone()],
        step_times: vec![t0],
        means: vec![ens0.mean()],
        min_products: vec![ens0.min_product()],
        clamps: 0,
    };
    for (k, h) in steps.iter().enumerate() {
        match opts.coupling {
            MeanCoupling::SelfConsistent => rk4_step(&mut y, *h, &mut ws, |x, out| {
                let pbar = weighted_mean(x, &weights, d);
                ensemble_field(x, &pbar, params, out);
            }),
            MeanCoupling::Frozen => {
                let pbar = weighted_mean(&y, &weights, d);
                rk4_step(&mut y, *h, &mut ws, |x, out| ensemble_field(x, &pbar, params, out));
            }
        }
        let t = if k + 1 == steps.len() { t0 + opts.t_end } else { t0 + (k + 1) as f64 * opts.dt };
        for block in y.chunks_exact_mut(d) {
            if settle_simplex(block, t)? {
                run.clamps += 1;
            }
        }
        let mean = weighted_mean(&y, &weights, d);
        run.step_times.push(t);
        run.means.push(mean);
        run.min_products.push(
            y.chunks_exact(d)
                .zip(&weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(p, _)| p.iter().product::<f64>())
                .fold(f64::INFINITY, f64::min),
        );
        if (k + 1) % opts.record_every == 0 || k + 1 == steps.len() {
            run.snapshots.push(ParticleEnsemble { dim: d, points: y.clone(), weights: weights.clone(), time: t });
        }
    }
    Ok(run)
}

/// Velocity of a particle at `p1` in the two-strategy reduction, before the
/// payoff factor `b`: `min(p1 (1 - p1), c) (p1 + p1bar - 2 p1 p1bar)`.
#[inline]
pub fn two_strategy_rhs(p1: f64, p1bar: f64, c: f64) -> f64 {
    (p1 * (1.0 - p1)).min(c) * (p1 + p1bar - 2.0 * p1 * p1bar)
}

/// Weighted first-coordinate particles of a two-strategy game.
#[derive(Debug, Clone)]
pub struct TwoStrategyRun {
    pub times: Vec<f64>,
    /// Recorded particle positions (first coordinate), one vector per recorded time.
    pub snapshots: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Weighted mean of `p1` at every step.
    pub means: Vec<f64>,
    pub mean_times: Vec<f64>,
}

impl TwoStrategyRun {
    pub fn last(&self) -> &[f64] {
        self.snapshots.last().unwrap()
    }

    /// Mass within `eps` of `target`.
    pub fn mass_near(&self, target: f64, eps: f64) -> f64 {
        sum_compensated(self.last().iter().zip(&self.weights).filter(|(x, _)| (*x - target).abs() <= eps).map(|(_, w)| *w))
    }

    pub fn as_ensemble(&self, k: usize) -> Result<ParticleEnsemble> {
        let pts: Vec<f64> = self.snapshots[k].iter().flat_map(|x| [*x, 1.0 - *x]).collect();
        let mut e = ParticleEnsemble::from_flat(2, pts, self.weights.clone())?;
        e.time = self.times[k];
        Ok(e)
    }
}

/// RK4 for the scalar particle system `p1' = b * two_strategy_rhs(p1, mean p1, c)`.
pub fn integrate_two_strategies(
    p1: &[f64],
    weights: &[f64],
    b: f64,
    c: f64,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<TwoStrategyRun> {
    StepFunction::new(c)?;
    if p1.len() != weights.len() || p1.is_empty() {
        return Err(Error::DimensionMismatch { expected: p1.len(), found: weights.len() });
    }
    if p1.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::NotInSimplex("two-strategy particles must lie in [0, 1]".into()));
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::ConfigInvalid(format!("need dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}")));
    }
    let mean_of = |x: &[f64]| sum_compensated(x.iter().zip(weights).map(|(a, w)| a * w));
    let mut y = p1.to_vec();
    let mut ws = Rk4Workspace::new(y.len());
    let record_every = record_every.max(1);
    let mut run = TwoStrategyRun {
        times: vec![0.0],
        snapshots: vec![y.clone()],
        weights: weights.to_vec(),
        means: vec![mean_of(&y)],
        mean_times: vec![0.0],
    };
    let steps = step_schedule(t_end, dt);
    for (k, h) in steps.iter().enumerate() {
        rk4_step(&mut y, *h, &mut ws, |x, out| {
            let bar = mean_of(x);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = b * two_strategy_rhs(*xi, bar, c);
            }
        });
        let t = if k + 1 == steps.len() { t_end } else { (k + 1) as f64 * dt };
        for x in y.iter_mut() {
            settle_unit_interval(x, t)?;
        }
        run.means.push(mean_of(&y));
        run.mean_times.push(t);
        if (k + 1) % record_every == 0 || k + 1 == steps.len() {
            run.times.push(t);
            run.snapshots.push(y.clone());
        }
    }
    Ok(run)
}

/// Counters returned by [`diffusion_step`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiffusionReport {
    /// Noise draws discarded because the particle would have left the simplex.
    pub rejections: u64,
    /// Particles whose increment was shrunk after the redraw budget ran out.
    pub truncations: u64,
}

/// Redraws allowed before an increment is truncated.
pub const MAX_REDRAWS: usize = 8;

/// Symmetric square root of a positive semidefinite matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|x| x.max(0.0).sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// One Euler-Maruyama step of the diffusive limit: drift `F dt` plus
/// `sqrt(lambda dt) G(p) L xi` with `L L^T = Q` and `G = h`.
///
/// Particle `k` at step `step_index` draws from its own stream, so results do
/// not depend on how particles are partitioned across threads.
pub fn diffusion_step(
    ens: &ParticleEnsemble,
    params: &FieldParams,
    dt: f64,
    seed: u64,
    step_index: u64,
) -> Result<(ParticleEnsemble, DiffusionReport)> {
    if !(params.lambda > 0.0) {
        return Err(Error::ConfigInvalid(format!("diffusion_step needs lambda > 0, got {}", params.lambda)));
    }
    let q = params.noise_cov.as_ref().ok_or_else(|| Error::ConfigInvalid("noise covariance not populated".into()))?;
    let l = psd_sqrt(q);
    let d = ens.dim();
    let pbar = ens.mean();
    let mut drift = vec![0.0; ens.points.len()];
    ensemble_field(&ens.points, &pbar, params, &mut drift);
    let scale = (params.lambda * dt).sqrt();
    let step_seed = rng::derive_seed(seed, step_index);

    let results: Vec<(Vec<f64>, u64, bool)> = (0..ens.len())
        .into_par_iter()
        .map(|k| {
            let p = ens.particle(k);
            let f = &drift[k * d..(k + 1) * d];
            let g = params.step.eval(p);
            let base: Vec<f64> = p.iter().zip(f).map(|(x, v)| x + v * dt).collect();
            if g == 0.0 {
                return (base, 0, false);
            }
            let mut r = rng::stream(step_seed, k as u64);
            let mut rejected = 0;
            let mut noise = vec![0.0; d];
            for _ in 0..=MAX_REDRAWS {
                let xi = DVector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal)));
                let lx = &l * xi;
                for i in 0..d {
                    noise[i] = scale * g * lx[i];
                }
                let cand: Vec<f64> = base.iter().zip(&noise).map(|(a, b)| a + b).collect();
                if cand.iter().all(|x| *x >= 0.0) {
                    return (cand, rejected, false);
                }
                rejected += 1;
            }
            // shrink the last increment to half the distance to the boundary
            let incr: Vec<f64> = base.iter().zip(&noise).zip(p).map(|((a, n), x)| a + n - x).collect();
            let alpha = p
                .iter()
                .zip(&incr)
                .filter(|(_, v)| **v < 0.0)
                .map(|(x, v)| x / -v)
                .fold(1.0_f64, f64::min);
            let cand = p.iter().zip(&incr).map(|(x, v)| x + 0.5 * alpha * v).collect();
            (cand, rejected - 1, true)
        })
        .collect();

    let mut report = DiffusionReport::default();
    let mut points = Vec::with_capacity(ens.points.len());
    for (mut p, rej, trunc) in results {
        report.rejections += rej;
        report.truncations += trunc as u64;
        settle_simplex(&mut p, ens.time + dt)?;
        points.extend(p);
    }
    Ok((ParticleEnsemble { dim: d, points, weights: ens.weights.clone(), time: ens.time + dt }, report))
}

/// Test function `phi(p) = k + b.p + p^T C p`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTest {
    pub constant: f64,
    pub linear: Vec<f64>,
    /// Row-major `d x d`.
    pub quadratic: Vec<f64>,
}

impl QuadraticTest {
    pub fn constant(dim: usize, k: f64) -> Self {
        QuadraticTest { constant: k, linear: vec![0.0; dim], quadratic: vec![0.0; dim * dim] }
    }

    /// `phi(p) = p_i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut t = Self::constant(dim, 0.0);
        t.linear[i] = 1.0;
        t
    }

    /// `phi(p) = p_i p_j`.
    pub fn product(dim: usize, i: usize, j: usize) -> Self {
        let mut t = Self::constant(dim, 0.0);
        t.quadratic[i * dim + j] = 1.0;
        t
    }

    fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = self.constant + self.linear.iter().zip(p).map(|(b, x)| b * x).sum::<f64>();
        for i in 0..d {
            for j in 0..d {
                v += self.quadratic[i * d + j] * p[i] * p[j];
            }
        }
        v
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| self.linear[i] + (0..d).map(|j| (self.quadratic[i * d + j] + self.quadratic[j * d + i]) * p[j]).sum::<f64>())
            .collect()
    }
}

/// Residual of the weak formulation along a snapshot series:
/// `|<phi, v_t> - <phi, v_0> - int_0^t <grad phi . F[v_s], v_s> ds|` at the
/// last snapshot, with the time integral done by the trapezoidal rule.
pub fn weak_residual(snapshots: &[ParticleEnsemble], params: &FieldParams, phi: &QuadraticTest) -> Result<f64> {
    if params.lambda != 0.0 {
        return Err(Error::ConfigInvalid("weak_residual covers the pure transport case (lambda = 0)".into()));
    }
    if snapshots.len() < 3 {
        return Err(Error::ConfigInvalid(format!("need at least 3 snapshots, got {}", snapshots.len())));
    }
    let d = params.dim();
    if phi.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: phi.dim() });
    }
    let pairing = |e: &ParticleEnsemble| e.iter().map(|(p, w)| w * phi.eval(p)).sum::<f64>();
    let flux = |e: &ParticleEnsemble| {
        let pbar = e.mean();
        let a_pbar = params.game.apply(&pbar);
        let mut f = vec![0.0; d];
        e.iter()
            .map(|(p, w)| {
                field_into(p, &pbar, &a_pbar, &params.game, &params.step, &mut f);
                w * phi.gradient(p).iter().zip(&f).map(|(g, v)| g * v).sum::<f64>()
            })
            .sum::<f64>()
    };
    let fluxes: Vec<f64> = snapshots.iter().map(flux).collect();
    let integral: f64 = snapshots
        .windows(2)
        .zip(fluxes.windows(2))
        .map(|(s, f)| 0.5 * (s[1].time - s[0].time) * (f[0] + f[1]))
        .sum();
    let first = &snapshots[0];
    let last = snapshots.last().unwrap();
    Ok((pairing(last) - pairing(first) - integral).abs())
}

/// Projections used when [`stability_factor`] measures distances.
pub const STABILITY_PROJECTIONS: usize = 64;

/// Ratio `W(final_a, final_b) / W(initial_a, initial_b)` after transporting
/// both ensembles to `t_end`, with `W` the sliced W1 distance.
pub fn stability_factor(
    ens_a0: &ParticleEnsemble,
    ens_b0: &ParticleEnsemble,
    params: &FieldParams,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    if ens_a0.len() != ens_b0.len() {
        return Err(Error::DimensionMismatch { expected: ens_a0.len(), found: ens_b0.len() });
    }
    let w0 = metrics::sliced_w1(ens_a0, ens_b0, STABILITY_PROJECTIONS, 0)?;
    if w0 <= 0.0 {
        return Err(Error::DegenerateInitialDistance);
    }
    let opts = TransportOptions::new(t_end, dt).record_every(usize::MAX);
    let a = integrate_transport(ens_a0, params, &opts)?;
    let b = integrate_transport(ens_b0, params, &opts)?;
    Ok(metrics::sliced_w1(a.last(), b.last(), STABILITY_PROJECTIONS, 0)? / w0)
}
