//! Finite-N agent simulation of the pairwise interaction process.
//!
//! Pairs of agents meet at the events of a Poisson clock of total rate `N/2`,
//! so each agent plays at unit rate. At a meeting both agents draw a pure
//! strategy from their mixed strategy; if agent one plays `l` and agent two
//! plays `m`, both shift `delta * h * a_lm` of probability from `m` to `l`,
//! each with its own step function value, and add independent simplex noise
//! scaled by `r * G`.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{sample_pure, PayoffMatrix, SimplexPoint, StepFunction, SIMPLEX_TOL};
use crate::rng;

/// Scale function `G` of the noise term; must satisfy `G(p) <= min_i p_i`.
#[derive(Debug, Clone, Copy, Default)]
pub enum NoiseScale {
    /// `G = h`, the step function itself.
    #[default]
    UseH,
    /// Caller-supplied `G`. Values above `min_i p_i` are rejected at use.
    Custom(fn(&[f64]) -> f64),
}

/// How event times are generated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventClock {
    /// Exponential gaps with mean `2/N` (Poisson clock of rate `N/2`).
    #[default]
    Exponential,
    /// Deterministic gaps of exactly `2/N`; same mean rate, no clock noise.
    Fixed,
}

#[derive(Debug, Clone)]
pub struct MicroConfig {
    /// Payoff-step intensity.
    pub delta: f64,
    /// Noise intensity.
    pub r: f64,
    pub step: StepFunction,
    pub noise_scale: NoiseScale,
    pub clock: EventClock,
    pub seed: u64,
    pub n_agents: usize,
}

impl MicroConfig {
    pub fn new(delta: f64, r: f64, c: f64, seed: u64, n_agents: usize) -> Result<Self> {
        let cfg = MicroConfig {
            delta,
            r,
            step: StepFunction::new(c)?,
            noise_scale: NoiseScale::UseH,
            clock: EventClock::Exponential,
            seed,
            n_agents,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_clock(mut self, clock: EventClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_noise_scale(mut self, g: NoiseScale) -> Self {
        self.noise_scale = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::ConfigInvalid(format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        if !(self.r >= 0.0) {
            return Err(Error::ConfigInvalid(format!("noise intensity r must be >= 0, got {}", self.r)));
        }
        if self.delta + self.r >= 1.0 {
            return Err(Error::ConfigInvalid(format!(
                "delta + r must be < 1, got {} + {}",
                self.delta, self.r
            )));
        }
        if self.n_agents < 2 {
            return Err(Error::ConfigInvalid(format!("need at least 2 agents, got {}", self.n_agents)));
        }
        Ok(())
    }

    /// Expected time between two pair events.
    pub fn mean_event_gap(&self) -> f64 {
        2.0 / self.n_agents as f64
    }

    fn noise_scale_at(&self, p: &[f64]) -> Result<f64> {
        match self.noise_scale {
            NoiseScale::UseH => Ok(self.step.eval(p)),
            NoiseScale::Custom(g) => {
                let v = g(p);
                let min = p.iter().copied().fold(f64::INFINITY, f64::min);
                if !(v >= 0.0) || v > min + 1e-15 {
                    return Err(Error::ConfigInvalid(format!(
                        "noise scale G(p) = {v} exceeds min_i p_i = {min}"
                    )));
                }
                Ok(v)
            }
        }
    }
}

/// Strategies of `N` agents, stored row-major (`N x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPopulation {
    dim: usize,
    strategies: Vec<f64>,
    pub time: f64,
}

impl AgentPopulation {
    pub fn new(points: &[SimplexPoint]) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty)?;
        let dim = first.dim();
        let mut strategies = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
            strategies.extend_from_slice(p.coords());
        }
        Ok(AgentPopulation { dim, strategies, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.strategies.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn strategy(&self, i: usize) -> &[f64] {
        &self.strategies[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> SimplexPoint {
        SimplexPoint::from_trusted(self.strategy(i).to_vec())
    }

    pub fn flat(&self) -> &[f64] {
        &self.strategies
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.strategies.chunks_exact(self.dim)
    }

    fn pair_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert_ne!(i, j);
        let d = self.dim;
        let (lo, hi, swap) = if i < j { (i, j, false) } else { (j, i, true) };
        let (head, tail) = self.strategies.split_at_mut(hi * d);
        let a = &mut head[lo * d..(lo + 1) * d];
        let b = &mut tail[..d];
        if swap {
            (b, a)
        } else {
            (a, b)
        }
    }
}

/// Random ingredients of one meeting. Strategy indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEvent {
    pub i: usize,
    pub j: usize,
    pub zeta: f64,
    pub zeta_tilde: f64,
    /// Pure strategy played by agent `i`.
    pub l: usize,
    /// Pure strategy played by agent `j`.
    pub m: usize,
    /// Noise draw for agent `i` (uniform on the simplex).
    pub q: Vec<f64>,
    /// Independent noise draw for agent `j`.
    pub q_tilde: Vec<f64>,
    /// Time elapsed since the previous event.
    pub dt: f64,
}

impl InteractionEvent {
    /// Draws the event with the given index from its dedicated stream.
    pub fn draw(index: u64, pop: &AgentPopulation, cfg: &MicroConfig) -> Self {
        let mut rng = rng::stream(cfg.seed, index);
        let n = pop.len();
        let d = pop.dim();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let zeta = rng::unit(&mut rng);
        let zeta_tilde = rng::unit(&mut rng);
        let l = sample_pure(pop.strategy(i), zeta);
        let m = sample_pure(pop.strategy(j), zeta_tilde);
        let (q, q_tilde) = if cfg.r > 0.0 {
            (rng::uniform_simplex(&mut rng, d), rng::uniform_simplex(&mut rng, d))
        } else {
            (vec![1.0 / d as f64; d], vec![1.0 / d as f64; d])
        };
        let dt = match cfg.clock {
            EventClock::Exponential => {
                let e: f64 = rng.sample(Exp1);
                e * cfg.mean_event_gap()
            }
            EventClock::Fixed => cfg.mean_event_gap(),
        };
        InteractionEvent { i, j, zeta, zeta_tilde, l, m, q, q_tilde, dt }
    }
}

/// Bookkeeping returned by [`interact_in_place`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InteractionReport {
    /// Largest `|sum_i p*_i - 1|` before any correction.
    pub raw_sum_drift: f64,
    /// Whether a renormalization (or dust clamp) was applied.
    pub renormalized: bool,
}

/// Applies one meeting to the two strategies in place.
pub fn interact_in_place(
    p: &mut [f64],
    p_tilde: &mut [f64],
    event: &InteractionEvent,
    cfg: &MicroConfig,
    game: &PayoffMatrix,
) -> Result<InteractionReport> {
    if cfg.delta + cfg.r >= 1.0 {
        return Err(Error::ConfigInvalid(format!("delta + r must be < 1, got {} + {}", cfg.delta, cfg.r)));
    }
    let d = p.len();
    let h = cfg.step.eval(p);
    let h_tilde = cfg.step.eval(p_tilde);
    let noise = if cfg.r > 0.0 {
        Some((cfg.noise_scale_at(p)?, cfg.noise_scale_at(p_tilde)?))
    } else {
        None
    };
    let (l, m) = (event.l, event.m);
    if l != m && cfg.delta > 0.0 {
        let gain = cfg.delta * game.get(l, m);
        p[l] += gain * h;
        p[m] -= gain * h;
        p_tilde[l] += gain * h_tilde;
        p_tilde[m] -= gain * h_tilde;
    }
    if let Some((g, g_tilde)) = noise {
        let centre = 1.0 / d as f64;
        for k in 0..d {
            p[k] += cfg.r * (event.q[k] - centre) * g;
            p_tilde[k] += cfg.r * (event.q_tilde[k] - centre) * g_tilde;
        }
    }
    let (drift_a, fixed_a) = settle(p)?;
    let (drift_b, fixed_b) = settle(p_tilde)?;
    Ok(InteractionReport { raw_sum_drift: drift_a.max(drift_b), renormalized: fixed_a || fixed_b })
}

fn settle(p: &mut [f64]) -> Result<(f64, bool)> {
    let total: f64 = p.iter().sum();
    let drift = (total - 1.0).abs();
    let mut fixed = false;
    for (coord, x) in p.iter_mut().enumerate() {
        if *x < 0.0 {
            if *x < -1e-12 {
                return Err(Error::StateLeftSimplex { time: f64::NAN, coord, value: *x });
            }
            *x = 0.0;
            fixed = true;
        }
    }
    if fixed || drift > SIMPLEX_TOL {
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        fixed = true;
    }
    Ok((drift, fixed))
}

/// Value-returning form of [`interact_in_place`].
pub fn interact_pair(
    p: &SimplexPoint,
    p_tilde: &SimplexPoint,
    event: &InteractionEvent,
    cfg: &MicroConfig,
    game: &PayoffMatrix,
) -> Result<(SimplexPoint, SimplexPoint)> {
    let mut a = p.coords().to_vec();
    let mut b = p_tilde.coords().to_vec();
    interact_in_place(&mut a, &mut b, event, cfg, game)?;
    Ok((SimplexPoint::from_trusted(a), SimplexPoint::from_trusted(b)))
}

/// Mean increment `E[p* - p]` of the agent holding `p` when meeting `p_tilde`:
/// `delta * h(p) * sum_k a_ik (p_i pt_k + p_k pt_i)`. The noise has mean zero.
pub fn expected_drift(p: &SimplexPoint, p_tilde: &SimplexPoint, cfg: &MicroConfig, game: &PayoffMatrix) -> Vec<f64> {
    let (p, pt) = (p.coords(), p_tilde.coords());
    let scale = cfg.delta * cfg.step.eval(p);
    (0..p.len())
        .map(|i| scale * (0..p.len()).map(|k| game.get(i, k) * (p[i] * pt[k] + p[k] * pt[i])).sum::<f64>())
        .collect()
}

/// Event-driven simulator owning a population.
#[derive(Debug, Clone)]
pub struct MicroSim<'a> {
    pop: AgentPopulation,
    cfg: MicroConfig,
    game: &'a PayoffMatrix,
    events: u64,
    renormalizations: u64,
}

impl<'a> MicroSim<'a> {
    pub fn new(pop: AgentPopulation, cfg: MicroConfig, game: &'a PayoffMatrix) -> Result<Self> {
        cfg.validate()?;
        game.require_antisymmetric()?;
        if pop.dim() != game.dim() {
            return Err(Error::DimensionMismatch { expected: game.dim(), found: pop.dim() });
        }
        if pop.len() != cfg.n_agents {
            return Err(Error::ConfigInvalid(format!(
                "population has {} agents but config says {}",
                pop.len(),
                cfg.n_agents
            )));
        }
        Ok(MicroSim { pop, cfg, game, events: 0, renormalizations: 0 })
    }

    pub fn population(&self) -> &AgentPopulation {
        &self.pop
    }

    pub fn into_population(self) -> AgentPopulation {
        self.pop
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn renormalizations(&self) -> u64 {
        self.renormalizations
    }

    pub fn peek_event(&self) -> InteractionEvent {
        InteractionEvent::draw(self.events, &self.pop, &self.cfg)
    }

    /// Applies an event drawn by [`MicroSim::peek_event`] and advances the clock.
    pub fn apply(&mut self, event: &InteractionEvent) -> Result<()> {
        let (a, b) = self.pop.pair_mut(event.i, event.j);
        let report = interact_in_place(a, b, event, &self.cfg, self.game).map_err(|e| match e {
            Error::StateLeftSimplex { coord, value, .. } => Error::StateLeftSimplex { time: self.pop.time, coord, value },
            other => other,
        })?;
        if report.renormalized {
            self.renormalizations += 1;
        }
        self.pop.time += event.dt;
        self.events += 1;
        Ok(())
    }

    /// Draws and applies the next event; returns the time increment.
    pub fn step(&mut self) -> Result<f64> {
        let ev = self.peek_event();
        self.apply(&ev)?;
        Ok(ev.dt)
    }
}

/// One event of the process applied to `pop`; `event_index` selects the
/// random stream (events of a run are numbered from zero).
pub fn step(
    pop: &mut AgentPopulation,
    cfg: &MicroConfig,
    game: &PayoffMatrix,
    event_index: u64,
) -> Result<InteractionEvent> {
    let ev = InteractionEvent::draw(event_index, pop, cfg);
    let (a, b) = pop.pair_mut(ev.i, ev.j);
    interact_in_place(a, b, &ev, cfg, game)?;
    pop.time += ev.dt;
    Ok(ev)
}

/// Snapshots of a micro run.
#[derive(Debug, Clone)]
pub struct MicroRun {
    /// `(time, population)` in physical time.
    pub snapshots: Vec<(f64, AgentPopulation)>,
    pub events: u64,
    pub renormalizations: u64,
}

impl MicroRun {
    /// Snapshot times expressed in the rescaled clock `tau = delta * t`.
    pub fn rescaled_times(&self, delta: f64) -> Vec<f64> {
        self.snapshots.iter().map(|(t, _)| delta * t).collect()
    }

    pub fn last(&self) -> &AgentPopulation {
        &self.snapshots.last().expect("runs always record the initial snapshot").1
    }
}

/// Snapshot instants `0, s, 2s, ...` up to and including `t_end`.
pub fn snapshot_times(t_end: f64, every: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * every;
        if t > t_end * (1.0 + 1e-12) {
            break;
        }
        times.push(t.min(t_end));
        k += 1;
    }
    if let Some(&last) = times.last() {
        if t_end - last > every * 1e-9 {
            times.push(t_end);
        }
    }
    times
}

/// Runs the process from `pop0` until physical time `t_end`, recording the
/// population every `snapshot_every` time units. Events falling after
/// `t_end` are not applied.
pub fn run_micro(
    pop0: AgentPopulation,
    t_end: f64,
    cfg: &MicroConfig,
    game: &PayoffMatrix,
    snapshot_every: f64,
) -> Result<MicroRun> {
    if !(t_end >= 0.0) {
        return Err(Error::ConfigInvalid(format!("t_end must be >= 0, got {t_end}")));
    }
    if !(snapshot_every > 0.0) {
        return Err(Error::ConfigInvalid(format!("snapshot_every must be > 0, got {snapshot_every}")));
    }
    let t0 = pop0.time;
    let times = snapshot_times(t_end, snapshot_every);
    let mut sim = MicroSim::new(pop0, cfg.clone(), game)?;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut next = 0;
    loop {
        let ev = sim.peek_event();
        let t_next = sim.pop.time + ev.dt;
        while next < times.len() && t0 + times[next] < t_next {
            let mut snap = sim.pop.clone();
            snap.time = t0 + times[next];
            snapshots.push((snap.time, snap));
            next += 1;
        }
        if next == times.len() {
            break;
        }
        sim.apply(&ev)?;
    }
    Ok(MicroRun { snapshots, events: sim.events, renormalizations: sim.renormalizations })
}
