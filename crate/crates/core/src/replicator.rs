//! Replicator dynamics `p_i' = s * p_i ((A p)_i - p^T A p)` with a rate scale
//! `s` (1 for the classical equation, `2c` for the population mean on the
//! plateau of the step function).

use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, SimplexPoint};
use crate::ode::{rk4_step, settle_simplex, step_schedule, Rk4Workspace};

/// Sampled solution of the replicator equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatorTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SimplexPoint>,
    pub rate_scale: f64,
}

impl ReplicatorTrajectory {
    /// Builds a trajectory from externally produced samples (e.g. an ensemble mean).
    pub fn from_samples(times: Vec<f64>, states: Vec<SimplexPoint>, rate_scale: f64) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::ConfigInvalid("times and states must be nonempty and of equal length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ConfigInvalid("trajectory times must be strictly increasing".into()));
        }
        Ok(ReplicatorTrajectory { times, states, rate_scale })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last(&self) -> &SimplexPoint {
        self.states.last().unwrap()
    }

    /// Linear interpolation of the state at time `t` inside the span.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let (start, end) = (self.start(), self.end());
        if t < start - 1e-12 || t > end + 1e-12 {
            return Err(Error::RangeOutOfSpan { t0: t, t1: t, start, end });
        }
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            k if k >= self.len() => self.len() - 2,
            k => k - 1,
        };
        if self.len() == 1 {
            return Ok(self.states[0].coords().to_vec());
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(self.states[k].coords().iter().zip(self.states[k + 1].coords()).map(|(a, b)| a + w * (b - a)).collect())
    }
}

/// Writes the replicator vector field into `out`.
pub fn replicator_rhs_into(p: &[f64], game: &PayoffMatrix, rate_scale: f64, out: &mut [f64]) {
    game.apply_into(p, out);
    let mean_payoff: f64 = p.iter().zip(out.iter()).map(|(x, y)| x * y).sum();
    debug_assert!(
        !game.is_antisymmetric() || mean_payoff.abs() <= 1e-12,
        "p^T A p = {mean_payoff} for antisymmetric A"
    );
    for (o, x) in out.iter_mut().zip(p) {
        *o = rate_scale * x * (*o - mean_payoff);
    }
}

pub fn replicator_rhs(p: &SimplexPoint, game: &PayoffMatrix, rate_scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.dim()];
    replicator_rhs_into(p.coords(), game, rate_scale, &mut out);
    out
}

/// Integrates from `p0` with classical RK4 and returns every step.
pub fn integrate_rk4(
    p0: &SimplexPoint,
    game: &PayoffMatrix,
    t_end: f64,
    dt: f64,
    rate_scale: f64,
) -> Result<ReplicatorTrajectory> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::ConfigInvalid(format!("need dt > 0 and t_end > 0, got dt={dt}, t_end={t_end}")));
    }
    if p0.dim() != game.dim() {
        return Err(Error::DimensionMismatch { expected: game.dim(), found: p0.dim() });
    }
    game.require_antisymmetric()?;
    let steps = step_schedule(t_end, dt);
    let mut times = Vec::with_capacity(steps.len() + 1);
    let mut states = Vec::with_capacity(steps.len() + 1);
    let mut y = p0.coords().to_vec();
    let mut ws = Rk4Workspace::new(y.len());
    let mut t = 0.0;
    times.push(t);
    states.push(p0.clone());
    for (k, h) in steps.iter().enumerate() {
        rk4_step(&mut y, *h, &mut ws, |x, out| replicator_rhs_into(x, game, rate_scale, out));
        t = if k + 1 == steps.len() { t_end } else { (k + 1) as f64 * dt };
        settle_simplex(&mut y, t)?;
        times.push(t);
        states.push(SimplexPoint::from_trusted(y.clone()));
    }
    Ok(ReplicatorTrajectory { times, states, rate_scale })
}

/// `||replicator_rhs(p, A, 1)||_inf`.
pub fn rest_point_residual(p: &SimplexPoint, game: &PayoffMatrix) -> f64 {
    replicator_rhs(p, game, 1.0).iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Time average of the trajectory over `[t0, t1]` by the trapezoidal rule.
///
/// Returns the averaged point and the renormalization residue `|sum - 1|`.
pub fn temporal_mean(traj: &ReplicatorTrajectory, t0: f64, t1: f64) -> Result<(SimplexPoint, f64)> {
    let (start, end) = (traj.start(), traj.end());
    if !(t1 > t0) || t0 < start - 1e-12 || t1 > end + 1e-12 {
        return Err(Error::RangeOutOfSpan { t0, t1, start, end });
    }
    let d = traj.dim();
    let mut acc = vec![0.0; d];
    let mut add_segment = |ta: f64, a: &[f64], tb: f64, b: &[f64]| {
        for k in 0..d {
            acc[k] += 0.5 * (tb - ta) * (a[k] + b[k]);
        }
    };
    let mut prev_t = t0;
    let mut prev = traj.state_at(t0)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t <= t0 {
            continue;
        }
        if *t >= t1 {
            break;
        }
        add_segment(prev_t, &prev, *t, s.coords());
        prev_t = *t;
        prev = s.coords().to_vec();
    }
    let last = traj.state_at(t1)?;
    add_segment(prev_t, &prev, t1, &last);
    let span = t1 - t0;
    acc.iter_mut().for_each(|x| *x /= span);
    let residue = (acc.iter().sum::<f64>() - 1.0).abs();
    let mean = SimplexPoint::normalized(acc.iter().map(|x| x.max(0.0)).collect())?;
    Ok((mean, residue))
}

/// Times at which `p_1` crosses `level` upward, refined by linear interpolation.
pub fn upward_crossings(traj: &ReplicatorTrajectory, level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..traj.len() {
        let a = traj.states[k - 1].coords()[0] - level;
        let b = traj.states[k].coords()[0] - level;
        if a < 0.0 && b >= 0.0 {
            let (t0, t1) = (traj.times[k - 1], traj.times[k]);
            out.push(t0 + (t1 - t0) * (-a) / (b - a));
        }
    }
    out
}

/// Relative spread above which crossing intervals are considered aperiodic.
pub const PERIOD_SPREAD_TOL: f64 = 0.05;

/// Estimates the period from upward crossings of the first coordinate
/// through its trajectory mean. Needs at least three crossings whose gaps
/// agree within 5 %.
pub fn estimate_period(traj: &ReplicatorTrajectory) -> Option<f64> {
    if traj.len() < 3 {
        return None;
    }
    let level = traj.states.iter().map(|s| s.coords()[0]).sum::<f64>() / traj.len() as f64;
    let crossings = upward_crossings(traj, level);
    if crossings.len() < 3 {
        return None;
    }
    let gaps: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let (lo, hi) = gaps.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), g| (lo.min(*g), hi.max(*g)));
    if mean <= 0.0 || (hi - lo) / mean > PERIOD_SPREAD_TOL {
        return None;
    }
    Some(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{interior_nash, is_nash, NASH_TOL};

    fn pt(v: &[f64]) -> SimplexPoint {
        SimplexPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let cyc = PayoffMatrix::cyclic(3).unwrap();
        assert!(replicator_rhs(&SimplexPoint::barycenter(3), &cyc, 1.0).iter().all(|x| x.abs() < 1e-16));
        // exact rational hand evaluation: A p = (0, 0.25, -0.25), p^T A p = 0
        let rps = PayoffMatrix::rps(1.0, 1.0).unwrap();
        let p = pt(&[0.5, 0.25, 0.25]);
        assert_eq!(rps.apply(p.coords()), vec![0.0, 0.25, -0.25]);
        assert_eq!(replicator_rhs(&p, &rps, 1.0), vec![0.0, 0.0625, -0.0625]);
        for i in 0..3 {
            assert!(replicator_rhs(&SimplexPoint::vertex(3, i), &cyc, 1.0).iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn residual_examples() {
        let cyc = PayoffMatrix::cyclic(3).unwrap();
        let q = interior_nash(&cyc, NASH_TOL).equilibrium.unwrap();
        assert!(rest_point_residual(&q, &cyc) <= 1e-12);
        assert_eq!(rest_point_residual(&SimplexPoint::vertex(3, 2), &cyc), 0.0);
        assert!((rest_point_residual(&pt(&[0.5, 0.25, 0.25]), &cyc) - 0.0625).abs() < 1e-16);
        assert!(is_nash(&q, &cyc, 1e-10).unwrap());
    }

    #[test]
    fn rest_point_is_constant() {
        let cyc = PayoffMatrix::cyclic(3).unwrap();
        let n = SimplexPoint::barycenter(3);
        let traj = integrate_rk4(&n, &cyc, 7.0, 0.1, 1.0).unwrap();
        assert!(traj.states.iter().all(|s| s.max_abs_diff(&n) < 1e-15));
        assert_eq!(traj.end(), 7.0);
    }

    #[test]
    fn product_is_conserved_on_cyclic_orbit() {
        let cyc = PayoffMatrix::cyclic(3).unwrap();
        let p0 = pt(&[0.5, 0.25, 0.25]);
        let traj = integrate_rk4(&p0, &cyc, 100.0, 0.01, 1.0).unwrap();
        let h0 = p0.product();
        for s in &traj.states {
            assert!(((s.product() - h0) / h0).abs() < 1e-6);
            assert!(cyc.bilinear(s.coords(), s.coords()).abs() < 1e-12);
        }
    }

    #[test]
    fn rk4_has_fourth_order() {
        let cyc = PayoffMatrix::cyclic(3).unwrap();
        let p0 = pt(&[0.5, 0.25, 0.25]);
        let reference = integrate_rk4(&p0, &cyc, 20.0, 0.01 / 10.0, 1.0).unwrap();
        let err = |dt: f64| integrate_rk4(&p0, &cyc, 20.0, dt, 1.0).unwrap().last().max_abs_diff(reference.last());
        let ratio = err(0.2) / err(0.1);
        assert!((8.0..32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn bad_step_is_reported() {
        let a = PayoffMatrix::two_strategy(1.0).unwrap();
        let err = integrate_rk4(&pt(&[0.999, 0.001]), &a, 2000.0, 2000.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::StateLeftSimplex { .. }), "{err:?}");
        assert!(integrate_rk4(&pt(&[0.5, 0.5]), &a, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn temporal_mean_of_constant_is_constant() {
        let q = pt(&[0.2, 0.3, 0.5]);
        let traj = ReplicatorTrajectory::from_samples(vec![0.0, 1.0, 2.0], vec![q.clone(); 3], 1.0).unwrap();
        let (m, residue) = temporal_mean(&traj, 0.25, 1.75).unwrap();
        assert!(m.max_abs_diff(&q) < 1e-15 && residue < 1e-15);
        assert!(matches!(temporal_mean(&traj, 0.0, 3.0), Err(Error::RangeOutOfSpan { .. })));
    }

    #[test]
    fn cyclic_orbit_is_periodic_with_mean_at_center() {
        let cyc = PayoffMatrix::cyclic(3).unwrap();
        let traj = integrate_rk4(&pt(&[0.5, 0.25, 0.25]), &cyc, 60.0, 0.01, 1.0).unwrap();
        let period = estimate_period(&traj).expect("periodic orbit");
        for t in [0.0, 3.7, 11.1, 20.0] {
            let a = traj.state_at(t).unwrap();
            let b = traj.state_at(t + period).unwrap();
            let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(gap <= 1e-4, "gap {gap} at t={t}");
        }
        let (m, residue) = temporal_mean(&traj, 2.0, 2.0 + period).unwrap();
        assert!(m.max_abs_diff(&SimplexPoint::barycenter(3)) < 1e-3, "{m:?}");
        assert!(residue < 1e-12);
    }

    #[test]
    fn cyclic_five_mean_over_period() {
        let cyc = PayoffMatrix::cyclic(5).unwrap();
        // generic orbits mix two incommensurate linear frequencies; start on a
        // single circulant eigenmode so the orbit is periodic to leading order
        let p0 = SimplexPoint::normalized(
            (0..5).map(|j| 0.2 + 0.01 * (2.0 * std::f64::consts::PI * j as f64 / 5.0).cos()).collect(),
        )
        .unwrap();
        let traj = integrate_rk4(&p0, &cyc, 200.0, 0.01, 1.0).unwrap();
        // long-time average oracle
        let (long, _) = temporal_mean(&traj, 0.0, 200.0).unwrap();
        assert!(long.max_abs_diff(&SimplexPoint::barycenter(5)) < 1e-2);
        let period = estimate_period(&traj).expect("periodic orbit near center");
        let (m, _) = temporal_mean(&traj, 0.0, period).unwrap();
        assert!(m.max_abs_diff(&SimplexPoint::barycenter(5)) < 1e-3, "{m:?}");
    }

    #[test]
    fn no_period_for_constant_or_monotone() {
        let cyc = PayoffMatrix::cyclic(3).unwrap();
        let flat = integrate_rk4(&SimplexPoint::barycenter(3), &cyc, 10.0, 0.1, 1.0).unwrap();
        assert_eq!(estimate_period(&flat), None);
        let two = PayoffMatrix::two_strategy(1.0).unwrap();
        let mono = integrate_rk4(&pt(&[0.1, 0.9]), &two, 50.0, 0.1, 1.0).unwrap();
        assert_eq!(estimate_period(&mono), None);
    }
}
