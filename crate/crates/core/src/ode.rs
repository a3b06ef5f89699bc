//! Classical fourth-order Runge-Kutta stepping and the simplex clamping policy
//! shared by every deterministic integrator in the crate.

use crate::error::{Error, Result};
use crate::game::SIMPLEX_TOL;

/// Coordinates below `-CLAMP_BAND` after a step mean the step size is too large.
pub const CLAMP_BAND: f64 = 1e-12;

/// Work buffers for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Rk4Workspace { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], stage: vec![0.0; n] }
    }
}

/// Advances `y` by one classical RK4 step of an autonomous system
/// `y' = f(y)`, where `f(y, out)` writes the derivative into `out`.
pub fn rk4_step<F>(y: &mut [f64], dt: f64, ws: &mut Rk4Workspace, mut f: F)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = y.len();
    debug_assert_eq!(ws.k1.len(), n);
    f(y, &mut ws.k1);
    for i in 0..n {
        ws.stage[i] = y[i] + 0.5 * dt * ws.k1[i];
    }
    f(&ws.stage, &mut ws.k2);
    for i in 0..n {
        ws.stage[i] = y[i] + 0.5 * dt * ws.k2[i];
    }
    f(&ws.stage, &mut ws.k3);
    for i in 0..n {
        ws.stage[i] = y[i] + dt * ws.k3[i];
    }
    f(&ws.stage, &mut ws.k4);
    for i in 0..n {
        y[i] += dt / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

/// Step sizes covering `[0, t_end]`: uniform `dt` with a shortened final step.
pub fn step_schedule(t_end: f64, dt: f64) -> Vec<f64> {
    let full = ((t_end / dt) * (1.0 + 1e-12)).floor() as usize;
    let mut steps = vec![dt; full];
    let rest = t_end - full as f64 * dt;
    if rest > dt * 1e-9 {
        steps.push(rest);
    }
    steps
}

/// Applies the clamping policy to one simplex-valued block after a step:
/// coordinates in `[-CLAMP_BAND, 0)` are zeroed and the block renormalized,
/// anything lower is an error. A sum drifting more than [`SIMPLEX_TOL`] away
/// from one is also renormalized. Returns whether the block was modified.
pub fn settle_simplex(block: &mut [f64], time: f64) -> Result<bool> {
    let mut touched = false;
    for (coord, x) in block.iter_mut().enumerate() {
        if *x < 0.0 {
            if *x < -CLAMP_BAND || !x.is_finite() {
                return Err(Error::StateLeftSimplex { time, coord, value: *x });
            }
            *x = 0.0;
            touched = true;
        } else if !x.is_finite() {
            return Err(Error::StateLeftSimplex { time, coord, value: *x });
        }
    }
    let total: f64 = block.iter().sum();
    if touched || (total - 1.0).abs() > SIMPLEX_TOL {
        block.iter_mut().for_each(|x| *x /= total);
        touched = true;
    }
    Ok(touched)
}

/// Scalar version of the clamping policy for a probability in `[0, 1]`.
pub fn settle_unit_interval(x: &mut f64, time: f64) -> Result<()> {
    if *x < 0.0 {
        if *x < -CLAMP_BAND {
            return Err(Error::StateLeftSimplex { time, coord: 0, value: *x });
        }
        *x = 0.0;
    } else if *x > 1.0 {
        if *x > 1.0 + CLAMP_BAND {
            return Err(Error::StateLeftSimplex { time, coord: 1, value: 1.0 - *x });
        }
        *x = 1.0;
    }
    Ok(())
}
