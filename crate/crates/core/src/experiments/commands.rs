//! The named experiments. Each command reads a validated configuration,
//! writes its artifacts and records pass/fail checks; errors propagate to the
//! caller, which still writes the summary.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{interior_nash, is_nash, nash_residual, PayoffMatrix, SimplexPoint, NASH_TOL};
use crate::meanfield::{
    field_f, integrate_transport, integrate_two_strategies, FieldParams, ParticleEnsemble, TransportOptions,
};
use crate::metrics::{hyperplane_directions, marginal_histogram, sliced_w1, sliced_w1_with};
use crate::micro::{run_micro, snapshot_times, MicroConfig};
use crate::replicator::{estimate_period, integrate_rk4, rest_point_residual, temporal_mean, ReplicatorTrajectory};
use crate::rng::derive_seed;
use crate::stats::{sum_compensated, RunningStats};

use super::artifacts::{coord_header, Check, RunArtifacts};
use super::config::ExperimentConfig;
use super::init::InitSpec;

/// Label mixed into the base seed for per-replica micro streams.
const REPLICA_LABEL: u64 = 0x6EA2;

fn steps_per(every: f64, dt: f64) -> usize {
    ((every / dt).round() as usize).max(1)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Interior Nash point of the game, or the error naming the null-space dimension.
fn nash_point(game: &PayoffMatrix) -> Result<SimplexPoint> {
    let search = interior_nash(game, NASH_TOL);
    search.equilibrium.ok_or(Error::NoInteriorEquilibrium { null_dim: search.null_dim })
}

/// `q + s (e_1 - q)`: a point displaced from `q` toward the first vertex.
fn displaced(q: &SimplexPoint, s: f64) -> Vec<f64> {
    q.coords().iter().enumerate().map(|(i, x)| x + s * (if i == 0 { 1.0 } else { 0.0 } - x)).collect()
}

pub fn two_strategies(cfg: &ExperimentConfig, art: &mut RunArtifacts) -> Result<()> {
    let game = cfg.game.build()?;
    let p = cfg.resolved();
    let b = game.get(0, 1);
    let init = cfg.init.clone().unwrap_or_else(|| InitSpec::two_strategy_reference(b < 0.0));
    let ens0 = init.build(2, p.n, cfg.seed)?;
    let p1: Vec<f64> = ens0.iter().map(|(x, _)| x[0]).collect();
    let run = integrate_two_strategies(&p1, ens0.weights(), b, p.c, p.t_end, p.dt, steps_per(p.snapshot_every, p.dt))?;

    let hists = (0..run.times.len())
        .map(|k| Ok((run.times[k], marginal_histogram(&run.as_ensemble(k)?, 0, p.hist_bins)?)))
        .collect::<Result<Vec<_>>>()?;
    art.write_histograms("p1", &hists)?;
    let rows: Vec<Vec<f64>> = run.mean_times.iter().zip(&run.means).map(|(t, m)| vec![*t, *m, 1.0 - m]).collect();
    art.write_timeseries("mean", &coord_header("time", 2, &[]), &rows)?;
    let last = run.as_ensemble(run.snapshots.len() - 1)?;
    art.write_ensemble_snapshots(&[&ens0, &last], &cfg.hash())?;

    // b > 0 freezes the face p1 = 0 and pushes everything else to 1
    let (frozen, absorbing) = if b > 0.0 { (0.0, 1.0) } else { (1.0, 0.0) };
    let initial_frozen = sum_compensated(p1.iter().zip(ens0.weights()).filter(|(x, _)| **x == frozen).map(|(_, w)| *w));
    let frozen_mass = run.mass_near(frozen, cfg.threshold("eps_frozen"));
    let absorbed_mass = run.mass_near(absorbing, cfg.threshold("eps_absorbed"));
    let final_mean = *run.means.last().unwrap();
    let monotone = run.snapshots.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, c)| (c - a) * b >= -1e-15));

    art.scalar("b", b);
    art.scalar("initial_mean_p1", run.means[0]);
    art.scalar("initial_frozen_mass", initial_frozen);
    art.scalar("final_frozen_mass", frozen_mass);
    art.scalar("final_absorbed_mass", absorbed_mass);
    art.scalar("final_mean_p1", final_mean);
    art.check(Check::near("frozen_mass", frozen_mass, initial_frozen, cfg.threshold("frozen_mass_tol")));
    art.check(Check::at_least("absorbed_mass", absorbed_mass, cfg.threshold("absorbed_mass_min")));
    art.check(Check::within("final_mean", final_mean, cfg.threshold("final_mean_min"), cfg.threshold("final_mean_max")));
    art.check(Check::is_true("monotone_particles", monotone));
    Ok(())
}

/// Distance of each δ replica from the mean-field reference on the τ grid.
#[derive(Debug, Clone)]
struct Replica {
    delta: f64,
    index: usize,
    distances: Vec<(f64, f64)>,
}

pub fn grazing(cfg: &ExperimentConfig, art: &mut RunArtifacts) -> Result<()> {
    let game = cfg.game.build()?;
    let p = cfg.resolved();
    let d = game.dim();
    let init = cfg.init.clone().unwrap_or_else(|| InitSpec::Single("uniform-simplex".into()));
    let pop0 = init.build_population(d, p.n, cfg.seed)?;
    let ens0 = ParticleEnsemble::from_population(&pop0);

    let params = FieldParams::transport(game.clone(), p.c)?;
    let opts = TransportOptions::new(p.t_end, p.dt).record_every(steps_per(p.snapshot_every, p.dt)).coupling(p.coupling);
    let reference = integrate_transport(&ens0, &params, &opts)?;
    let taus = snapshot_times(p.t_end, p.snapshot_every);
    let targets = taus.iter().map(|t| reference.ensemble_at(*t)).collect::<Result<Vec<_>>>()?;
    let dirs = hyperplane_directions(d, p.n_proj, cfg.seed);

    let mut deltas = p.deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let jobs: Vec<(f64, usize)> = deltas.iter().flat_map(|dl| (0..p.n_seeds).map(move |k| (*dl, k))).collect();
    // replicas are independent; the reduction below runs in job order
    let replicas = jobs
        .par_iter()
        .map(|&(delta, k)| {
            let mcfg = MicroConfig::new(delta, p.r, p.c, derive_seed(cfg.seed, REPLICA_LABEL + k as u64), p.n)?
                .with_clock(p.clock);
            let run = run_micro(pop0.clone(), p.t_end / delta, &mcfg, &game, p.snapshot_every / delta)?;
            let distances = run
                .snapshots
                .iter()
                .zip(&targets)
                .map(|((t, pop), target)| (delta * t, sliced_w1_with(pop, target, &dirs)))
                .collect();
            Ok(Replica { delta, index: k, distances })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<Vec<f64>> = replicas
        .iter()
        .flat_map(|r| r.distances.iter().map(move |(tau, w)| vec![r.delta, r.index as f64, *tau, *w]))
        .collect();
    art.write_timeseries("grazing", &["delta", "seed_index", "tau", "sliced_w1"].map(String::from), &rows)?;

    let table: Vec<(f64, RunningStats)> = deltas
        .iter()
        .map(|dl| (*dl, replicas.iter().filter(|r| r.delta == *dl).map(|r| r.distances.last().unwrap().1).collect()))
        .collect();
    let table_rows: Vec<Vec<f64>> =
        table.iter().map(|(dl, s)| vec![*dl, s.mean(), s.std_error(), s.count() as f64]).collect();
    let rel = art.write_table("grazing_table.csv", &["delta", "mean_sliced_w1", "std_error", "n_seeds"].map(String::from), &table_rows)?;
    art.files.tables.push(rel);

    let allowance = cfg.threshold("trend_se_allowance");
    for w in table.windows(2) {
        let ((big, sb), (small, ss)) = (&w[0], &w[1]);
        let se = (sb.std_error().powi(2) + ss.std_error().powi(2)).sqrt();
        art.check(Check::at_most(&format!("trend_{big}_to_{small}"), ss.mean() - sb.mean(), allowance * se));
    }
    for (dl, s) in &table {
        art.scalar(&format!("mean_sliced_w1_delta_{dl}"), s.mean());
        art.scalar(&format!("std_error_delta_{dl}"), s.std_error());
    }
    art.scalar("tau_end", p.t_end);
    art.scalar("n_agents", p.n as u64);
    Ok(())
}

pub fn rps_periodic(cfg: &ExperimentConfig, art: &mut RunArtifacts) -> Result<()> {
    let game = cfg.game.build()?;
    let p = cfg.resolved();
    let d = game.dim();
    let q = nash_point(&game)?;
    let init = cfg.init.clone().unwrap_or_else(|| InitSpec::antithetic_ball(&displaced(&q, 0.045), 0.05, p.n));
    let ens0 = init.build(d, p.n, cfg.seed)?;
    let m0 = ens0.mean();
    if sup_diff(&m0, q.coords()) <= cfg.threshold("mean_at_nash_tol") {
        return Err(Error::MeanAtNash);
    }
    let params = FieldParams::transport(game.clone(), p.c)?;
    let c = p.c;

    let opts = TransportOptions::new(p.t_end, p.dt).record_every(usize::MAX).coupling(p.coupling);
    let run = integrate_transport(&ens0, &params, &opts)?;
    let rows: Vec<Vec<f64>> = run
        .step_times
        .iter()
        .zip(&run.means)
        .zip(&run.min_products)
        .map(|((t, m), mp)| std::iter::once(*t).chain(m.iter().copied()).chain([*mp]).collect())
        .collect();
    art.write_timeseries("mean", &coord_header("time", d, &["min_product"]), &rows)?;
    let min_product = run.min_products.iter().cloned().fold(f64::INFINITY, f64::min);
    art.scalar("min_support_product", min_product);
    art.check(Check::at_least("support_on_plateau", min_product, c));

    let states = run.means.iter().map(|m| SimplexPoint::new(m.clone())).collect::<Result<Vec<_>>>()?;
    let traj = ReplicatorTrajectory::from_samples(run.step_times.clone(), states, 2.0 * c)?;
    let Some(period) = estimate_period(&traj) else {
        art.check(Check::is_true("period_found", false));
        return Ok(());
    };
    art.scalar("period", period);
    art.check(Check::is_true("period_found", true));

    // v at 0, T/2, T, 3T/2, 2T
    let mut checkpoints = vec![ens0.clone()];
    for _ in 0..4 {
        let prev = checkpoints.last().unwrap();
        let leg = integrate_transport(prev, &params, &TransportOptions::new(period / 2.0, p.dt).record_every(usize::MAX).coupling(p.coupling))?;
        checkpoints.push(leg.last().clone());
    }
    let w1_max = cfg.threshold("periodicity_w1_max");
    for (k, label) in ["0", "half_period", "period"].iter().enumerate() {
        let w = sliced_w1(&checkpoints[k + 2], &checkpoints[k], p.n_proj, cfg.seed)?;
        art.check(Check::at_most(&format!("periodicity_w1_t_{label}"), w, w1_max));
    }

    let rotation = (game.to_dmatrix() * (c * period / d as f64)).exp();
    let at_period = &checkpoints[2];
    let mut rotation_err = 0.0_f64;
    let mut reflection_err = 0.0_f64;
    for k in 0..ens0.len() {
        let p0 = DVector::from_column_slice(ens0.particle(k));
        let rotated = &rotation * &p0;
        rotation_err = rotation_err.max(sup_diff(at_period.particle(k), rotated.as_slice()));
        let reflected: Vec<f64> = p0.iter().zip(&m0).map(|(x, m)| 2.0 * m - x).collect();
        reflection_err = reflection_err.max(sup_diff(at_period.particle(k), &reflected));
    }
    art.check(Check::at_most("rotation", rotation_err, cfg.threshold("rotation_max")));
    // diagnostic only: distance of p(T) from the point reflection of p(0) through m(0)
    art.scalar("reflection_through_initial_mean", reflection_err);

    let (tm, _) = temporal_mean(&traj, 0.0, period.min(traj.end()))?;
    art.check(Check::at_most("temporal_mean", tm.max_abs_diff(&q), cfg.threshold("temporal_mean_max")));
    art.scalar("temporal_mean", tm.coords().to_vec());
    art.scalar("initial_mean", m0);
    let refs: Vec<&ParticleEnsemble> = checkpoints.iter().collect();
    art.write_ensemble_snapshots(&refs, &cfg.hash())?;
    Ok(())
}

/// Values of the four equilibrium checks at one point.
#[derive(Debug, Clone, Copy)]
struct FourChecks {
    payoff_residual: f64,
    rest_residual: f64,
    meanfield_residual: f64,
    is_nash: bool,
}

fn four_checks(point: &SimplexPoint, params: &FieldParams, p: &super::config::Resolved, tol: f64, seed: u64) -> Result<FourChecks> {
    let field = field_f(point, point.coords(), params);
    let ens = ParticleEnsemble::uniform(std::slice::from_ref(point))?;
    let run = integrate_transport(&ens, params, &TransportOptions::new(p.t_end, p.dt).record_every(usize::MAX))?;
    let drift = sliced_w1(run.last(), &ens, p.n_proj, seed)?;
    Ok(FourChecks {
        payoff_residual: nash_residual(point, &params.game),
        rest_residual: rest_point_residual(point, &params.game),
        meanfield_residual: field.iter().map(|x| x.abs()).fold(drift, f64::max),
        is_nash: is_nash(point, &params.game, tol)?,
    })
}

pub fn folk_check(cfg: &ExperimentConfig, art: &mut RunArtifacts) -> Result<()> {
    let game = cfg.game.build()?;
    let p = cfg.resolved();
    let tol = cfg.threshold("tol");
    let q = nash_point(&game)?;
    let params = FieldParams::transport(game, p.c)?;
    let at_q = four_checks(&q, &params, &p, tol, cfg.seed)?;
    art.scalar("nash_point", q.coords().to_vec());
    art.check(Check::at_most("payoff_residual", at_q.payoff_residual, tol));
    art.check(Check::at_most("rest_point_residual", at_q.rest_residual, tol));
    art.check(Check::at_most("meanfield_stationarity", at_q.meanfield_residual, tol));
    art.check(Check::is_true("is_nash", at_q.is_nash));

    let control = SimplexPoint::new(cfg.control_point.clone().unwrap_or_else(|| displaced(&q, 0.25)))?;
    let ctl = four_checks(&control, &params, &p, tol, cfg.seed)?;
    art.scalar("control_point", control.coords().to_vec());
    art.scalar("control_payoff_residual", ctl.payoff_residual);
    art.scalar("control_rest_point_residual", ctl.rest_residual);
    art.scalar("control_meanfield_residual", ctl.meanfield_residual);
    art.scalar("control_is_nash", ctl.is_nash);
    let all_fail =
        ctl.payoff_residual > tol && ctl.rest_residual > tol && ctl.meanfield_residual > tol && !ctl.is_nash;
    art.check(Check::is_true("control_fails_all_four", all_fail));
    Ok(())
}

pub fn meanfield_vs_replicator(cfg: &ExperimentConfig, art: &mut RunArtifacts) -> Result<()> {
    let game = cfg.game.build()?;
    let p = cfg.resolved();
    let d = game.dim();
    let init = match &cfg.init {
        Some(i) => i.clone(),
        None => {
            let centre = nash_point(&game).unwrap_or_else(|_| SimplexPoint::barycenter(d));
            InitSpec::antithetic_ball(&displaced(&centre, 0.045), 0.02, p.n)
        }
    };
    let ens0 = init.build(d, p.n, cfg.seed)?;
    if ens0.min_product() < p.c {
        return Err(Error::SupportLeftPlateau { time: 0.0, min_product: ens0.min_product() });
    }
    let params = FieldParams::transport(game.clone(), p.c)?;
    let opts = TransportOptions::new(p.t_end, p.dt).record_every(usize::MAX).coupling(p.coupling);
    let run = integrate_transport(&ens0, &params, &opts)?;
    let rep = integrate_rk4(&SimplexPoint::new(ens0.mean())?, &game, p.t_end, p.dt, 2.0 * p.c)?;

    let every = steps_per(p.snapshot_every, p.dt);
    let mut rows = Vec::new();
    let mut gap = 0.0_f64;
    for (k, (m, r)) in run.means.iter().zip(&rep.states).enumerate() {
        let g = sup_diff(m, r.coords());
        gap = gap.max(g);
        if k % every == 0 || k + 1 == run.means.len() {
            let mut row = vec![run.step_times[k]];
            row.extend(m);
            row.extend(r.coords());
            row.extend([g, run.min_products[k]]);
            rows.push(row);
        }
    }
    let mut header = coord_header("time", d, &[]);
    header.extend((1..=d).map(|i| format!("rep_{i}")));
    header.extend(["gap".to_string(), "min_product".to_string()]);
    art.write_timeseries("mean", &header, &rows)?;

    if let Some(k) = run.min_products.iter().position(|x| *x < p.c) {
        return Err(Error::SupportLeftPlateau { time: run.step_times[k], min_product: run.min_products[k] });
    }
    art.scalar("sup_gap", gap);
    art.scalar("rate_scale", 2.0 * p.c);
    art.check(Check::at_most("mean_vs_replicator_gap", gap, cfg.threshold("gap_max")));
    Ok(())
}

pub fn micro_free_run(cfg: &ExperimentConfig, art: &mut RunArtifacts) -> Result<()> {
    let game = cfg.game.build()?;
    let p = cfg.resolved();
    let d = game.dim();
    let init = cfg.init.clone().unwrap_or_else(|| InitSpec::Single("uniform-simplex".into()));
    let pop0 = init.build_population(d, p.n, cfg.seed)?;
    let mcfg = MicroConfig::new(p.delta, p.r, p.c, cfg.seed, p.n)?.with_clock(p.clock);
    let run = run_micro(pop0, p.t_end, &mcfg, &game, p.snapshot_every)?;

    let mut rows = Vec::new();
    let mut hists = Vec::new();
    let mut inside = true;
    for (t, pop) in &run.snapshots {
        let ens = ParticleEnsemble::from_population(pop);
        let mut row = vec![*t, p.delta * t];
        row.extend(ens.mean());
        rows.push(row);
        hists.push((*t, marginal_histogram(pop, 0, p.hist_bins)?));
        inside &= pop.iter().all(|x| crate::game::check_simplex(x).is_ok());
    }
    let mut header = vec!["time".to_string(), "tau".to_string()];
    header.extend((1..=d).map(|i| format!("p_{i}")));
    art.write_timeseries("mean", &header, &rows)?;
    art.write_histograms("p1", &hists)?;
    let first = &run.snapshots[0];
    let last = run.snapshots.last().unwrap();
    art.write_population_snapshots(&[(first.0, &first.1), (last.0, &last.1)], &cfg.hash())?;
    art.scalar("events", run.events);
    art.scalar("renormalizations", run.renormalizations);
    art.check(Check::is_true("simplex_membership", inside));
    Ok(())
}
