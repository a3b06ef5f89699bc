// Consistency between modules: the micro drift averages to the mean-field
// field, and the interior equilibrium is a rest point everywhere.

use kinetic_games::game::{interior_nash, is_nash, PayoffMatrix, SimplexPoint};
use kinetic_games::meanfield::{field_f, FieldParams, ParticleEnsemble};
use kinetic_games::metrics::mean_strategy;
use kinetic_games::micro::{expected_drift, AgentPopulation, MicroConfig};
use kinetic_games::replicator::replicator_rhs;
use kinetic_games::rng;

/// Antisymmetric game whose interior equilibrium `(1, 4, 2) / 7` is off the barycenter.
fn skewed() -> PayoffMatrix {
    PayoffMatrix::validate(&[vec![0.0, 0.5, -1.0], vec![-0.5, 0.0, 0.25], vec![1.0, -0.25, 0.0]]).unwrap()
}

fn population(d: usize, n: usize, seed: u64) -> AgentPopulation {
    let mut r = rng::stream(seed, 0);
    let points: Vec<SimplexPoint> =
        (0..n).map(|_| SimplexPoint::normalized(rng::uniform_simplex(&mut r, d)).unwrap()).collect();
    AgentPopulation::new(&points).unwrap()
}

#[test]
fn averaged_micro_drift_is_the_mean_field() {
    for (game, c) in [(PayoffMatrix::cyclic(3).unwrap(), 0.01), (skewed(), 0.05), (PayoffMatrix::cyclic(5).unwrap(), 0.002)] {
        let d = game.dim();
        let pop = population(d, 40, d as u64);
        let delta = 0.1;
        let cfg = MicroConfig::new(delta, 0.0, c, 0, pop.len()).unwrap();
        let params = FieldParams::transport(game.clone(), c).unwrap();
        let ens = ParticleEnsemble::from_population(&pop);
        let pbar = mean_strategy(&ens).unwrap();
        for k in 0..pop.len() {
            let p = pop.point(k);
            let mut avg = vec![0.0; d];
            for j in 0..pop.len() {
                let drift = expected_drift(&p, &pop.point(j), &cfg, &game);
                avg.iter_mut().zip(drift).for_each(|(a, x)| *a += x / (delta * pop.len() as f64));
            }
            let field = field_f(&p, pbar.coords(), &params);
            for i in 0..d {
                assert!((avg[i] - field[i]).abs() < 1e-14, "{avg:?} vs {field:?}");
            }
        }
    }
}

#[test]
fn population_and_ensemble_share_their_mean() {
    let pop = population(4, 333, 9);
    let a = mean_strategy(&pop).unwrap();
    let b = mean_strategy(&ParticleEnsemble::from_population(&pop)).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-15);
}

#[test]
fn interior_equilibrium_is_a_rest_point_of_every_dynamics() {
    for game in [PayoffMatrix::cyclic(3).unwrap(), PayoffMatrix::cyclic(5).unwrap(), skewed()] {
        let search = interior_nash(&game, 1e-10);
        assert_eq!(search.null_dim, 1);
        let q = search.equilibrium.unwrap();
        if game.get(0, 1) == 0.5 {
            assert!(q.max_abs_diff(&SimplexPoint::new(vec![1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0]).unwrap()) < 1e-14);
        }
        assert!(is_nash(&q, &game, 1e-12).unwrap());
        assert!(replicator_rhs(&q, &game, 1.0).iter().all(|x| x.abs() < 1e-15));
        let params = FieldParams::transport(game.clone(), 0.5).unwrap();
        assert!(field_f(&q, q.coords(), &params).iter().all(|x| x.abs() < 1e-15));
        let cfg = MicroConfig::new(0.1, 0.0, 0.5, 0, 2).unwrap();
        assert!(expected_drift(&q, &q, &cfg, &game).iter().all(|x| x.abs() < 1e-15));
    }
}
