// Finite-population fluctuations: at fixed delta the distance to the
// mean-field reference shrinks as the population grows.

use kinetic_games::experiments::{run_experiment, ExperimentConfig, RunStatus};
use serde_json::json;

fn distance(n: usize, dir: &std::path::Path) -> (f64, f64) {
    let cfg = ExperimentConfig::from_value(json!({
        "schema_version": 1,
        "experiment": "grazing",
        "game": {"kind": "two-strategy", "b": 1.0},
        "dynamics": {"c": 0.1, "deltas": [0.1], "n": n, "t_end": 5, "dt": 0.01, "snapshot_every": 0.5, "n_seeds": 6},
        "seed": 21,
        "output_dir": dir.display().to_string()
    }))
    .unwrap();
    let s = run_experiment(&cfg).unwrap();
    assert_ne!(s.status, RunStatus::Error);
    (s.scalars["mean_sliced_w1_delta_0.1"].as_f64().unwrap(), s.scalars["std_error_delta_0.1"].as_f64().unwrap())
}

#[test]
fn distance_decreases_with_population_size() {
    let dir = tempfile::tempdir().unwrap();
    let (small, se_small) = distance(500, &dir.path().join("small"));
    let (large, se_large) = distance(5000, &dir.path().join("large"));
    assert!(small - large > 2.0 * (se_small.powi(2) + se_large.powi(2)).sqrt(), "N=500 {small} vs N=5000 {large}");
}
