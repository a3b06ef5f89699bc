//! Named initial distributions.
//!
//! A component is written as a short spec string:
//!
//! - `dirac:p1,...,pd` places every particle at one point;
//! - `uniform-simplex` draws from the flat distribution on the simplex;
//! - `uniform-box:LO,HI:K` draws coordinate `K` (1-based) uniformly in
//!   `[LO, HI]` and splits the remainder evenly over the other coordinates;
//! - `ball:c1,...,cd:R` draws uniformly from the disc of radius `R` around the
//!   center inside the hyperplane `sum(x) = 1`;
//! - `csv:PATH` loads particles from a file (`weight,p_1..p_d` or plain rows).
//!
//! Several components with their own mass and particle count form a mixture.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{check_simplex, SimplexPoint, SIMPLEX_TOL};
use crate::meanfield::ParticleEnsemble;
use crate::micro::AgentPopulation;
use crate::rng;

const INIT_LABEL: u64 = 0x1A17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitComponent {
    pub spec: String,
    #[serde(default = "one")]
    pub mass: f64,
    /// Particle count; defaults to the experiment's `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Pair every drawn particle with its reflection through the center (`ball` only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub antithetic: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Single(String),
    Mixture(Vec<InitComponent>),
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Dirac(Vec<f64>),
    UniformSimplex,
    UniformBox { lo: f64, hi: f64, axis: usize },
    Ball { center: Vec<f64>, radius: f64 },
    Csv(String),
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{x:?} in {s:?}: {e}"))))
        .collect()
}

fn parse_shape(spec: &str) -> Result<Shape> {
    let spec = spec.trim();
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match name {
        "dirac" => Ok(Shape::Dirac(parse_list(rest)?)),
        "uniform-simplex" if rest.is_empty() => Ok(Shape::UniformSimplex),
        "uniform-box" => {
            let (range, axis) =
                rest.split_once(':').ok_or_else(|| Error::Parse(format!("{spec:?}: expected uniform-box:LO,HI:K")))?;
            let bounds = parse_list(range)?;
            let axis: usize = axis.trim().parse().map_err(|e| Error::Parse(format!("{spec:?}: {e}")))?;
            if bounds.len() != 2 || axis == 0 {
                return Err(Error::Parse(format!("{spec:?}: expected uniform-box:LO,HI:K with K >= 1")));
            }
            Ok(Shape::UniformBox { lo: bounds[0], hi: bounds[1], axis: axis - 1 })
        }
        "ball" => {
            let (center, radius) =
                rest.split_once(':').ok_or_else(|| Error::Parse(format!("{spec:?}: expected ball:c1,...,cd:R")))?;
            let radius: f64 = radius.trim().parse().map_err(|e| Error::Parse(format!("{spec:?}: {e}")))?;
            Ok(Shape::Ball { center: parse_list(center)?, radius })
        }
        "csv" if !rest.is_empty() => Ok(Shape::Csv(rest.to_string())),
        _ => Err(Error::Parse(format!("unknown initializer {spec:?}"))),
    }
}

impl Shape {
    fn validate(&self, dim: usize, antithetic: bool) -> Result<()> {
        if antithetic && !matches!(self, Shape::Ball { .. }) {
            return Err(Error::ConfigInvalid("antithetic sampling is only defined for ball initializers".into()));
        }
        match self {
            Shape::Dirac(p) => {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
                }
                check_simplex(p)
            }
            Shape::UniformSimplex | Shape::Csv(_) => Ok(()),
            Shape::UniformBox { lo, hi, axis } => {
                if *axis >= dim {
                    return Err(Error::ConfigInvalid(format!("uniform-box axis {} exceeds d={dim}", axis + 1)));
                }
                if !(0.0 <= *lo && lo <= hi && *hi <= 1.0) {
                    return Err(Error::ConfigInvalid(format!("uniform-box needs 0 <= LO <= HI <= 1, got [{lo}, {hi}]")));
                }
                Ok(())
            }
            Shape::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: center.len() });
                }
                check_simplex(center)?;
                if !(*radius >= 0.0) {
                    return Err(Error::ConfigInvalid(format!("ball radius must be >= 0, got {radius}")));
                }
                let min = center.iter().cloned().fold(f64::INFINITY, f64::min);
                // the farthest a hyperplane disc reaches along -e_i is R sqrt((d-1)/d)
                if min - radius * ((dim as f64 - 1.0) / dim as f64).sqrt() < 0.0 {
                    return Err(Error::ConfigInvalid(format!("ball of radius {radius} around {center:?} leaves the simplex")));
                }
                Ok(())
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, dim: usize) -> Vec<f64> {
        match self {
            Shape::Dirac(p) => p.clone(),
            Shape::UniformSimplex => rng::uniform_simplex(rng, dim),
            Shape::UniformBox { lo, hi, axis } => {
                let x = lo + (hi - lo) * rng::unit(rng);
                let rest = (1.0 - x) / (dim as f64 - 1.0);
                (0..dim).map(|i| if i == *axis { x } else { rest }).collect()
            }
            Shape::Ball { center, radius } => {
                let offset = ball_offset(rng, dim, *radius);
                center.iter().zip(&offset).map(|(c, o)| c + o).collect()
            }
            Shape::Csv(_) => unreachable!("csv components are loaded, not drawn"),
        }
    }
}

/// Uniform point of the `(d-1)`-ball of radius `radius` in the hyperplane `sum(x) = 0`.
fn ball_offset<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = g.iter().sum::<f64>() / dim as f64;
        let centered: Vec<f64> = g.iter().map(|x| x - mean).collect();
        let norm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            let rho = radius * rng::unit(rng).powf(1.0 / (dim as f64 - 1.0));
            return centered.iter().map(|x| rho * x / norm).collect();
        }
    }
}

/// Reads particles from CSV: either the ensemble format with a `weight`
/// column or plain rows of `d` coordinates with equal weights.
pub fn load_csv(path: &Path) -> Result<ParticleEnsemble> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with("weight") {
        return ParticleEnsemble::read_csv(text.as_bytes());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row: Vec<f64> = rec.iter().map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(
            |e| Error::Parse(format!("{}: {e}", path.display())),
        )?;
        points.push(SimplexPoint::new(row)?);
    }
    ParticleEnsemble::uniform(&points)
}

impl InitSpec {
    pub fn components(&self) -> Vec<InitComponent> {
        match self {
            InitSpec::Single(s) => vec![InitComponent { spec: s.clone(), mass: 1.0, count: None, antithetic: false }],
            InitSpec::Mixture(c) => c.clone(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let comps = self.components();
        if comps.is_empty() {
            return Err(Error::ConfigInvalid("init mixture is empty".into()));
        }
        let total: f64 = comps.iter().map(|c| c.mass).sum();
        if comps.iter().any(|c| !(c.mass >= 0.0)) || (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::ConfigInvalid(format!("init masses must be >= 0 and sum to 1, got {total}")));
        }
        for c in &comps {
            parse_shape(&c.spec)?.validate(dim, c.antithetic)?;
            if c.count == Some(0) {
                return Err(Error::ConfigInvalid(format!("{:?}: count must be >= 1", c.spec)));
            }
            if c.antithetic && c.count.is_some_and(|n| n % 2 == 1) {
                return Err(Error::ConfigInvalid(format!("{:?}: antithetic sampling needs an even count", c.spec)));
            }
        }
        Ok(())
    }

    /// Builds the weighted ensemble; `default_count` fills components without a count.
    pub fn build(&self, dim: usize, default_count: usize, seed: u64) -> Result<ParticleEnsemble> {
        self.validate(dim)?;
        let base = rng::derive_seed(seed, INIT_LABEL);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (k, comp) in self.components().iter().enumerate() {
            let shape = parse_shape(&comp.spec)?;
            if let Shape::Csv(path) = &shape {
                let loaded = load_csv(Path::new(path))?;
                if loaded.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: loaded.dim() });
                }
                points.extend_from_slice(loaded.flat());
                weights.extend(loaded.weights().iter().map(|w| w * comp.mass));
                continue;
            }
            let count = comp.count.unwrap_or(default_count);
            if comp.antithetic && count % 2 == 1 {
                return Err(Error::ConfigInvalid(format!("{:?}: antithetic sampling needs an even count", comp.spec)));
            }
            let mut r = rng::stream(base, k as u64);
            let w = comp.mass / count as f64;
            if let (true, Shape::Ball { center, .. }) = (comp.antithetic, &shape) {
                for _ in 0..count / 2 {
                    let p = shape.draw(&mut r, dim);
                    let mirror: Vec<f64> = p.iter().zip(center).map(|(x, c)| 2.0 * c - x).collect();
                    points.extend(p);
                    points.extend(mirror);
                }
            } else {
                for _ in 0..count {
                    points.extend(shape.draw(&mut r, dim));
                }
            }
            weights.extend(std::iter::repeat_n(w, count));
        }
        // masses are exact in the config; absorb summation dust into the weights
        let total = crate::stats::sum_compensated(weights.iter().copied());
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::ConfigInvalid(format!("init weights sum to {total}")));
        }
        ParticleEnsemble::from_flat(dim, points, weights)
    }

    /// Builds an equally weighted agent population of exactly `n` agents.
    pub fn build_population(&self, dim: usize, n: usize, seed: u64) -> Result<AgentPopulation> {
        let ens = self.build(dim, n, seed)?;
        if ens.len() != n {
            return Err(Error::ConfigInvalid(format!("init produced {} agents, expected n={n}", ens.len())));
        }
        let w0 = 1.0 / n as f64;
        if ens.weights().iter().any(|w| (w - w0).abs() > 1e-15) {
            return Err(Error::ConfigInvalid("agent populations need equally weighted initial data".into()));
        }
        let points: Vec<SimplexPoint> = (0..n).map(|i| SimplexPoint::new(ens.particle(i).to_vec())).collect::<Result<_>>()?;
        AgentPopulation::new(&points)
    }

    /// The two-strategy initial datum: mass `0.3` at `p1 = 0` carried by 300
    /// particles and 700 particles uniform on `p1 in [0, 0.3]`. With
    /// `mirrored` the roles of the two strategies are swapped.
    pub fn two_strategy_reference(mirrored: bool) -> Self {
        let (atom, range) = if mirrored { ("dirac:1,0", "0.7,1") } else { ("dirac:0,1", "0,0.3") };
        InitSpec::Mixture(vec![
            InitComponent { spec: atom.into(), mass: 0.3, count: Some(300), antithetic: false },
            InitComponent { spec: format!("uniform-box:{range}:1"), mass: 0.7, count: Some(700), antithetic: false },
        ])
    }

    /// Antithetic disc of `count` particles around `center`.
    pub fn antithetic_ball(center: &[f64], radius: f64, count: usize) -> Self {
        let c: Vec<String> = center.iter().map(|x| format!("{x:?}")).collect();
        InitSpec::Mixture(vec![InitComponent {
            spec: format!("ball:{}:{radius:?}", c.join(",")),
            mass: 1.0,
            count: Some(count),
            antithetic: true,
        }])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mean_strategy;

    #[test]
    fn reference_two_strategy_datum() {
        let ens = InitSpec::two_strategy_reference(false).build(2, 1000, 0).unwrap();
        assert_eq!(ens.len(), 1000);
        let at_zero: f64 = ens.iter().filter(|(p, _)| p[0] == 0.0).map(|(_, w)| w).sum();
        assert!((at_zero - 0.3).abs() < 1e-14);
        assert!(ens.iter().all(|(p, _)| p[0] <= 0.3));
        // mean 0.7 * 0.15; each uniform atom contributes variance 0.3^2/12 / 700 at weight 0.001
        let m = mean_strategy(&ens).unwrap().coords()[0];
        let se = 0.7 * 0.3 / 12f64.sqrt() / 700f64.sqrt();
        assert!((m - 0.105).abs() < 4.0 * se, "mean {m}");
        let mirrored = InitSpec::two_strategy_reference(true).build(2, 1000, 0).unwrap();
        assert!(mirrored.iter().all(|(p, _)| p[0] >= 0.7));
    }

    #[test]
    fn named_specs() {
        let d = InitSpec::Single("dirac:0.2,0.3,0.5".into()).build(3, 4, 1).unwrap();
        assert!(d.iter().all(|(p, w)| p == [0.2, 0.3, 0.5] && w == 0.25));
        let u = InitSpec::Single("uniform-simplex".into()).build(4, 100, 1).unwrap();
        assert_eq!(u.len(), 100);
        let b = InitSpec::Single("uniform-box:0.1,0.2:2".into()).build(3, 50, 1).unwrap();
        for (p, _) in b.iter() {
            assert!((0.1..=0.2).contains(&p[1]) && (p[0] - p[2]).abs() < 1e-15);
        }
        for bad in ["dirac:0.5,0.6", "uniform-box:0.2,0.1:1", "uniform-box:0,1:4", "nope", "ball:0.3,0.3,0.4:0.5"] {
            assert!(InitSpec::Single(bad.into()).validate(3).is_err(), "{bad}");
        }
    }

    #[test]
    fn antithetic_ball_is_centered() {
        let center = [0.36, 0.32, 0.32];
        let ens = InitSpec::antithetic_ball(&center, 0.05, 200).build(3, 0, 3).unwrap();
        assert_eq!(ens.len(), 200);
        let m = ens.mean();
        for i in 0..3 {
            assert!((m[i] - center[i]).abs() < 1e-15);
        }
        for (p, _) in ens.iter() {
            let dist = p.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(dist <= 0.05 + 1e-15);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn build_is_deterministic_and_seed_dependent() {
        let spec = InitSpec::Single("uniform-simplex".into());
        assert_eq!(spec.build(3, 10, 5).unwrap(), spec.build(3, 10, 5).unwrap());
        assert_ne!(spec.build(3, 10, 5).unwrap(), spec.build(3, 10, 6).unwrap());
    }

    #[test]
    fn csv_loading_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("plain.csv");
        std::fs::write(&plain, "0.5,0.5\n0.25,0.75\n").unwrap();
        let e = load_csv(&plain).unwrap();
        assert_eq!(e.weights(), &[0.5, 0.5]);
        let weighted = dir.path().join("weighted.csv");
        let mut f = std::fs::File::create(&weighted).unwrap();
        e.write_csv(&mut f).unwrap();
        assert_eq!(load_csv(&weighted).unwrap(), e);
        let spec = InitSpec::Single(format!("csv:{}", plain.display()));
        assert_eq!(spec.build(2, 0, 0).unwrap(), e);
    }

    #[test]
    fn population_requires_equal_weights() {
        let pop = InitSpec::Single("uniform-simplex".into()).build_population(3, 20, 0).unwrap();
        assert_eq!(pop.len(), 20);
        assert!(InitSpec::two_strategy_reference(false).build_population(2, 1000, 0).is_ok());
        let uneven = InitSpec::Mixture(vec![
            InitComponent { spec: "dirac:0,1".into(), mass: 0.5, count: Some(1), antithetic: false },
            InitComponent { spec: "dirac:1,0".into(), mass: 0.5, count: Some(3), antithetic: false },
        ]);
        assert!(uneven.build_population(2, 4, 0).is_err());
    }
}
