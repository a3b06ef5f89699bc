//! Declarative experiment configuration: a single JSON document with an
//! explicit `schema_version`, validated in full before any computation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, StepFunction};
use crate::meanfield::MeanCoupling;
use crate::micro::{EventClock, MicroConfig};

use super::init::InitSpec;

/// The only schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TwoStrategies,
    Grazing,
    RpsPeriodic,
    FolkCheck,
    MeanfieldVsReplicator,
    MicroFreeRun,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::TwoStrategies,
        ExperimentKind::Grazing,
        ExperimentKind::RpsPeriodic,
        ExperimentKind::FolkCheck,
        ExperimentKind::MeanfieldVsReplicator,
        ExperimentKind::MicroFreeRun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TwoStrategies => "two_strategies",
            ExperimentKind::Grazing => "grazing",
            ExperimentKind::RpsPeriodic => "rps_periodic",
            ExperimentKind::FolkCheck => "folk_check",
            ExperimentKind::MeanfieldVsReplicator => "meanfield_vs_replicator",
            ExperimentKind::MicroFreeRun => "micro_free_run",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExperimentKind::TwoStrategies => "particle solution of the two-strategy system; absorption at 0 and 1",
            ExperimentKind::Grazing => "micro process vs mean-field transport as the step size delta shrinks",
            ExperimentKind::RpsPeriodic => "periodicity of the mean-field flow for cyclic games near the center",
            ExperimentKind::FolkCheck => "four-way equilibrium equivalence at the interior Nash point",
            ExperimentKind::MeanfieldVsReplicator => "ensemble mean vs the 2c-rescaled replicator on the plateau",
            ExperimentKind::MicroFreeRun => "plain micro simulation with snapshots",
        }
    }
}

/// Payoff matrix selected by named constructor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSpec {
    Rps {
        a: f64,
        b: f64,
    },
    Cyclic {
        d: usize,
    },
    TwoStrategy {
        b: f64,
    },
    Custom {
        matrix: Vec<Vec<f64>>,
    },
}

impl GameSpec {
    pub fn build(&self) -> Result<PayoffMatrix> {
        match self {
            GameSpec::Rps { a, b } => PayoffMatrix::rps(*a, *b),
            GameSpec::Cyclic { d } => PayoffMatrix::cyclic(*d),
            GameSpec::TwoStrategy { b } => PayoffMatrix::two_strategy(*b),
            GameSpec::Custom { matrix } => PayoffMatrix::validate(matrix),
        }
    }
}

/// Dynamics parameters. Unset fields take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    pub delta: Option<f64>,
    pub r: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub dt: Option<f64>,
    /// Horizon. For the grazing experiment this is in rescaled time `tau`.
    pub t_end: Option<f64>,
    /// Population size `N` (micro) or particle count `M` (mean field).
    pub n: Option<usize>,
    /// Snapshot spacing in the experiment's own time unit.
    pub snapshot_every: Option<f64>,
    /// Step-size list for the grazing sweep.
    pub deltas: Option<Vec<f64>>,
    pub n_seeds: Option<usize>,
    pub n_proj: Option<usize>,
    pub hist_bins: Option<usize>,
    pub clock: Option<EventClock>,
    pub coupling: Option<CouplingSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingSpec {
    SelfConsistent,
    Frozen,
}

impl From<CouplingSpec> for MeanCoupling {
    fn from(c: CouplingSpec) -> Self {
        match c {
            CouplingSpec::SelfConsistent => MeanCoupling::SelfConsistent,
            CouplingSpec::Frozen => MeanCoupling::Frozen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub game: GameSpec,
    #[serde(default)]
    pub dynamics: Dynamics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Pass/fail thresholds; missing names use the experiment defaults.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    /// Negative-control point for the equilibrium check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_point: Option<Vec<f64>>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Resolved numeric parameters after defaults are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub delta: f64,
    pub r: f64,
    pub c: f64,
    pub lambda: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n: usize,
    pub snapshot_every: f64,
    pub deltas: Vec<f64>,
    pub n_seeds: usize,
    pub n_proj: usize,
    pub hist_bins: usize,
    pub clock: EventClock,
    pub coupling: MeanCoupling,
}

struct Defaults {
    delta: f64,
    c: f64,
    dt: f64,
    t_end: f64,
    n: usize,
    snapshot_every: f64,
    deltas: &'static [f64],
    n_seeds: usize,
}

fn defaults(kind: ExperimentKind) -> Defaults {
    let base = Defaults {
        delta: 0.1,
        c: 0.1,
        dt: 1e-3,
        t_end: 10.0,
        n: 1000,
        snapshot_every: 1.0,
        deltas: &[0.2, 0.1, 0.05],
        n_seeds: 8,
    };
    match kind {
        ExperimentKind::TwoStrategies => Defaults { dt: 0.1, t_end: 400.0, snapshot_every: 1.0, ..base },
        ExperimentKind::Grazing => Defaults { c: 0.1, dt: 0.01, t_end: 5.0, n: 5000, snapshot_every: 0.5, ..base },
        ExperimentKind::RpsPeriodic => Defaults { c: 0.01, dt: 0.1, t_end: 2000.0, n: 200, snapshot_every: 10.0, ..base },
        ExperimentKind::FolkCheck => Defaults { c: 0.01, dt: 0.01, t_end: 10.0, n: 1, ..base },
        ExperimentKind::MeanfieldVsReplicator => Defaults { c: 0.01, dt: 1e-3, t_end: 10.0, n: 50, snapshot_every: 0.1, ..base },
        ExperimentKind::MicroFreeRun => Defaults { t_end: 100.0, n: 1000, snapshot_every: 10.0, ..base },
    }
}

/// Threshold defaults per experiment; every name a command reads is listed here.
pub fn default_thresholds(kind: ExperimentKind, game: &GameSpec) -> BTreeMap<String, f64> {
    let entries: Vec<(&str, f64)> = match kind {
        ExperimentKind::TwoStrategies => {
            let mirrored = matches!(game, GameSpec::TwoStrategy { b } if *b < 0.0);
            let (lo, hi) = if mirrored { (0.30, 0.31) } else { (0.69, 0.70) };
            vec![
                ("eps_frozen", 1e-3),
                ("eps_absorbed", 1e-2),
                ("frozen_mass_tol", 1e-12),
                ("absorbed_mass_min", 0.69),
                ("final_mean_min", lo),
                ("final_mean_max", hi),
            ]
        }
        ExperimentKind::Grazing => vec![("trend_se_allowance", 2.0)],
        ExperimentKind::RpsPeriodic => vec![
            ("periodicity_w1_max", 1e-3),
            ("rotation_max", 1e-3),
            ("temporal_mean_max", 1e-3),
            ("mean_at_nash_tol", 1e-12),
        ],
        ExperimentKind::FolkCheck => vec![("tol", 1e-8)],
        ExperimentKind::MeanfieldVsReplicator => vec![("gap_max", 1e-4)],
        ExperimentKind::MicroFreeRun => vec![],
    };
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Reads a config file and applies `key=value` overrides before validation.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let version = value.get("schema_version").and_then(Value::as_u64);
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(Error::ConfigInvalid(format!(
                "schema_version must be {SCHEMA_VERSION}, found {}",
                value.get("schema_version").map_or("nothing".to_string(), |v| v.to_string())
            )));
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::ConfigInvalid(format!("config does not match schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON (sorted keys, no whitespace) used for hashing and echoing.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded. The output directory is
    /// left out so that identical runs written to different places share a hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolved(&self) -> Resolved {
        let d = defaults(self.experiment);
        let dy = &self.dynamics;
        Resolved {
            delta: dy.delta.unwrap_or(d.delta),
            r: dy.r.unwrap_or(0.0),
            c: dy.c.unwrap_or(d.c),
            lambda: dy.lambda.unwrap_or(0.0),
            dt: dy.dt.unwrap_or(d.dt),
            t_end: dy.t_end.unwrap_or(d.t_end),
            n: dy.n.unwrap_or(d.n),
            snapshot_every: dy.snapshot_every.unwrap_or(d.snapshot_every),
            deltas: dy.deltas.clone().unwrap_or_else(|| d.deltas.to_vec()),
            n_seeds: dy.n_seeds.unwrap_or(d.n_seeds),
            n_proj: dy.n_proj.unwrap_or(64),
            hist_bins: dy.hist_bins.unwrap_or(60),
            clock: dy.clock.unwrap_or_default(),
            coupling: dy.coupling.map(Into::into).unwrap_or_default(),
        }
    }

    /// Threshold by name, falling back to the experiment default.
    pub fn threshold(&self, name: &str) -> f64 {
        self.thresholds
            .get(name)
            .copied()
            .or_else(|| default_thresholds(self.experiment, &self.game).get(name).copied())
            .unwrap_or_else(|| panic!("no threshold named {name} for {}", self.experiment.name()))
    }

    /// Effective thresholds (defaults merged with explicit values).
    pub fn thresholds_in_effect(&self) -> BTreeMap<String, f64> {
        let mut all = default_thresholds(self.experiment, &self.game);
        all.extend(self.thresholds.iter().map(|(k, v)| (k.clone(), *v)));
        all
    }

    /// Checks every parameter against the module invariants it will meet.
    pub fn validate(&self) -> Result<()> {
        let game = self.game.build()?;
        game.require_antisymmetric()?;
        let p = self.resolved();
        let d = game.dim();
        let known = default_thresholds(self.experiment, &self.game);
        if let Some(name) = self.thresholds.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::ConfigInvalid(format!("unknown threshold {name:?} for {}", self.experiment.name())));
        }
        StepFunction::new(p.c)?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::ConfigInvalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("dt", p.dt)?;
        positive("t_end", p.t_end)?;
        positive("snapshot_every", p.snapshot_every)?;
        if p.lambda != 0.0 {
            return Err(Error::ConfigInvalid("lambda > 0 (diffusive limit) is only available through the library API".into()));
        }
        if p.n == 0 || p.n_proj == 0 || p.hist_bins == 0 || p.n_seeds == 0 {
            return Err(Error::ConfigInvalid("n, n_proj, hist_bins and n_seeds must be >= 1".into()));
        }
        if let Some(init) = &self.init {
            init.validate(d)?;
        }
        match self.experiment {
            ExperimentKind::TwoStrategies => {
                if d != 2 {
                    return Err(Error::BadDimension(format!("two_strategies needs a 2x2 game, got d={d}")));
                }
                if game.get(0, 1) == 0.0 {
                    return Err(Error::ConfigInvalid("two_strategies needs b != 0".into()));
                }
            }
            ExperimentKind::Grazing => {
                if p.deltas.is_empty() {
                    return Err(Error::ConfigInvalid("grazing needs at least one delta".into()));
                }
                for delta in &p.deltas {
                    if !(*delta > 0.0) {
                        return Err(Error::ConfigInvalid(format!("grazing deltas must be > 0, got {delta}")));
                    }
                    MicroConfig::new(*delta, p.r, p.c, 0, p.n)?;
                }
            }
            ExperimentKind::MicroFreeRun => {
                MicroConfig::new(p.delta, p.r, p.c, 0, p.n)?;
            }
            ExperimentKind::RpsPeriodic => {
                if !matches!(self.game, GameSpec::Cyclic { .. } | GameSpec::Rps { .. }) {
                    return Err(Error::ConfigInvalid("rps_periodic needs a cyclic or rps game".into()));
                }
            }
            ExperimentKind::FolkCheck => {
                if let Some(q) = &self.control_point {
                    if q.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, found: q.len() });
                    }
                    crate::game::SimplexPoint::new(q.clone())?;
                }
            }
            ExperimentKind::MeanfieldVsReplicator => {}
        }
        Ok(())
    }
}

/// Applies `dotted.key=value` to a JSON document. The value is parsed as JSON
/// when possible and taken as a string otherwise; missing objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::ConfigInvalid(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::ConfigInvalid(format!("override {assignment:?} has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::ConfigInvalid(format!("override {key:?}: {part:?} is not inside an object")))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one part")
}
