//! Run artifacts: `summary.json`, `timeseries_*.csv`, `hist_*.csv` and
//! `snapshots/*.csv`. Everything except the summary's `metadata` block is a
//! pure function of the configuration, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::meanfield::{fmt_f64, ParticleEnsemble};
use crate::metrics::Histogram;
use crate::micro::AgentPopulation;

use super::config::ExperimentConfig;

/// How a check compares its value with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
    /// `|value - threshold| <= tolerance`.
    Near,
    /// Boolean outcome; `value` is 1 for true.
    IsTrue,
    IsFalse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self::make(name, value, threshold, None, Comparison::AtMost, value <= threshold)
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self::make(name, value, threshold, None, Comparison::AtLeast, value >= threshold)
    }

    pub fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::make(name, value, target, Some(tolerance), Comparison::Near, (value - target).abs() <= tolerance)
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self::near(name, value, 0.5 * (lo + hi), 0.5 * (hi - lo))
    }

    pub fn is_true(name: &str, ok: bool) -> Self {
        Self::make(name, ok as u8 as f64, 1.0, None, Comparison::IsTrue, ok)
    }

    pub fn is_false(name: &str, flag: bool) -> Self {
        Self::make(name, flag as u8 as f64, 0.0, None, Comparison::IsFalse, !flag)
    }

    fn make(name: &str, value: f64, threshold: f64, tolerance: Option<f64>, comparison: Comparison, passed: bool) -> Self {
        // NaN never passes
        let passed = passed && !value.is_nan();
        Check { name: name.to_string(), value, threshold, tolerance, comparison, passed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    Failed,
    Error,
}

impl RunStatus {
    /// Process exit code: 0 passed, 1 checks failed, 2 config or runtime error.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Passed => 0,
            RunStatus::Failed => 1,
            RunStatus::Error => 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileIndex {
    pub timeseries: Vec<String>,
    pub histograms: Vec<String>,
    pub snapshots: Vec<String>,
    /// Reduced tables such as per-delta averages.
    pub tables: Vec<String>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub experiment: String,
    pub config: Value,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub thresholds: BTreeMap<String, f64>,
    pub scalars: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub files: FileIndex,
    /// Wall-clock data; the only non-reproducible part of the artifacts.
    pub metadata: BTreeMap<String, Value>,
}

/// Collects artifacts for one run into its output directory.
#[derive(Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub scalars: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub files: FileIndex,
    started: f64,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunArtifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(RunArtifacts {
            dir: dir.to_path_buf(),
            scalars: BTreeMap::new(),
            checks: Vec::new(),
            files: FileIndex::default(),
            started: unix_now(),
        })
    }

    pub fn scalar<V: Into<Value>>(&mut self, name: &str, value: V) {
        self.scalars.insert(name.to_string(), value.into());
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes a CSV with the given header; returns the path relative to the run dir.
    pub fn write_table(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<String> {
        let rel = name.to_string();
        let mut w = csv::Writer::from_path(self.dir.join(&rel))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|x| fmt_f64(*x)))?;
        }
        w.flush()?;
        Ok(rel)
    }

    /// `timeseries_<name>.csv`.
    pub fn write_timeseries(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        let rel = self.write_table(&format!("timeseries_{name}.csv"), header, rows)?;
        self.files.timeseries.push(rel);
        Ok(())
    }

    /// `hist_<name>.csv` with columns `time,edge_lo,edge_hi,mass`.
    pub fn write_histograms(&mut self, name: &str, hists: &[(f64, Histogram)]) -> Result<()> {
        let header = ["time", "edge_lo", "edge_hi", "mass"].map(String::from);
        let rows: Vec<Vec<f64>> =
            hists.iter().flat_map(|(t, h)| h.rows().map(move |(lo, hi, m)| vec![*t, lo, hi, m])).collect();
        let rel = self.write_table(&format!("hist_{name}.csv"), &header, &rows)?;
        self.files.histograms.push(rel);
        Ok(())
    }

    /// Ensemble snapshots as `snapshots/<prefix>_<k>.csv` (weight,p_1..p_d)
    /// plus `snapshots/index.json` with times and the config hash.
    pub fn write_ensemble_snapshots(&mut self, snaps: &[&ParticleEnsemble], config_hash: &str) -> Result<()> {
        let dir = self.dir.join("snapshots");
        fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut entries = Vec::new();
        for (k, e) in snaps.iter().enumerate() {
            let rel = format!("snapshots/ensemble_{k:05}.csv");
            let file = fs::File::create(self.dir.join(&rel))?;
            e.write_csv(file)?;
            entries.push(serde_json::json!({"time": e.time, "file": rel}));
            self.files.snapshots.push(rel);
        }
        self.write_index(entries, config_hash)
    }

    /// Agent snapshots as rows `time,p_1..p_d` (one row per agent).
    pub fn write_population_snapshots(&mut self, snaps: &[(f64, &AgentPopulation)], config_hash: &str) -> Result<()> {
        let dir = self.dir.join("snapshots");
        fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut entries = Vec::new();
        for (k, (t, pop)) in snaps.iter().enumerate() {
            let rel = format!("snapshots/agents_{k:05}.csv");
            let mut header = vec!["time".to_string()];
            header.extend((1..=pop.dim()).map(|i| format!("p_{i}")));
            let rows: Vec<Vec<f64>> = pop.iter().map(|p| std::iter::once(*t).chain(p.iter().copied()).collect()).collect();
            self.write_table(&rel, &header, &rows)?;
            entries.push(serde_json::json!({"time": t, "file": rel}));
            self.files.snapshots.push(rel);
        }
        self.write_index(entries, config_hash)
    }

    fn write_index(&self, entries: Vec<Value>, config_hash: &str) -> Result<()> {
        let index = serde_json::json!({"config_hash": config_hash, "snapshots": entries});
        fs::write(self.dir.join("snapshots/index.json"), serde_json::to_string_pretty(&index)? + "\n")?;
        Ok(())
    }

    /// Writes `summary.json`; an `error` forces the error status.
    pub fn finish(self, cfg: &ExperimentConfig, error: Option<&Error>) -> Result<Summary> {
        let status = match (error, self.all_passed()) {
            (Some(_), _) => RunStatus::Error,
            (None, true) => RunStatus::Passed,
            (None, false) => RunStatus::Failed,
        };
        let mut metadata = BTreeMap::new();
        metadata.insert("started_unix".to_string(), Value::from(self.started));
        metadata.insert("finished_unix".to_string(), Value::from(unix_now()));
        metadata.insert("crate_version".to_string(), Value::from(env!("CARGO_PKG_VERSION")));
        let summary = Summary {
            schema_version: cfg.schema_version,
            experiment: cfg.experiment.name().to_string(),
            config: serde_json::to_value(cfg)?,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            status,
            error: error.map(|e| e.to_string()),
            thresholds: cfg.thresholds_in_effect(),
            scalars: self.scalars,
            checks: self.checks,
            files: self.files,
            metadata,
        };
        write_summary(&self.dir, &summary)?;
        Ok(summary)
    }
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Header `time,p_1..p_d` optionally followed by extra columns.
pub fn coord_header(first: &str, dim: usize, extra: &[&str]) -> Vec<String> {
    let mut h = vec![first.to_string()];
    h.extend((1..=dim).map(|i| format!("p_{i}")));
    h.extend(extra.iter().map(|s| s.to_string()));
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_semantics() {
        assert!(Check::at_most("a", 1.0, 1.0).passed);
        assert!(!Check::at_most("a", f64::NAN, 1.0).passed);
        assert!(Check::at_least("a", 0.7, 0.69).passed);
        assert!(Check::within("m", 0.695, 0.69, 0.70).passed);
        assert!(!Check::within("m", 0.68, 0.69, 0.70).passed);
        assert!(Check::is_false("f", false).passed);
        assert!(!Check::is_true("t", false).passed);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunStatus::Passed.exit_code(), 0);
        assert_eq!(RunStatus::Failed.exit_code(), 1);
        assert_eq!(RunStatus::Error.exit_code(), 2);
    }
}
