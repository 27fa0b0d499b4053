use super::spec::ExperimentSpec;
use crate::Result;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Curve CSV schema version.
pub const CURVE_SCHEMA_VERSION: u32 = 1;

/// Running mean and variance, accumulated in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Stats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean; zero with fewer than two samples.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.n - 1) as f64;
        (var / self.n as f64).sqrt()
    }

    pub fn point(&self, x: f64) -> Point {
        Point {
            x,
            mean: self.mean(),
            stderr: self.stderr(),
            n_trials: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub label: String,
    pub points: Vec<Point>,
}

impl Curve {
    pub fn last(&self) -> &Point {
        self.points.last().expect("curves are never empty")
    }

    /// Columns: `x,mean,stderr,n_trials,schema_version`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "mean", "stderr", "n_trials", "schema_version"])?;
        for p in &self.points {
            w.write_record([
                p.x.to_string(),
                p.mean.to_string(),
                p.stderr.to_string(),
                p.n_trials.to_string(),
                CURVE_SCHEMA_VERSION.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Output of one experiment, with the spec that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultSet {
    pub spec: ExperimentSpec,
    pub seed: u64,
    pub tool_version: &'static str,
    pub curves: Vec<Curve>,
    /// Scalar side results (pipeline delay, skip counts, ...).
    pub summary: BTreeMap<String, f64>,
}

impl ResultSet {
    pub(crate) fn new(spec: &ExperimentSpec) -> Self {
        Self {
            spec: spec.clone(),
            seed: spec.seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            curves: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn curve(&self, label: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.label == label)
    }

    /// Writes `<label>.csv` per curve and `manifest.json` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>, wall_time_s: f64) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for c in &self.curves {
            let path = dir.join(format!("{}.csv", c.label));
            c.write_csv(std::fs::File::create(&path)?)?;
            written.push(path);
        }
        let manifest = serde_json::json!({
            "tool": "mimo",
            "tool_version": self.tool_version,
            "seed": self.seed,
            "wall_time_s": wall_time_s,
            "spec": self.spec,
            "spec_toml": self.spec.to_toml_string()?,
            "curves": self.curves.iter().map(|c| format!("{}.csv", c.label)).collect::<Vec<_>>(),
            "summary": self.summary,
        });
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        written.push(path);
        Ok(written)
    }
}
