use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

/// Extra files written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
    pub provenance: Provenance,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig, columns: &[&str]) -> Result<Self> {
        Ok(Self {
            experiment: cfg.experiment,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            verdicts: Vec::new(),
            provenance: Provenance {
                seed: cfg.seed,
                config_hash: cfg.hash()?,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            artifacts: Vec::new(),
        })
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Values of one metric column, in row order.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Adds the finiteness verdict; call after the last row.
    pub fn finish(&mut self) {
        let bad = self.rows.iter().flatten().filter(|v| !v.is_finite()).count();
        self.verdicts
            .insert(0, Verdict::new("metrics_finite", bad == 0, format!("{bad} non-finite metrics")));
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    /// Gnuplot script drawing every metric column against the first on log axes.
    pub fn plot_script(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# gnuplot -p plot.gp");
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set key autotitle columnhead");
        let _ = writeln!(s, "set logscale xy");
        let _ = writeln!(s, "set xlabel '{}'", self.columns[0]);
        let _ = writeln!(s, "set title '{}'", self.experiment.name());
        let curves: Vec<String> = (2..=self.columns.len())
            .map(|k| format!("'metrics.csv' using 1:{k} with linespoints"))
            .collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        fs::write(dir.join("plot.gp"), self.plot_script())?;
        for a in &self.artifacts {
            fs::write(dir.join(&a.file_name), &a.contents)?;
        }
        Ok(())
    }
}
