//! Report assembly and output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use udrra_core::analysis::HessianReport;
use udrra_core::optimize::{BoundCheck, Trajectory};

use crate::config::Resolved;
use crate::error::{HarnessError, Result};

pub const SUMMARY_FILE: &str = "summary.json";
pub const HESSIAN_FILE: &str = "hessian_checks.jsonl";

/// One pass/fail line. Unasserted checks are informational and never
/// affect `pass` of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub asserted: bool,
    pub observed: f64,
    pub limit: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    /// Asserted `observed ≤ limit`.
    pub fn at_most(name: impl Into<String>, observed: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            pass: observed <= limit,
            asserted: true,
            observed,
            limit,
            note: String::new(),
        }
    }

    pub fn info(name: impl Into<String>, observed: f64, note: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass: true,
            asserted: false,
            observed,
            limit: f64::NAN,
            note: note.into(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn unasserted(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub bound: String,
    pub holds: bool,
    pub violations: usize,
    pub worst_ratio: f64,
    pub final_bound: f64,
    pub g_sq: f64,
    pub loss_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
}

impl BoundSummary {
    pub fn new(bound: &str, check: &BoundCheck) -> Self {
        BoundSummary {
            bound: bound.to_string(),
            holds: check.holds(),
            violations: check.violations.len(),
            worst_ratio: check.worst_ratio,
            final_bound: check.final_bound,
            g_sq: check.inputs.g_sq,
            loss_gap: check.inputs.loss_gap,
            gamma: check.inputs.gamma,
            mu: check.inputs.mu,
            c0: check.inputs.c0,
        }
    }
}

/// Summary of one training run; `trajectory` names its CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub kind: String,
    pub instance: usize,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub steps: usize,
    pub final_loss: f64,
    pub final_kl: f64,
    pub min_grad_norm_sq: f64,
    pub steps_to_threshold: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundSummary>,
    pub trajectory: String,
    #[serde(skip)]
    pub wall: Duration,
}

impl RunSummary {
    pub fn from_trajectory(run: String, instance: usize, tau: f64, traj: &Trajectory, threshold: f64) -> Self {
        let last = traj.last();
        RunSummary {
            trajectory: trajectory_file(&run),
            run,
            kind: traj.kind.name().to_string(),
            instance,
            tau,
            mu: None,
            steps: traj.records.len(),
            final_loss: last.map_or(f64::NAN, |r| r.loss),
            final_kl: last.map_or(f64::NAN, |r| r.kl_to_target),
            min_grad_norm_sq: last.map_or(f64::NAN, |r| r.min_grad_norm_sq),
            steps_to_threshold: traj.steps_to(threshold),
            bounds: Vec::new(),
            wall: Duration::ZERO,
        }
    }
}

pub fn trajectory_file(run: &str) -> String {
    format!("trajectory_{run}.csv")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub version: String,
    pub pass: bool,
    pub config: Resolved,
    pub checks: Vec<Check>,
    pub runs: Vec<RunSummary>,
    /// Experiment-specific tables.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<serde_json::Value>,
    /// Every file written next to this summary.
    pub files: Vec<String>,
}

/// A finished experiment with the artifacts still in memory.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub trajectories: Vec<Trajectory>,
    pub hessian: Vec<HessianReport>,
}

impl Outcome {
    pub fn new(config: Resolved) -> Self {
        Outcome {
            report: Report {
                experiment: config.experiment.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                pass: true,
                config,
                checks: Vec::new(),
                runs: Vec::new(),
                details: Vec::new(),
                files: Vec::new(),
            },
            trajectories: Vec::new(),
            hessian: Vec::new(),
        }
    }

    pub fn push_run(&mut self, summary: RunSummary, traj: Trajectory) {
        self.report.runs.push(summary);
        self.trajectories.push(traj);
    }

    pub fn check(&mut self, c: Check) {
        self.report.checks.push(c);
    }

    /// Sets `pass` and the file manifest.
    pub fn finish(mut self) -> Self {
        let r = &mut self.report;
        r.pass = r.checks.iter().all(|c| c.pass || !c.asserted);
        r.files = r.runs.iter().map(|s| s.trajectory.clone()).collect();
        r.files.push(HESSIAN_FILE.to_string());
        r.files.push(SUMMARY_FILE.to_string());
        self
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.report.checks.iter().filter(|c| c.asserted && !c.pass)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        for (summary, traj) in self.report.runs.iter().zip(&self.trajectories) {
            let path = dir.join(&summary.trajectory);
            let file = File::create(&path).map_err(HarnessError::io(&path))?;
            let mut w = BufWriter::new(file);
            traj.write_csv(&mut w).and_then(|_| w.flush()).map_err(HarnessError::io(&path))?;
        }
        let path = dir.join(HESSIAN_FILE);
        let mut text = String::new();
        for h in &self.hessian {
            text.push_str(&h.to_json_line());
            text.push('\n');
        }
        fs::write(&path, text).map_err(HarnessError::io(&path))?;
        let path = dir.join(SUMMARY_FILE);
        let mut body = self.summary_json();
        body.push('\n');
        fs::write(&path, body).map_err(HarnessError::io(&path))
    }
}
