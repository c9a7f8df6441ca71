//! Report and histogram export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::config::Scenario;
use crate::stats::{MomentSet, Verdict};
use crate::tia::{offset_average, CoincidenceHistogram, CorrelationReport, GEstimate, Measured, TiaError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tia(#[from] TiaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// Analytic expectation for the same configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub g11: Option<f64>,
    pub g22: Option<f64>,
    pub g12: Option<f64>,
    pub ratio: Option<f64>,
}

impl From<&MomentSet> for Prediction {
    fn from(m: &MomentSet) -> Self {
        Self {
            g11: m.g2_11,
            g22: m.g2_22,
            g12: m.g2_12,
            ratio: m.cs_ratio(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchySchwarz {
    /// `g12^2`.
    pub numerator: Measured,
    /// `g11 g22`.
    pub denominator: Measured,
    pub ratio: Measured,
    pub significance: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub scenario: String,
    pub config_digest: String,
    pub seed: u64,
    pub trials: u64,
    pub gate_width_ns: f64,
    pub offset_trials: usize,
    pub bin_width_ns: f64,
    pub g11: GEstimate,
    pub g22: GEstimate,
    pub g12: GEstimate,
    pub cauchy_schwarz: CauchySchwarz,
    pub prediction: Option<Prediction>,
}

impl ReportDocument {
    pub fn new(scenario: &Scenario, report: &CorrelationReport, prediction: Option<&MomentSet>) -> Self {
        let cs = &report.cs;
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.name.clone(),
            config_digest: scenario.digest(),
            seed: scenario.run.seed,
            trials: scenario.run.timing.trials,
            gate_width_ns: scenario.run.timing.gate_width_ns,
            offset_trials: scenario.analysis.offset_trials,
            bin_width_ns: scenario.analysis.bin_width_ns,
            g11: cs.g11,
            g22: cs.g22,
            g12: cs.g12,
            cauchy_schwarz: CauchySchwarz {
                numerator: cs.numerator,
                denominator: cs.denominator,
                ratio: cs.ratio,
                significance: cs.significance,
                verdict: cs.verdict,
            },
            prediction: prediction.map(Prediction::from),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,value,sigma\n");
        let mut row = |name: &str, value: f64, sigma: Option<f64>| {
            let sigma = sigma.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{name},{value},{sigma}");
        };
        for (name, g) in [("g11", &self.g11), ("g22", &self.g22), ("g12", &self.g12)] {
            row(name, g.value, Some(g.sigma));
            row(&format!("{name}_n_total"), g.n_total as f64, None);
            row(&format!("{name}_m_total"), g.m_total, None);
        }
        let cs = &self.cauchy_schwarz;
        row("g12_squared", cs.numerator.value, Some(cs.numerator.sigma));
        row("g11_g22", cs.denominator.value, Some(cs.denominator.sigma));
        row("ratio", cs.ratio.value, Some(cs.ratio.sigma));
        if let Some(s) = cs.significance {
            row("significance", s, None);
        }
        row(
            "violated",
            if cs.verdict == Verdict::Violated { 1.0 } else { 0.0 },
            None,
        );
        if let Some(p) = &self.prediction {
            for (name, v) in [
                ("predicted_g11", p.g11),
                ("predicted_g22", p.g22),
                ("predicted_g12", p.g12),
                ("predicted_ratio", p.ratio),
            ] {
                if let Some(v) = v {
                    row(name, v, None);
                }
            }
        }
        row("seed", self.seed as f64, None);
        row("trials", self.trials as f64, None);
        out
    }
}

/// `tau_ns,count` for every non-empty bin; `tau_ns` is the lower bin edge.
pub fn histogram_csv(h: &CoincidenceHistogram) -> String {
    let mut out = String::from("tau_ns,count\n");
    for (i, &c) in h.bins.iter().enumerate() {
        if c != 0 {
            let _ = writeln!(out, "{:.3},{c}", h.tau_ns(i));
        }
    }
    out
}

/// Same-trial `n(tau)` next to the offset average `m(tau)` over one period.
pub fn profile_csv(h: &CoincidenceHistogram) -> Result<String, TiaError> {
    let m = offset_average(h)?;
    let mut out = String::from("tau_ns,same_trial,offset_mean\n");
    for (i, mean) in m.iter().enumerate() {
        let _ = writeln!(out, "{:.3},{},{mean}", h.tau_ns(i), h.bins[i]);
    }
    Ok(out)
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, ReportError> {
    fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the report and one histogram/profile CSV pair per correlation
/// into `dir`, returning the written paths.
pub fn export_report(
    dir: &Path,
    doc: &ReportDocument,
    report: &CorrelationReport,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = vec![match format {
        ReportFormat::Json => write_file(dir.join("report.json"), &doc.to_json())?,
        ReportFormat::Csv => write_file(dir.join("report.csv"), &doc.to_csv())?,
    }];
    for (name, h) in [("g11", &report.h11), ("g22", &report.h22), ("g12", &report.h12)] {
        written.push(write_file(dir.join(format!("hist_{name}.csv")), &histogram_csv(h))?);
        written.push(write_file(dir.join(format!("profile_{name}.csv")), &profile_csv(h)?)?);
    }
    Ok(written)
}
