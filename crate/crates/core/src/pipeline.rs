//! End-to-end runs: simulate the three splitter settings of a scenario,
//! analyze them and compare against the analytic prediction.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::ThreadPoolBuilder;
use serde::Serialize;
use thiserror::Error;

use crate::calibrate::gated_prediction;
use crate::engine::{derive_seed, simulate, DetectionEvent, EngineError, SplitterMode};
use crate::io::config::Scenario;
use crate::stats::{ideal_cs_ratio_model, ideal_cs_ratio_paper, MomentSet, StatsError};
use crate::tia::{analyze_run, CorrelationReport, GEstimate, Measured, RunStreams, TiaError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Tia(#[from] TiaError),
    #[error("prediction: {0}")]
    Stats(#[from] StatsError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("{0}")]
    Invalid(String),
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn in_pool<T, F>(workers: Option<usize>, f: F) -> Result<T, PipelineError>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match workers {
        Some(n) => Ok(ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModeStreams {
    pub pair: Vec<DetectionEvent>,
    pub auto1: Vec<DetectionEvent>,
    pub auto2: Vec<DetectionEvent>,
}

impl ModeStreams {
    pub fn as_run_streams(&self) -> RunStreams<'_> {
        RunStreams {
            pair: &self.pair,
            auto1: &self.auto1,
            auto2: &self.auto2,
        }
    }

    pub fn get(&self, mode: SplitterMode) -> &[DetectionEvent] {
        match mode {
            SplitterMode::Pair => &self.pair,
            SplitterMode::Auto1 => &self.auto1,
            SplitterMode::Auto2 => &self.auto2,
        }
    }
}

pub fn simulate_modes(scenario: &Scenario) -> Result<ModeStreams, EngineError> {
    let run = &scenario.run;
    Ok(ModeStreams {
        pair: simulate(&run.for_mode(SplitterMode::Pair))?,
        auto1: simulate(&run.for_mode(SplitterMode::Auto1))?,
        auto2: simulate(&run.for_mode(SplitterMode::Auto2))?,
    })
}

pub fn analyze_streams(
    scenario: &Scenario,
    streams: &ModeStreams,
) -> Result<CorrelationReport, TiaError> {
    let timing = &scenario.run.timing;
    analyze_run(
        streams.as_run_streams(),
        timing,
        &scenario.analysis.tia(),
        &scenario.analysis.channel_plan(timing),
    )
}

/// Analytic per-gate moments the simulation of `scenario` converges to.
pub fn predict(scenario: &Scenario) -> Result<MomentSet, StatsError> {
    gated_prediction(&scenario.run.source, &scenario.run.timing)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub streams: ModeStreams,
    pub report: CorrelationReport,
    pub prediction: MomentSet,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, PipelineError> {
    scenario
        .validate()
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let prediction = predict(scenario)?;
    let streams = simulate_modes(scenario)?;
    let report = analyze_streams(scenario, &streams)?;
    Ok(RunOutput {
        streams,
        report,
        prediction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    P,
    Zeta,
    Eta1,
    Eta2,
    Bg1,
    Bg2,
    Leak2,
    /// Background rates held fixed, so per-gate means scale with the width.
    GateWidth,
    PairSeparation,
}

impl SweepParam {
    pub const NAMES: [&'static str; 9] = [
        "source.p",
        "source.zeta",
        "source.eta1",
        "source.eta2",
        "source.bg1",
        "source.bg2",
        "source.leak2",
        "timing.gate_width_ns",
        "timing.pair_separation_ns",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    pub fn apply(self, base: &Scenario, value: f64) -> Scenario {
        let mut s = base.clone();
        let src = &mut s.run.source;
        match self {
            SweepParam::P => src.p = value,
            SweepParam::Zeta => src.zeta = value,
            SweepParam::Eta1 => src.eta1 = value,
            SweepParam::Eta2 => src.eta2 = value,
            SweepParam::Bg1 => src.bg1 = value,
            SweepParam::Bg2 => src.bg2 = value,
            SweepParam::Leak2 => src.leak2 = value,
            SweepParam::GateWidth => s.run = s.run.with_gate_width(value),
            SweepParam::PairSeparation => {
                let t = &mut s.run.timing;
                t.pair_separation_ns = value;
                t.gate2_center_ns = t.gate1_center_ns + value;
            }
        }
        s
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use SweepParam::*;
        [P, Zeta, Eta1, Eta2, Bg1, Bg2, Leak2, GateWidth, PairSeparation]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown sweep parameter `{s}` (one of {})", Self::NAMES.join(", ")))
    }
}

/// `steps` evenly spaced values from `from` to `to` inclusive.
pub fn grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![from],
        _ => (0..steps)
            .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub g11: GEstimate,
    pub g22: GEstimate,
    pub g12: GEstimate,
    pub ratio: Measured,
    pub significance: Option<f64>,
    pub oracle: MomentSet,
    /// `[(1 + p) / (2p)]^2`, only when sweeping `source.p`.
    pub paper_ideal_ratio: Option<f64>,
    /// `[(1 + 2p) / (2p)]^2`, only when sweeping `source.p`.
    pub model_ideal_ratio: Option<f64>,
}

impl SweepRow {
    /// `(R_mc - R_oracle) / sigma_R`.
    pub fn oracle_deviation(&self) -> Option<f64> {
        let r = self.oracle.cs_ratio()?;
        (self.ratio.sigma > 0.0).then(|| (self.ratio.value - r) / self.ratio.sigma)
    }
}

/// One full simulate/analyze run per grid value. Row `i` uses a seed
/// derived from the base seed and `i`.
pub fn sweep(base: &Scenario, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, PipelineError> {
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut s = param.apply(base, value);
            s.run.seed = derive_seed(base.run.seed, (i as u64).wrapping_mul(0x9E37_79B9));
            let out = run_scenario(&s)?;
            let cs = &out.report.cs;
            let (quoted, model) = if param == SweepParam::P && value > 0.0 {
                (Some(ideal_cs_ratio_paper(value)?), Some(ideal_cs_ratio_model(value)?))
            } else {
                (None, None)
            };
            Ok(SweepRow {
                value,
                g11: cs.g11,
                g22: cs.g22,
                g12: cs.g12,
                ratio: cs.ratio,
                significance: cs.significance,
                oracle: out.prediction,
                paper_ideal_ratio: quoted,
                model_ideal_ratio: model,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{},g11,g11_sigma,g22,g22_sigma,g12,g12_sigma,ratio,ratio_sigma,significance,\
         oracle_g11,oracle_g22,oracle_g12,oracle_ratio,paper_ideal_ratio,model_ideal_ratio\n",
        param.name()
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.value,
            r.g11.value,
            r.g11.sigma,
            r.g22.value,
            r.g22.sigma,
            r.g12.value,
            r.g12.sigma,
            r.ratio.value,
            r.ratio.sigma,
            opt(r.significance),
            opt(r.oracle.g2_11),
            opt(r.oracle.g2_22),
            opt(r.oracle.g2_12),
            opt(r.oracle.cs_ratio()),
            opt(r.paper_ideal_ratio),
            opt(r.model_ideal_ratio),
        );
    }
    out
}
