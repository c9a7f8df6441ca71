//! Seeded Monte Carlo generation of timestamped detection events.
//!
//! Each trial draws photon numbers from the same chain as
//! [`crate::stats::SourceParams::detected_distribution`], stamps every
//! photon with a time from its pulse envelope, adds background and leakage
//! counts and routes the light onto detectors D1/D2 according to the
//! splitter configuration. Timestamps are integer picoseconds relative to
//! the start of the trial.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Geometric, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{SourceKind, SourceParams, StatsError};

pub const PS_PER_NS: f64 = 1000.0;
/// `2 sqrt(2 ln 2)`: FWHM of a Gaussian in units of its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
const TRIALS_PER_CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("source.{0}")]
    Source(#[from] StatsError),
    #[error("events unsorted at index {index}")]
    Unsorted { index: usize },
}

fn config_err(field: &str, message: impl Into<String>) -> EngineError {
    EngineError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

pub fn ns_to_ps(ns: f64) -> i64 {
    (ns * PS_PER_NS).round() as i64
}

pub fn ps_to_ns(ps: i64) -> f64 {
    ps as f64 / PS_PER_NS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
}

impl Detector {
    pub fn as_str(self) -> &'static str {
        match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Gate1,
    Gate2,
}

/// Which light reaches which detector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitterMode {
    /// Field 1 onto D1, field 2 onto D2.
    #[default]
    Pair,
    /// Field 1 through a 50/50 splitter onto D1 and D2; field 2 blocked.
    Auto1,
    /// Field 2 through a 50/50 splitter onto D1 and D2; field 1 blocked.
    Auto2,
}

impl SplitterMode {
    pub const ALL: [SplitterMode; 3] = [SplitterMode::Pair, SplitterMode::Auto1, SplitterMode::Auto2];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitterMode::Pair => "pair",
            SplitterMode::Auto1 => "auto1",
            SplitterMode::Auto2 => "auto2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for SplitterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A photoelectric event on one detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectionEvent {
    pub trial_index: u64,
    pub detector: Detector,
    /// Picoseconds since the start of the trial.
    pub time_ps: i64,
}

impl DetectionEvent {
    pub fn time_ns(&self) -> f64 {
        ps_to_ns(self.time_ps)
    }

    fn order_key(&self) -> (u64, i64) {
        (self.trial_index, self.time_ps)
    }
}

/// Trial timing. All times in nanoseconds measured from the start of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialTiming {
    pub trial_period_ns: f64,
    pub write_center_ns: f64,
    pub pair_separation_ns: f64,
    pub write_fwhm_ns: f64,
    pub read_fwhm_ns: f64,
    pub gate1_center_ns: f64,
    pub gate2_center_ns: f64,
    pub gate_width_ns: f64,
    pub trials: u64,
}

impl Default for TrialTiming {
    fn default() -> Self {
        let write_center_ns = 200.0;
        let pair_separation_ns = 405.0;
        Self {
            trial_period_ns: 4000.0,
            write_center_ns,
            pair_separation_ns,
            write_fwhm_ns: 51.0,
            read_fwhm_ns: 34.0,
            gate1_center_ns: write_center_ns,
            gate2_center_ns: write_center_ns + pair_separation_ns,
            gate_width_ns: 60.0,
            trials: 1_000_000,
        }
    }
}

impl TrialTiming {
    pub fn validate(&self) -> Result<(), EngineError> {
        let positive = [
            ("timing.trial_period_ns", self.trial_period_ns),
            ("timing.pair_separation_ns", self.pair_separation_ns),
            ("timing.write_fwhm_ns", self.write_fwhm_ns),
            ("timing.read_fwhm_ns", self.read_fwhm_ns),
            ("timing.gate_width_ns", self.gate_width_ns),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(config_err(field, format!("{value} must be positive")));
            }
        }
        if self.trials == 0 {
            return Err(config_err("timing.trials", "must be at least 1"));
        }
        let period = self.trial_period_ns;
        if !(0.0..period).contains(&self.write_center_ns) {
            return Err(config_err(
                "timing.write_center_ns",
                format!("{} outside the trial period", self.write_center_ns),
            ));
        }
        if !(0.0..period).contains(&self.read_center_ns()) {
            return Err(config_err(
                "timing.pair_separation_ns",
                "read pulse falls outside the trial period",
            ));
        }
        for (field, gate) in [("timing.gate1_center_ns", Gate::Gate1), ("timing.gate2_center_ns", Gate::Gate2)] {
            let (lo, hi) = self.gate_bounds_ps(gate);
            if lo < 0 || hi > self.period_ps() {
                return Err(config_err(field, "gate extends outside the trial period"));
            }
        }
        let (_, hi1) = self.gate_bounds_ps(Gate::Gate1);
        let (lo2, _) = self.gate_bounds_ps(Gate::Gate2);
        if lo2 < hi1 {
            return Err(config_err("timing.gate2_center_ns", "gates overlap or are out of order"));
        }
        let separation = self.gate2_center_ns - self.gate1_center_ns;
        if (separation - self.pair_separation_ns).abs() > self.gate_width_ns {
            return Err(config_err(
                "timing.gate2_center_ns",
                format!(
                    "gate separation {separation} differs from pair separation {} by more than one gate width",
                    self.pair_separation_ns
                ),
            ));
        }
        Ok(())
    }

    pub fn read_center_ns(&self) -> f64 {
        self.write_center_ns + self.pair_separation_ns
    }

    pub fn period_ps(&self) -> i64 {
        ns_to_ps(self.trial_period_ns)
    }

    pub fn gate_center_ns(&self, gate: Gate) -> f64 {
        match gate {
            Gate::Gate1 => self.gate1_center_ns,
            Gate::Gate2 => self.gate2_center_ns,
        }
    }

    /// Half-open `[center - T/2, center + T/2)` in picoseconds.
    pub fn gate_bounds_ps(&self, gate: Gate) -> (i64, i64) {
        let c = self.gate_center_ns(gate);
        let half = 0.5 * self.gate_width_ns;
        (ns_to_ps(c - half), ns_to_ps(c + half))
    }

    pub fn gate_of(&self, time_ps: i64) -> Option<Gate> {
        [Gate::Gate1, Gate::Gate2].into_iter().find(|&g| {
            let (lo, hi) = self.gate_bounds_ps(g);
            (lo..hi).contains(&time_ps)
        })
    }

    pub fn write_envelope(&self) -> GaussianEnvelope {
        GaussianEnvelope::new(self.write_center_ns, self.write_fwhm_ns, self.trial_period_ns)
    }

    pub fn read_envelope(&self) -> GaussianEnvelope {
        GaussianEnvelope::new(self.read_center_ns(), self.read_fwhm_ns, self.trial_period_ns)
    }
}

/// Temporal profile a photon time is drawn from.
pub trait PulseEnvelope {
    /// A time in `[0, trial_period)`, in nanoseconds.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
    /// Probability that a sampled time falls in `[lo_ns, hi_ns)`.
    fn acceptance(&self, lo_ns: f64, hi_ns: f64) -> f64;
}

/// Gaussian pulse truncated to the trial period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianEnvelope {
    pub center_ns: f64,
    pub sigma_ns: f64,
    pub period_ns: f64,
}

impl GaussianEnvelope {
    pub fn new(center_ns: f64, fwhm_ns: f64, period_ns: f64) -> Self {
        Self {
            center_ns,
            sigma_ns: fwhm_ns / FWHM_PER_SIGMA,
            period_ns,
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        if self.sigma_ns == 0.0 {
            return if t >= self.center_ns { 1.0 } else { 0.0 };
        }
        let z = (t - self.center_ns) / (self.sigma_ns * std::f64::consts::SQRT_2);
        0.5 * (1.0 + statrs::function::erf::erf(z))
    }
}

impl PulseEnvelope for GaussianEnvelope {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        const MAX_REJECTIONS: usize = 1000;
        for _ in 0..MAX_REJECTIONS {
            let z: f64 = rng.sample(StandardNormal);
            let t = self.center_ns + self.sigma_ns * z;
            if t >= 0.0 && t < self.period_ns {
                return t;
            }
        }
        // only reachable for a pulse centered far outside the period
        self.center_ns.clamp(0.0, self.period_ns * (1.0 - f64::EPSILON))
    }

    fn acceptance(&self, lo_ns: f64, hi_ns: f64) -> f64 {
        let lo = lo_ns.max(0.0);
        let hi = hi_ns.min(self.period_ns);
        if hi <= lo {
            return 0.0;
        }
        let total = self.cdf(self.period_ns) - self.cdf(0.0);
        (self.cdf(hi) - self.cdf(lo)) / total
    }
}

/// One Gaussian-distributed time, truncated to `[0, trial_period)`.
pub fn envelope_sample<R: Rng + ?Sized>(
    center_ns: f64,
    fwhm_ns: f64,
    trial_period_ns: f64,
    rng: &mut R,
) -> f64 {
    GaussianEnvelope::new(center_ns, fwhm_ns, trial_period_ns).sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceParams,
    pub timing: TrialTiming,
    pub seed: u64,
    #[serde(default)]
    pub dead_time_ns: f64,
    #[serde(default)]
    pub splitter: SplitterMode,
}

impl RunConfig {
    pub fn new(source: SourceParams, timing: TrialTiming, seed: u64) -> Self {
        Self {
            source,
            timing,
            seed,
            dead_time_ns: 0.0,
            splitter: SplitterMode::Pair,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.source.validate()?;
        self.timing.validate()?;
        if !(self.dead_time_ns >= 0.0 && self.dead_time_ns.is_finite()) {
            return Err(config_err(
                "run.dead_time_ns",
                format!("{} must be non-negative", self.dead_time_ns),
            ));
        }
        Ok(())
    }

    /// The configuration for one splitter setting of a three-pass
    /// measurement. Each setting gets its own seed derived from `seed`.
    pub fn for_mode(&self, mode: SplitterMode) -> Self {
        let tag = match mode {
            SplitterMode::Pair => 0x7061_6972,
            SplitterMode::Auto1 => 0x6175_7431,
            SplitterMode::Auto2 => 0x6175_7432,
        };
        Self {
            splitter: mode,
            seed: derive_seed(self.seed, tag),
            ..*self
        }
    }

    /// Changes the gate width while keeping background rates fixed, so
    /// per-gate background means scale with the width.
    pub fn with_gate_width(&self, gate_width_ns: f64) -> Self {
        let scale = gate_width_ns / self.timing.gate_width_ns;
        let mut out = *self;
        out.timing.gate_width_ns = gate_width_ns;
        out.source.bg1 *= scale;
        out.source.bg2 *= scale;
        out
    }
}

/// Child seed for `tag`, kept below 2^63 so it stays a valid config value.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag) >> 1
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Source parameters seen per gate: detection efficiencies and leakage are
/// multiplied by the fraction of each pulse envelope that falls inside its
/// gate. Uniform backgrounds are already per gate.
pub fn per_gate_source(sp: &SourceParams, timing: &TrialTiming) -> SourceParams {
    let half = 0.5 * timing.gate_width_ns;
    let acc1 = timing
        .write_envelope()
        .acceptance(timing.gate1_center_ns - half, timing.gate1_center_ns + half);
    let acc2 = timing
        .read_envelope()
        .acceptance(timing.gate2_center_ns - half, timing.gate2_center_ns + half);
    SourceParams {
        eta1: sp.eta1 * acc1,
        eta2: sp.eta2 * acc2,
        leak2: sp.leak2 * acc2,
        ..*sp
    }
}

/// Trial-level random streams: one master seed, one ChaCha stream per trial.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    key: <ChaCha8Rng as SeedableRng>::Seed,
}

impl TrialStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    pub fn stream(&self, trial_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(trial_index);
        rng
    }
}

struct Samplers {
    source: Option<SourceSampler>,
    bg1: Option<Poisson<f64>>,
    bg2: Option<Poisson<f64>>,
    leak2: Option<Poisson<f64>>,
    write: GaussianEnvelope,
    read: GaussianEnvelope,
    gate1: (i64, i64),
    gate2: (i64, i64),
    period_ps: i64,
}

enum SourceSampler {
    Pair(Geometric),
    ClassicalTwin(Exp<f64>),
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("validated positive mean"))
}

impl Samplers {
    fn new(cfg: &RunConfig) -> Self {
        let sp = &cfg.source;
        let source = (sp.p > 0.0).then(|| match sp.kind {
            SourceKind::Pair => {
                SourceSampler::Pair(Geometric::new(1.0 / (1.0 + sp.p)).expect("p in [0, 1)"))
            }
            SourceKind::ClassicalTwin => {
                SourceSampler::ClassicalTwin(Exp::new(1.0 / sp.p).expect("p > 0"))
            }
        });
        Self {
            source,
            bg1: poisson(sp.bg1),
            bg2: poisson(sp.bg2),
            leak2: poisson(sp.leak2),
            write: cfg.timing.write_envelope(),
            read: cfg.timing.read_envelope(),
            gate1: cfg.timing.gate_bounds_ps(Gate::Gate1),
            gate2: cfg.timing.gate_bounds_ps(Gate::Gate2),
            period_ps: cfg.timing.period_ps(),
        }
    }

    fn quantize(&self, t_ns: f64) -> i64 {
        ns_to_ps(t_ns).clamp(0, self.period_ps - 1)
    }
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
    }
}

fn count<R: Rng + ?Sized>(rng: &mut R, d: &Option<Poisson<f64>>) -> u64 {
    d.as_ref().map_or(0, |d| d.sample(rng) as u64)
}

fn sample_into<R: Rng + ?Sized>(
    trial_index: u64,
    cfg: &RunConfig,
    s: &Samplers,
    rng: &mut R,
    field1: &mut Vec<i64>,
    field2: &mut Vec<i64>,
    out: &mut Vec<DetectionEvent>,
) {
    let sp = &cfg.source;
    field1.clear();
    field2.clear();

    let (n1, n2) = match &s.source {
        None => (0, 0),
        Some(SourceSampler::Pair(g)) => {
            let n = g.sample(rng);
            (n, n)
        }
        Some(SourceSampler::ClassicalTwin(e)) => {
            let intensity: f64 = e.sample(rng);
            if intensity > 0.0 {
                let d = Poisson::new(intensity).expect("positive intensity");
                (d.sample(rng) as u64, d.sample(rng) as u64)
            } else {
                (0, 0)
            }
        }
    };
    let n2 = binomial(rng, n2, sp.zeta);
    let d1 = binomial(rng, n1, sp.eta1);
    let d2 = binomial(rng, n2, sp.eta2);

    for _ in 0..d1 {
        field1.push(s.quantize(s.write.sample(rng)));
    }
    for _ in 0..count(rng, &s.bg1) {
        field1.push(rng.gen_range(s.gate1.0..s.gate1.1));
    }
    for _ in 0..d2 {
        field2.push(s.quantize(s.read.sample(rng)));
    }
    for _ in 0..count(rng, &s.bg2) {
        field2.push(rng.gen_range(s.gate2.0..s.gate2.1));
    }
    for _ in 0..count(rng, &s.leak2) {
        field2.push(s.quantize(s.read.sample(rng)));
    }

    let start = out.len();
    let event = |detector, time_ps| DetectionEvent {
        trial_index,
        detector,
        time_ps,
    };
    match cfg.splitter {
        SplitterMode::Pair => {
            out.extend(field1.iter().map(|&t| event(Detector::D1, t)));
            out.extend(field2.iter().map(|&t| event(Detector::D2, t)));
        }
        SplitterMode::Auto1 | SplitterMode::Auto2 => {
            let light = if cfg.splitter == SplitterMode::Auto1 {
                &*field1
            } else {
                &*field2
            };
            for &t in light {
                let detector = if rng.gen::<bool>() {
                    Detector::D1
                } else {
                    Detector::D2
                };
                out.push(event(detector, t));
            }
        }
    }
    out[start..].sort_unstable_by_key(|e| (e.time_ps, e.detector));
}

/// Events of trial `trial_index`, sorted by time. `rng` must be the stream
/// dedicated to that trial (see [`TrialStreams::stream`]).
pub fn sample_trial<R: Rng + ?Sized>(
    trial_index: u64,
    cfg: &RunConfig,
    rng: &mut R,
) -> Vec<DetectionEvent> {
    let samplers = Samplers::new(cfg);
    let mut out = Vec::new();
    sample_into(
        trial_index,
        cfg,
        &samplers,
        rng,
        &mut Vec::new(),
        &mut Vec::new(),
        &mut out,
    );
    out
}

/// Generates the full event stream of a run, sorted by `(trial_index, time)`.
///
/// The output depends only on `cfg`: trials are processed in fixed-size
/// chunks on the current rayon pool and every trial draws from its own
/// stream, so the worker count never changes the result.
pub fn simulate(cfg: &RunConfig) -> Result<Vec<DetectionEvent>, EngineError> {
    cfg.validate()?;
    let samplers = Samplers::new(cfg);
    let streams = TrialStreams::new(cfg.seed);
    let trials = cfg.timing.trials;
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let parts: Vec<Vec<DetectionEvent>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * TRIALS_PER_CHUNK;
            let hi = (lo + TRIALS_PER_CHUNK).min(trials);
            let (mut f1, mut f2) = (Vec::new(), Vec::new());
            let mut out = Vec::new();
            for j in lo..hi {
                let mut rng = streams.stream(j);
                sample_into(j, cfg, &samplers, &mut rng, &mut f1, &mut f2, &mut out);
            }
            out
        })
        .collect();
    let events: Vec<DetectionEvent> = parts.concat();
    if cfg.dead_time_ns > 0.0 {
        apply_dead_time(&events, cfg.dead_time_ns, cfg.timing.trial_period_ns)
    } else {
        Ok(events)
    }
}

pub fn check_sorted(events: &[DetectionEvent]) -> Result<(), EngineError> {
    match events
        .windows(2)
        .position(|w| w[1].order_key() < w[0].order_key())
    {
        Some(i) => Err(EngineError::Unsorted { index: i + 1 }),
        None => Ok(()),
    }
}

/// Drops, per detector, every event that arrives less than `dead_time_ns`
/// after the previously kept event on that detector.
pub fn apply_dead_time(
    events: &[DetectionEvent],
    dead_time_ns: f64,
    trial_period_ns: f64,
) -> Result<Vec<DetectionEvent>, EngineError> {
    check_sorted(events)?;
    if !(dead_time_ns >= 0.0) {
        return Err(config_err("run.dead_time_ns", "must be non-negative"));
    }
    let dead = ns_to_ps(dead_time_ns) as i128;
    let period = ns_to_ps(trial_period_ns) as i128;
    let mut last: [Option<i128>; 2] = [None, None];
    let mut kept = Vec::with_capacity(events.len());
    for e in events {
        let abs = e.trial_index as i128 * period + e.time_ps as i128;
        let slot = &mut last[e.detector as usize];
        if slot.is_some_and(|prev| abs - prev < dead) {
            continue;
        }
        *slot = Some(abs);
        kept.push(*e);
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatedEvent {
    pub event: DetectionEvent,
    pub gate: Gate,
}

/// Keeps events inside either gate window, tagged with the gate.
pub fn gate_events(events: &[DetectionEvent], timing: &TrialTiming) -> Vec<GatedEvent> {
    let g1 = timing.gate_bounds_ps(Gate::Gate1);
    let g2 = timing.gate_bounds_ps(Gate::Gate2);
    events
        .iter()
        .filter_map(|e| {
            let gate = if (g1.0..g1.1).contains(&e.time_ps) {
                Gate::Gate1
            } else if (g2.0..g2.1).contains(&e.time_ps) {
                Gate::Gate2
            } else {
                return None;
            };
            Some(GatedEvent { event: *e, gate })
        })
        .collect()
}
