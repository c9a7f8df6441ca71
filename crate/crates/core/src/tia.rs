//! Time-interval analysis of gated detection events.
//!
//! A start event in trial `j` is paired with every stop event in trials
//! `j..=j+K`; the delay between them is histogrammed. The same-trial peak
//! gives `N`, the mean of the `K` later peaks gives `M`, and `N / M` is the
//! normalized correlation `g~`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    check_sorted, gate_events, ns_to_ps, ps_to_ns, Detector, DetectionEvent, EngineError, Gate,
    GatedEvent, TrialTiming,
};
use crate::stats::Verdict;

pub const DEFAULT_OFFSET_TRIALS: usize = 10;
pub const DEFAULT_BIN_WIDTH_NS: f64 = 2.0;
const STARTS_PER_SHARD: usize = 8192;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TiaError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("gated events unsorted at index {index}")]
    Unsorted { index: usize },
    #[error("at least one offset trial is required")]
    NoOffsetTrials,
    #[error("bin width {bin_width_ns} ns must be a positive whole number of picoseconds dividing the trial period {trial_period_ns} ns")]
    BinWidth {
        bin_width_ns: f64,
        trial_period_ns: f64,
    },
    #[error("histogram holds {bins} bins, {needed} needed for {offset_trials} offset trials")]
    InsufficientSpan {
        bins: usize,
        needed: usize,
        offset_trials: usize,
    },
    #[error("offset coincidences sum to zero; g~ is undefined")]
    ZeroNormalization,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("no {0} event stream supplied")]
    MissingStream(&'static str),
}

/// A detector restricted to one gate window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub detector: Detector,
    pub gate: Gate,
}

impl Channel {
    pub const fn new(detector: Detector, gate: Gate) -> Self {
        Self { detector, gate }
    }
}

/// Start/stop channels of one correlation. `stop_delay_ns` is added to every
/// stop time, as a delay line would, so that same-trial delays are never
/// negative when start and stop share a gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub start: Channel,
    pub stop: Channel,
    pub stop_delay_ns: f64,
}

impl Correlation {
    /// Delay chosen so every same-trial pair lands in `[0, 2T)` or later.
    pub fn between(start: Channel, stop: Channel, timing: &TrialTiming) -> Self {
        let lead = timing.gate_center_ns(start.gate) - timing.gate_center_ns(stop.gate);
        Self {
            start,
            stop,
            stop_delay_ns: (lead + timing.gate_width_ns).max(0.0),
        }
    }
}

/// Channels for the three correlations of a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    /// Field 1 split onto both detectors, gate 1.
    pub g11: Correlation,
    /// Field 2 split onto both detectors, gate 2.
    pub g22: Correlation,
    /// D1 in gate 1 against D2 in gate 2.
    pub g12: Correlation,
}

impl ChannelPlan {
    pub fn standard(timing: &TrialTiming) -> Self {
        use Detector::{D1, D2};
        use Gate::{Gate1, Gate2};
        Self {
            g11: Correlation::between(Channel::new(D1, Gate1), Channel::new(D2, Gate1), timing),
            g22: Correlation::between(Channel::new(D1, Gate2), Channel::new(D2, Gate2), timing),
            g12: Correlation::between(Channel::new(D1, Gate1), Channel::new(D2, Gate2), timing),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiaSettings {
    #[serde(default = "default_offset_trials")]
    pub offset_trials: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width_ns: f64,
}

fn default_offset_trials() -> usize {
    DEFAULT_OFFSET_TRIALS
}

fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH_NS
}

impl Default for TiaSettings {
    fn default() -> Self {
        Self {
            offset_trials: DEFAULT_OFFSET_TRIALS,
            bin_width_ns: DEFAULT_BIN_WIDTH_NS,
        }
    }
}

impl TiaSettings {
    /// Bin width and bins per trial period, both validated.
    pub fn binning(&self, trial_period_ns: f64) -> Result<(i64, usize), TiaError> {
        if self.offset_trials < 1 {
            return Err(TiaError::NoOffsetTrials);
        }
        let bw = ns_to_ps(self.bin_width_ns);
        let period = ns_to_ps(trial_period_ns);
        let exact = (self.bin_width_ns * 1000.0 - bw as f64).abs() < 1e-6;
        if bw <= 0 || !exact || period <= 0 || period % bw != 0 {
            return Err(TiaError::BinWidth {
                bin_width_ns: self.bin_width_ns,
                trial_period_ns,
            });
        }
        Ok((bw, (period / bw) as usize))
    }
}

/// Time-resolved coincidences `n(tau)` for `tau` in `[0, (K + 1) trial_period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub correlation: Correlation,
    pub bin_width_ns: f64,
    pub trial_period_ns: f64,
    pub offset_trials: usize,
    pub start_count: u64,
    pub stop_count: u64,
    pub bins: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn bins_per_period(&self) -> usize {
        (ns_to_ps(self.trial_period_ns) / ns_to_ps(self.bin_width_ns)) as usize
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Lower edge of bin `i`.
    pub fn tau_ns(&self, i: usize) -> f64 {
        ps_to_ns(i as i64 * ns_to_ps(self.bin_width_ns))
    }

    fn check_span(&self) -> Result<usize, TiaError> {
        let per = self.bins_per_period();
        let needed = (self.offset_trials + 1) * per;
        if self.offset_trials < 1 || per == 0 || self.bins.len() < needed {
            return Err(TiaError::InsufficientSpan {
                bins: self.bins.len(),
                needed,
                offset_trials: self.offset_trials,
            });
        }
        Ok(per)
    }
}

/// Gated (trial, picosecond) times on one channel.
fn channel_times(events: &[GatedEvent], ch: Channel) -> Vec<(u64, i64)> {
    events
        .iter()
        .filter(|g| g.gate == ch.gate && g.event.detector == ch.detector)
        .map(|g| (g.event.trial_index, g.event.time_ps))
        .collect()
}

/// Accumulates the start/stop delay histogram.
///
/// Every start in trial `j` pairs with every stop in trials `j..=j+K`;
/// starts near the end of the run keep whatever stops exist.
pub fn correlate(
    events: &[GatedEvent],
    correlation: &Correlation,
    trial_period_ns: f64,
    settings: &TiaSettings,
) -> Result<CoincidenceHistogram, TiaError> {
    if let Some(i) = events.windows(2).position(|w| {
        (w[1].event.trial_index, w[1].event.time_ps) < (w[0].event.trial_index, w[0].event.time_ps)
    }) {
        return Err(TiaError::Unsorted { index: i + 1 });
    }
    let (bw, per) = settings.binning(trial_period_ns)?;
    let k = settings.offset_trials as u64;
    let period = ns_to_ps(trial_period_ns);
    let delay = ns_to_ps(correlation.stop_delay_ns);
    let n_bins = (settings.offset_trials + 1) * per;
    let span = n_bins as i64 * bw;

    let starts = channel_times(events, correlation.start);
    let stops = channel_times(events, correlation.stop);

    let bins = starts
        .par_chunks(STARTS_PER_SHARD)
        .map(|shard| {
            let mut local = vec![0u64; n_bins];
            for &(j, t_start) in shard {
                let first = stops.partition_point(|&(trial, _)| trial < j);
                for &(trial, t_stop) in stops[first..].iter().take_while(|s| s.0 <= j + k) {
                    let tau = (trial - j) as i64 * period + t_stop + delay - t_start;
                    if (0..span).contains(&tau) {
                        local[(tau / bw) as usize] += 1;
                    }
                }
            }
            local
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );

    Ok(CoincidenceHistogram {
        correlation: *correlation,
        bin_width_ns: settings.bin_width_ns,
        trial_period_ns,
        offset_trials: settings.offset_trials,
        start_count: starts.len() as u64,
        stop_count: stops.len() as u64,
        bins,
    })
}

/// `m(tau)`: the mean of the offset peaks, each shifted back onto the
/// same-trial window `[0, trial_period)`.
pub fn offset_average(h: &CoincidenceHistogram) -> Result<Vec<f64>, TiaError> {
    let per = h.check_span()?;
    let k = h.offset_trials;
    Ok((0..per)
        .map(|b| (1..=k).map(|i| h.bins[i * per + b] as f64).sum::<f64>() / k as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    /// `N`: coincidences within the same trial.
    pub same_trial: u64,
    /// Coincidence total in each offset peak `k = 1..=K`.
    pub offset_sums: Vec<u64>,
    /// `M`: mean offset-peak total.
    pub m: f64,
}

pub fn totals(h: &CoincidenceHistogram) -> Result<Totals, TiaError> {
    let per = h.check_span()?;
    let same_trial = h.bins[..per].iter().sum();
    let offset_sums: Vec<u64> = (1..=h.offset_trials)
        .map(|i| h.bins[i * per..(i + 1) * per].iter().sum())
        .collect();
    let m = offset_sums.iter().sum::<u64>() as f64 / offset_sums.len() as f64;
    Ok(Totals {
        same_trial,
        offset_sums,
        m,
    })
}

/// A normalized correlation `N / M` with its Poisson error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GEstimate {
    pub value: f64,
    pub sigma: f64,
    pub n_total: u64,
    pub m_total: f64,
    /// Un-averaged coincidence count over all offset peaks.
    pub offset_total: u64,
    /// Set when `N = 0`, so that `sigma = 0` carries no information.
    pub degenerate: bool,
}

impl GEstimate {
    /// An estimate known only by value and error, e.g. a published number.
    pub fn from_value(value: f64, sigma: f64) -> Self {
        Self {
            value,
            sigma,
            n_total: 0,
            m_total: 0.0,
            offset_total: 0,
            degenerate: false,
        }
    }
}

/// `g~ = N / M` with `sigma = g~ sqrt(1/N + 1/S)`, `S` the summed offset
/// coincidences, treating `N` and `S` as independent Poisson counts.
pub fn estimate_g(n: u64, offset_sums: &[u64]) -> Result<GEstimate, TiaError> {
    let offset_total: u64 = offset_sums.iter().sum();
    if offset_sums.is_empty() || offset_total == 0 {
        return Err(TiaError::ZeroNormalization);
    }
    let m = offset_total as f64 / offset_sums.len() as f64;
    let value = n as f64 / m;
    let (sigma, degenerate) = if n == 0 {
        (0.0, true)
    } else {
        (
            value * (1.0 / n as f64 + 1.0 / offset_total as f64).sqrt(),
            false,
        )
    };
    Ok(GEstimate {
        value,
        sigma,
        n_total: n,
        m_total: m,
        offset_total,
        degenerate,
    })
}

pub fn estimate_from_histogram(h: &CoincidenceHistogram) -> Result<GEstimate, TiaError> {
    let t = totals(h)?;
    estimate_g(t.same_trial, &t.offset_sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsReport {
    pub g11: GEstimate,
    pub g22: GEstimate,
    pub g12: GEstimate,
    /// `g12^2`.
    pub numerator: Measured,
    /// `g11 g22`.
    pub denominator: Measured,
    pub ratio: Measured,
    pub verdict: Verdict,
    /// `(R - 1) / sigma_R`; absent when `sigma_R = 0`.
    pub significance: Option<f64>,
}

impl CsReport {
    /// Violated with at least `sigmas` standard deviations.
    pub fn violated_beyond(&self, sigmas: f64) -> bool {
        self.verdict == Verdict::Violated && self.significance.is_some_and(|s| s > sigmas)
    }
}

/// Tests `g12^2 <= g11 g22` with first-order error propagation.
pub fn cs_test(g11: &GEstimate, g22: &GEstimate, g12: &GEstimate) -> Result<CsReport, TiaError> {
    for (name, g) in [("g11", g11), ("g22", g22), ("g12", g12)] {
        if !(g.value > 0.0 && g.value.is_finite()) {
            return Err(TiaError::NonPositive {
                name,
                value: g.value,
            });
        }
    }
    let rel = |g: &GEstimate| g.sigma / g.value;
    let num = g12.value * g12.value;
    let den = g11.value * g22.value;
    let ratio = num / den;
    let ratio_sigma =
        ratio * (4.0 * rel(g12).powi(2) + rel(g11).powi(2) + rel(g22).powi(2)).sqrt();
    Ok(CsReport {
        g11: *g11,
        g22: *g22,
        g12: *g12,
        numerator: Measured {
            value: num,
            sigma: 2.0 * num * rel(g12),
        },
        denominator: Measured {
            value: den,
            sigma: den * (rel(g11).powi(2) + rel(g22).powi(2)).sqrt(),
        },
        ratio: Measured {
            value: ratio,
            sigma: ratio_sigma,
        },
        verdict: Verdict::from_ratio(ratio),
        significance: (ratio_sigma > 0.0).then(|| (ratio - 1.0) / ratio_sigma),
    })
}

/// Raw event streams of the three splitter settings.
#[derive(Debug, Clone, Copy)]
pub struct RunStreams<'a> {
    pub pair: &'a [DetectionEvent],
    pub auto1: &'a [DetectionEvent],
    pub auto2: &'a [DetectionEvent],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub cs: CsReport,
    pub h11: CoincidenceHistogram,
    pub h22: CoincidenceHistogram,
    pub h12: CoincidenceHistogram,
}

impl CorrelationReport {
    pub fn g11(&self) -> &GEstimate {
        &self.cs.g11
    }

    pub fn g22(&self) -> &GEstimate {
        &self.cs.g22
    }

    pub fn g12(&self) -> &GEstimate {
        &self.cs.g12
    }
}

/// Gates each stream, correlates it on its plan channels and runs the
/// Cauchy-Schwarz test: `g11` from the field-1 splitter run, `g22` from the
/// field-2 splitter run and `g12` from the pair run.
pub fn analyze_run(
    streams: RunStreams<'_>,
    timing: &TrialTiming,
    settings: &TiaSettings,
    plan: &ChannelPlan,
) -> Result<CorrelationReport, TiaError> {
    let histogram = |events: &[DetectionEvent], c: &Correlation| {
        check_sorted(events)?;
        correlate(&gate_events(events, timing), c, timing.trial_period_ns, settings)
    };
    let h11 = histogram(streams.auto1, &plan.g11)?;
    let h22 = histogram(streams.auto2, &plan.g22)?;
    let h12 = histogram(streams.pair, &plan.g12)?;
    let cs = cs_test(
        &estimate_from_histogram(&h11)?,
        &estimate_from_histogram(&h22)?,
        &estimate_from_histogram(&h12)?,
    )?;
    Ok(CorrelationReport { cs, h11, h22, h12 })
}
