//! Fits the free source parameters to measured correlation values.
//!
//! With the read transfer and detection efficiencies held fixed, the
//! excitation probability `p`, the field-1 background `bg1` and the total
//! per-gate noise on field 2 are adjusted by least squares so that the
//! analytic per-gate prediction matches three target values of
//! `(g11, g22, g12)`. The field-2 noise is split between uniform background
//! and read-pulse leakage with a fixed share.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{per_gate_source, TrialTiming};
use crate::stats::{
    auto_cutoff, predict_report, MomentSet, SourceKind, SourceParams, StatsError,
    DEFAULT_TRUNCATION_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("prediction has an undefined correlation at p = {p}")]
    Undefined { p: f64 },
    #[error("invalid setup: {0}")]
    Setup(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub g11: f64,
    pub g22: f64,
    pub g12: f64,
}

/// Measured values for the 60 ns gate.
pub const PAPER_T60_TARGETS: Targets = Targets {
    g11: 1.739,
    g22: 1.710,
    g12: 2.335,
};

/// Parameters held fixed during the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub zeta: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Fraction of the per-gate field-2 noise attributed to leakage.
    pub leak_share: f64,
    /// Upper bound on `p` (the pair law needs `p < 1`).
    pub p_max: f64,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            zeta: 0.6,
            eta1: 0.15,
            eta2: 0.15,
            leak_share: 1.0 / 3.0,
            p_max: 0.999,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub source: SourceParams,
    pub predicted: MomentSet,
    pub objective: f64,
    pub iterations: usize,
    pub on_p_bound: bool,
}

const P_MIN: f64 = 1e-4;
const NOISE_MAX: f64 = 1.0;

fn clamp_point(x: [f64; 3], p_max: f64) -> [f64; 3] {
    [
        x[0].clamp(P_MIN, p_max),
        x[1].clamp(0.0, NOISE_MAX),
        x[2].clamp(0.0, NOISE_MAX),
    ]
}

fn source_at(x: [f64; 3], setup: &Setup, timing: &TrialTiming) -> SourceParams {
    let [p, bg1, noise2] = x;
    let raw = SourceParams {
        kind: SourceKind::Pair,
        p,
        zeta: setup.zeta,
        eta1: setup.eta1,
        eta2: setup.eta2,
        bg1,
        bg2: (1.0 - setup.leak_share) * noise2,
        leak2: 0.0,
    };
    // leakage is thinned by the read-envelope gate acceptance
    let acceptance2 = per_gate_source(&SourceParams { leak2: 1.0, ..raw }, timing).leak2;
    SourceParams {
        leak2: setup.leak_share * noise2 / acceptance2,
        ..raw
    }
}

/// Analytic per-gate moments for `sp` under `timing`.
pub fn gated_prediction(
    sp: &SourceParams,
    timing: &TrialTiming,
) -> Result<MomentSet, StatsError> {
    let cutoff = auto_cutoff(sp.p, DEFAULT_TRUNCATION_THRESHOLD);
    predict_report(&per_gate_source(sp, timing), cutoff)
}

fn objective(
    x: [f64; 3],
    targets: &Targets,
    setup: &Setup,
    timing: &TrialTiming,
) -> Result<(f64, MomentSet), CalibrationError> {
    let m = gated_prediction(&source_at(x, setup, timing), timing)?;
    match (m.g2_11, m.g2_22, m.g2_12) {
        (Some(a), Some(b), Some(c)) => {
            let r = (a - targets.g11).powi(2) + (b - targets.g22).powi(2) + (c - targets.g12).powi(2);
            Ok((r, m))
        }
        _ => Err(CalibrationError::Undefined { p: x[0] }),
    }
}

/// Least-squares fit by a bounded Nelder-Mead search. Deterministic.
pub fn calibrate(
    targets: &Targets,
    setup: &Setup,
    timing: &TrialTiming,
) -> Result<Calibration, CalibrationError> {
    if !(setup.p_max > P_MIN && setup.p_max < 1.0) {
        return Err(CalibrationError::Setup("p_max must lie in (1e-4, 1)"));
    }
    if !(0.0..=1.0).contains(&setup.leak_share) {
        return Err(CalibrationError::Setup("leak_share must lie in [0, 1]"));
    }
    timing
        .validate()
        .map_err(|_| CalibrationError::Setup("timing is invalid"))?;

    const MAX_ITER: usize = 5000;
    const F_TOL: f64 = 1e-18;
    const X_TOL: f64 = 1e-12;

    let f = |x: [f64; 3]| objective(x, targets, setup, timing).map(|(v, _)| v);
    let start = clamp_point([0.5 * setup.p_max, 0.02, 0.02], setup.p_max);
    let steps = [0.25 * setup.p_max, 0.01, 0.01];
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, f(start)?));
    for (i, step) in steps.iter().enumerate() {
        let mut x = start;
        x[i] += step;
        let x = clamp_point(x, setup.p_max);
        simplex.push((x, f(x)?));
    }

    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < F_TOL && size < X_TOL {
            break;
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for i in 0..3 {
                centroid[i] += x[i] / 3.0;
            }
        }
        let along = |t: f64| {
            let worst = simplex[3].0;
            let mut x = [0.0; 3];
            for i in 0..3 {
                x[i] = centroid[i] + t * (worst[i] - centroid[i]);
            }
            clamp_point(x, setup.p_max)
        };
        let xr = along(-1.0);
        let fr = f(xr)?;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(xe)?;
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[3].1 {
                let x = along(-0.5);
                (x, f(x)?)
            } else {
                let x = along(0.5);
                (x, f(x)?)
            };
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let mut x = [0.0; 3];
                    for i in 0..3 {
                        x[i] = best[i] + 0.5 * (entry.0[i] - best[i]);
                    }
                    let x = clamp_point(x, setup.p_max);
                    *entry = (x, f(x)?);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let best = simplex[0].0;
    let (value, predicted) = objective(best, targets, setup, timing)?;
    Ok(Calibration {
        source: source_at(best, setup, timing),
        predicted,
        objective: value,
        iterations,
        on_p_bound: (setup.p_max - best[0]) < 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_known_source() {
        let timing = TrialTiming::default();
        let setup = Setup::default();
        let truth = source_at([0.3, 0.01, 0.004], &setup, &timing);
        let m = gated_prediction(&truth, &timing).unwrap();
        let targets = Targets {
            g11: m.g2_11.unwrap(),
            g22: m.g2_22.unwrap(),
            g12: m.g2_12.unwrap(),
        };
        let cal = calibrate(&targets, &setup, &timing).unwrap();
        assert!(cal.objective < 1e-14, "objective {}", cal.objective);
        assert!((cal.source.p - 0.3).abs() < 1e-5, "p = {}", cal.source.p);
        assert!((cal.source.bg1 - 0.01).abs() < 1e-6);
        assert!(!cal.on_p_bound);
    }

    #[test]
    fn rejects_bad_setup() {
        let setup = Setup {
            p_max: 1.0,
            ..Setup::default()
        };
        assert!(calibrate(&PAPER_T60_TARGETS, &setup, &TrialTiming::default()).is_err());
    }
}
