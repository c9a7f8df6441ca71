//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's own moment or histogram code.

#![allow(dead_code)]

use dlcz::engine::{DetectionEvent, Detector, Gate, GatedEvent, TrialTiming};
use dlcz::stats::{SourceKind, SourceParams};
use dlcz::tia::{Channel, Correlation};
use rand::Rng;

fn binom_pmf(n: usize, k: usize, q: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32)
}

fn poisson_pmf(k: usize, lam: f64) -> f64 {
    if lam == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let mut v = (-lam).exp();
    for i in 1..=k {
        v *= lam / i as f64;
    }
    v
}

/// `(g11, g22, g12)` of the detected counts, by explicit summation over a
/// joint table built stage by stage: source, read transfer, detection, noise.
pub fn brute_force_moments(sp: &SourceParams, nmax: usize) -> (f64, f64, f64) {
    let side = nmax + 1;
    let mut src = vec![vec![0.0; side]; side];
    for a in 0..side {
        for b in 0..side {
            src[a][b] = match sp.kind {
                SourceKind::Pair if a == b => sp.p.powi(a as i32) / (1.0 + sp.p).powi(a as i32 + 1),
                SourceKind::Pair => 0.0,
                SourceKind::ClassicalTwin => {
                    // integrate Poisson(I) x Poisson(I) over exponential I of mean p
                    let mut c = 1.0;
                    for i in 0..a {
                        c = c * (a + b - i) as f64 / (i + 1) as f64;
                    }
                    c * sp.p.powi((a + b) as i32) / (1.0 + 2.0 * sp.p).powi((a + b) as i32 + 1)
                }
            };
        }
    }
    let mut read = vec![vec![0.0; side]; side];
    for a in 0..side {
        for b in 0..side {
            for m in 0..=b {
                read[a][m] += src[a][b] * binom_pmf(b, m, sp.zeta);
            }
        }
    }
    let mut det = vec![vec![0.0; side]; side];
    for a in 0..side {
        for b in 0..side {
            if read[a][b] == 0.0 {
                continue;
            }
            for k1 in 0..=a {
                for k2 in 0..=b {
                    det[k1][k2] += read[a][b] * binom_pmf(a, k1, sp.eta1) * binom_pmf(b, k2, sp.eta2);
                }
            }
        }
    }
    let wide = side + 40;
    let lam2 = sp.bg2 + sp.leak2;
    let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k1 in 0..side {
        for k2 in 0..side {
            if det[k1][k2] == 0.0 {
                continue;
            }
            for x in k1..wide {
                let px = det[k1][k2] * poisson_pmf(x - k1, sp.bg1);
                if px == 0.0 {
                    break;
                }
                for y in k2..wide {
                    let w = px * poisson_pmf(y - k2, lam2);
                    let (xf, yf) = (x as f64, y as f64);
                    s1 += w * xf;
                    s2 += w * yf;
                    s11 += w * xf * (xf - 1.0);
                    s22 += w * yf * (yf - 1.0);
                    s12 += w * xf * yf;
                }
            }
        }
    }
    (s11 / (s1 * s1), s22 / (s2 * s2), s12 / (s1 * s2))
}

/// Every start/stop pair, checked one by one.
pub fn brute_force_histogram(
    events: &[GatedEvent],
    correlation: &Correlation,
    trial_period_ns: f64,
    offset_trials: usize,
    bin_width_ns: f64,
) -> Vec<u64> {
    let period = (trial_period_ns * 1000.0).round() as i64;
    let bw = (bin_width_ns * 1000.0).round() as i64;
    let delay = (correlation.stop_delay_ns * 1000.0).round() as i64;
    let n_bins = (offset_trials + 1) * (period / bw) as usize;
    let on = |g: &GatedEvent, ch: Channel| g.gate == ch.gate && g.event.detector == ch.detector;
    let mut bins = vec![0u64; n_bins];
    for s in events.iter().filter(|g| on(g, correlation.start)) {
        for t in events.iter().filter(|g| on(g, correlation.stop)) {
            let (js, jt) = (s.event.trial_index as i64, t.event.trial_index as i64);
            let k = jt - js;
            if k < 0 || k > offset_trials as i64 {
                continue;
            }
            let tau = k * period + t.event.time_ps + delay - s.event.time_ps;
            if tau >= 0 && tau < n_bins as i64 * bw {
                bins[(tau / bw) as usize] += 1;
            }
        }
    }
    bins
}

/// `n` events scattered uniformly over both gates of `trials` trials,
/// sorted by (trial, time).
pub fn random_gated_stream<R: Rng>(rng: &mut R, n: usize, trials: u64, timing: &TrialTiming) -> Vec<GatedEvent> {
    let mut out: Vec<GatedEvent> = (0..n)
        .map(|_| {
            let gate = if rng.gen_bool(0.5) { Gate::Gate1 } else { Gate::Gate2 };
            let detector = if rng.gen_bool(0.5) { Detector::D1 } else { Detector::D2 };
            let (lo, hi) = timing.gate_bounds_ps(gate);
            GatedEvent {
                event: DetectionEvent {
                    trial_index: rng.gen_range(0..trials),
                    detector,
                    time_ps: rng.gen_range(lo..hi),
                },
                gate,
            }
        })
        .collect();
    out.sort_by_key(|g| (g.event.trial_index, g.event.time_ps));
    out
}

/// Gated counts per trial on one channel.
pub fn counts_per_trial(events: &[GatedEvent], ch: Channel, trials: u64) -> Vec<u32> {
    let mut c = vec![0u32; trials as usize];
    for g in events {
        if g.gate == ch.gate && g.event.detector == ch.detector {
            c[g.event.trial_index as usize] += 1;
        }
    }
    c
}

/// Estimate and standard error of a statistic from `batches` equal slices.
pub fn batched<F>(n: usize, batches: usize, stat: F) -> (f64, f64)
where
    F: Fn(std::ops::Range<usize>) -> f64,
{
    let size = n / batches;
    let vals: Vec<f64> = (0..batches).map(|b| stat(b * size..(b + 1) * size)).collect();
    let mean = vals.iter().sum::<f64>() / batches as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (stat(0..n), (var / batches as f64).sqrt())
}

/// Upper 1% point of the chi-square distribution for small `dof`.
pub fn chi2_crit_1pct(dof: usize) -> f64 {
    [6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475][dof - 1]
}

pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}
