mod common;

use dlcz::engine::{gate_events, Detector, Gate, RunConfig, TrialTiming};
use dlcz::io::presets;
use dlcz::pipeline::{analyze_streams, predict, run_scenario, simulate_modes};
use dlcz::stats::SourceParams;
use dlcz::tia::{
    correlate, cs_test, estimate_g, offset_average, totals, Channel, ChannelPlan, CoincidenceHistogram,
    Correlation, GEstimate, TiaSettings,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_timing() -> TrialTiming {
    TrialTiming {
        trial_period_ns: 1000.0,
        write_center_ns: 100.0,
        gate1_center_ns: 100.0,
        gate2_center_ns: 505.0,
        ..TrialTiming::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlate_equals_all_pairs(
        seed in any::<u64>(),
        n in 0usize..=1000,
        trials in 1u64..40,
        k in 1usize..6,
        which in 0usize..3,
        bin in prop::sample::select(vec![1.0, 2.0, 0.5, 8.0]),
    ) {
        let timing = small_timing();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = common::random_gated_stream(&mut rng, n, trials, &timing);
        let plan = ChannelPlan::standard(&timing);
        let corr = [plan.g11, plan.g22, plan.g12][which];
        let settings = TiaSettings { offset_trials: k, bin_width_ns: bin };
        let h = correlate(&events, &corr, timing.trial_period_ns, &settings).unwrap();
        let oracle = common::brute_force_histogram(&events, &corr, timing.trial_period_ns, k, bin);
        prop_assert_eq!(h.bins, oracle);
    }
}

fn crafted(per: usize, k: usize, fill: impl Fn(usize) -> u64) -> CoincidenceHistogram {
    let timing = small_timing();
    CoincidenceHistogram {
        correlation: ChannelPlan::standard(&timing).g12,
        bin_width_ns: timing.trial_period_ns / per as f64,
        trial_period_ns: timing.trial_period_ns,
        offset_trials: k,
        start_count: 0,
        stop_count: 0,
        bins: (0..(k + 1) * per).map(fill).collect(),
    }
}

#[test]
fn crafted_histograms() {
    // one coincidence in every bin
    let h = crafted(4, 2, |_| 1);
    assert_eq!(offset_average(&h).unwrap(), vec![1.0; 4]);
    let t = totals(&h).unwrap();
    assert_eq!((t.same_trial, t.offset_sums.clone(), t.m), (4, vec![4, 4], 4.0));

    // peak k holds k+1 counts in its first bin only
    let h = crafted(5, 3, |i| if i % 5 == 0 { (i / 5 + 1) as u64 } else { 0 });
    assert_eq!(offset_average(&h).unwrap(), vec![3.0, 0.0, 0.0, 0.0, 0.0]);
    let t = totals(&h).unwrap();
    assert_eq!((t.same_trial, t.offset_sums.clone(), t.m), (1, vec![2, 3, 4], 3.0));

    // bin index as count, two bins per period, one offset trial
    let h = crafted(2, 1, |i| i as u64);
    assert_eq!(offset_average(&h).unwrap(), vec![2.0, 3.0]);
    let t = totals(&h).unwrap();
    assert_eq!((t.same_trial, t.offset_sums.clone(), t.m), (1, vec![5], 5.0));
}

#[test]
fn estimate_and_cs_on_quoted_values() {
    let g = estimate_g(5450, &[2335; 10]).unwrap();
    assert!((g.value - 5450.0 / 2335.0).abs() < 1e-12);
    let cs = cs_test(
        &GEstimate::from_value(1.739, 0.020),
        &GEstimate::from_value(1.710, 0.015),
        &GEstimate::from_value(2.335, 0.014),
    )
    .unwrap();
    assert!((cs.numerator.value - 5.45).abs() < 0.005);
    assert!((cs.numerator.sigma - 0.065).abs() < 0.005);
    assert!((cs.denominator.value - 2.97).abs() < 0.005);
    assert!((cs.denominator.sigma - 0.04).abs() < 0.005);
    let cs = cs_test(
        &GEstimate::from_value(1.72, 0.04),
        &GEstimate::from_value(1.52, 0.05),
        &GEstimate::from_value(2.45, 0.10),
    )
    .unwrap();
    assert!((cs.numerator.value - 6.00).abs() < 0.005);
    assert!((cs.denominator.value - 2.61).abs() < 0.005);
}

#[test]
fn sharding_does_not_change_histogram() {
    let s = presets::get(presets::PAPER_T60).unwrap().with_trials(200_000);
    let streams = simulate_modes(&s).unwrap();
    let timing = &s.run.timing;
    let gated = gate_events(&streams.pair, timing);
    let corr = ChannelPlan::standard(timing).g12;
    let settings = TiaSettings::default();
    let base = correlate(&gated, &corr, timing.trial_period_ns, &settings).unwrap();
    for workers in [1, 3, 7] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        let h = pool.install(|| correlate(&gated, &corr, timing.trial_period_ns, &settings).unwrap());
        assert_eq!(h, base);
    }
}

#[test]
fn offset_profile_matches_same_trial_for_independent_streams() {
    // uncorrelated backgrounds: n(tau) and m(tau) agree bin by bin
    let s = presets::get(presets::BACKGROUND_ONLY).unwrap().with_trials(400_000);
    let streams = simulate_modes(&s).unwrap();
    let report = analyze_streams(&s, &streams).unwrap();
    for h in [&report.h11, &report.h22, &report.h12] {
        let m = offset_average(h).unwrap();
        let k = h.offset_trials as f64;
        for (b, &mean) in m.iter().enumerate() {
            let n = h.bins[b] as f64;
            let sigma = (mean + mean / k).sqrt().max(1.0);
            assert!((n - mean).abs() <= 5.0 * sigma, "bin {b}: n={n} m={mean}");
        }
    }
}

#[test]
fn estimates_converge_to_oracle() {
    let noisy = SourceParams {
        p: 0.1,
        zeta: 0.6,
        eta1: 0.3,
        eta2: 0.3,
        bg1: 0.01,
        bg2: 0.01,
        leak2: 0.005,
        ..SourceParams::ideal(0.1)
    };
    let mut s = presets::get(presets::PAPER_T60).unwrap().with_trials(1_000_000);
    s.run = RunConfig { source: noisy, ..s.run };
    for scenario in [s, presets::get(presets::PAPER_T60).unwrap()] {
        let out = run_scenario(&scenario).unwrap();
        let oracle = predict(&scenario).unwrap();
        let cs = &out.report.cs;
        for (g, o) in [(cs.g11, oracle.g2_11), (cs.g22, oracle.g2_22), (cs.g12, oracle.g2_12)] {
            let o = o.unwrap();
            assert!((g.value - o).abs() < 5.0 * g.sigma, "{}: {} vs {o} ± {}", scenario.name, g.value, g.sigma);
        }
    }
}

#[test]
fn normalization_soundness() {
    // 100 seeded runs of independent channels: the mean g~ is 1 within 3 mean sigmas
    let base = presets::get(presets::BACKGROUND_ONLY).unwrap().with_trials(20_000);
    let (mut sum, mut sig) = ([0.0; 3], [0.0; 3]);
    let runs = 100;
    for seed in 0..runs {
        let s = base.clone().with_seed(1000 + seed);
        let cs = run_scenario(&s).unwrap().report.cs;
        for (i, g) in [cs.g11, cs.g22, cs.g12].iter().enumerate() {
            sum[i] += g.value;
            sig[i] += g.sigma;
        }
    }
    for i in 0..3 {
        let (mean, sbar) = (sum[i] / runs as f64, sig[i] / runs as f64);
        assert!((mean - 1.0).abs() <= 3.0 * sbar, "g[{i}] mean {mean}, sigma {sbar}");
    }
}

#[test]
fn same_gate_pairs_need_stop_delay() {
    let t = TrialTiming::default();
    let c = Correlation::between(Channel::new(Detector::D1, Gate::Gate1), Channel::new(Detector::D2, Gate::Gate1), &t);
    assert_eq!(c.stop_delay_ns, t.gate_width_ns);
    let c = Correlation::between(Channel::new(Detector::D1, Gate::Gate1), Channel::new(Detector::D2, Gate::Gate2), &t);
    assert_eq!(c.stop_delay_ns, 0.0);
}
