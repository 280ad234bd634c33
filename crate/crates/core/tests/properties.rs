use algdiff::cluster::{collect_pulses, group_beats, ClusterParams, TimeCoordinate};
use algdiff::detect::{
    consolidate, detect_channel, filter_channel, ChannelDetections, DerivativeSignal, DetectParams,
    Detection,
};
use algdiff::fir::{discretize, FirFilter};
use algdiff::kernel::KernelSpec;
use algdiff::reconstruct::{estimate_amplitude, PulseModel};
use algdiff::record::{load_record, MultichannelRecord};
use algdiff::synth::{generate, SynthScenario};
use proptest::prelude::*;

const FS: f64 = 1000.0;
const SAMPLES: usize = 3000;

fn short_filter() -> FirFilter {
    discretize(&KernelSpec::symmetric(3, 12.0, 0.05), 3, FS).unwrap()
}

fn impulses(at: &[usize], scale: f64) -> MultichannelRecord {
    let mut x = vec![0.0; SAMPLES];
    for &k in at {
        x[k] = scale;
    }
    MultichannelRecord::new(FS, vec![x]).unwrap()
}

fn detect(rec: &MultichannelRecord, fir: &FirFilter) -> ChannelDetections {
    let d = filter_channel(rec, 0, fir).unwrap();
    let params = DetectParams {
        percentile: 98.0,
        l_min: None,
    };
    detect_channel(&d, &params, fir.source_spec.window).unwrap()
}

fn positions(det: &ChannelDetections) -> Vec<(usize, usize)> {
    det.detections
        .iter()
        .map(|d| (d.peak_index, d.start_index))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn detection_is_shift_equivariant(gap in 300usize..600, shift in 0usize..400) {
        let fir = short_filter();
        let base = [200, 200 + gap, 200 + 2 * gap];
        let a = detect(&impulses(&base, 1.0), &fir);
        let moved: Vec<usize> = base.iter().map(|k| k + shift).collect();
        let b = detect(&impulses(&moved, 1.0), &fir);
        prop_assert_eq!(a.detections.len(), 3);
        let shifted: Vec<(usize, usize)> = positions(&a).iter().map(|(p, s)| (p + shift, s + shift)).collect();
        prop_assert_eq!(shifted, positions(&b));
    }

    #[test]
    fn detection_is_scale_invariant(exp in -20i32..20) {
        let fir = short_filter();
        let at = [250, 900, 1700, 2400];
        let a = detect(&impulses(&at, 1.0), &fir);
        let b = detect(&impulses(&at, 2f64.powi(exp)), &fir);
        prop_assert_eq!(positions(&a), positions(&b));
    }

    #[test]
    fn consolidated_crossings_are_spaced(mut xs in prop::collection::vec(0usize..5000, 0..60), l_min in 1usize..200) {
        xs.sort_unstable();
        let kept = consolidate(&xs, l_min);
        for w in kept.windows(2) {
            prop_assert!(w[1] - w[0] >= l_min);
        }
        if let Some(first) = xs.first() {
            prop_assert_eq!(kept.first(), Some(first));
        }
    }

    #[test]
    fn grouping_partitions_pulses(times in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 0..12), 1..6), dt in 0.02f64..0.05) {
        let detections: Vec<ChannelDetections> = times
            .iter()
            .enumerate()
            .map(|(c, ts)| {
                let mut ts = ts.clone();
                ts.sort_by(f64::total_cmp);
                ChannelDetections {
                    channel: c,
                    threshold: 1.0,
                    detections: ts
                        .iter()
                        .map(|t| Detection {
                            channel: c,
                            peak_index: (t * FS) as usize,
                            start_index: (t * FS) as usize,
                            peak_time_s: *t,
                            start_time_s: *t,
                            magnitude: 1.0,
                            flags: vec![],
                        })
                        .collect(),
                }
            })
            .collect();
        let pulses = collect_pulses(&detections, TimeCoordinate::Start);
        let groups = group_beats(&pulses, dt);
        let mut seen: Vec<(usize, usize)> = groups.iter().flat_map(|g| g.members.iter().map(|p| (p.channel, p.detection))).collect();
        seen.sort_unstable();
        let mut all: Vec<(usize, usize)> = pulses.iter().map(|p| (p.channel, p.detection)).collect();
        all.sort_unstable();
        prop_assert_eq!(seen, all);
        for w in groups.windows(2) {
            prop_assert!(w[1].span().0 - w[0].span().1 > dt);
        }
        for g in &groups {
            for m in g.members.windows(2) {
                prop_assert!(m[1].time_s - m[0].time_s <= dt);
            }
        }
    }

    #[test]
    fn amplitude_estimate_is_linear(seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        use rand::{Rng, SeedableRng};
        let fir = short_filter();
        let model = PulseModel::new(&fir).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..SAMPLES).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..SAMPLES).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sig = |s: Vec<f64>| DerivativeSignal { channel: 0, order: 3, samples: s, fs: FS, warmup: fir.warmup() };
        let start = 1.2345;
        let ex = estimate_amplitude(&sig(x.clone()), &model, start).unwrap().amplitude;
        let ey = estimate_amplitude(&sig(y.clone()), &model, start).unwrap().amplitude;
        let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let ez = estimate_amplitude(&sig(z), &model, start).unwrap().amplitude;
        let want = a * ex + b * ey;
        prop_assert!((ez - want).abs() <= 1e-9 * (a.abs() * ex.abs() + b.abs() * ey.abs()).max(1e-12));
    }
}

#[test]
fn noise_gain_matches_integrated_power_response() {
    let fir = short_filter();
    let m = 20_000;
    let df = FS / 2.0 / m as f64;
    // trapezoid over [0, fs/2], doubled for the negative half
    let mut acc = 0.0;
    for i in 0..=m {
        let h = fir.frequency_response(i as f64 * df).unwrap().magnitude;
        let w = if i == 0 || i == m { 0.5 } else { 1.0 };
        acc += w * h * h;
    }
    let integral = 2.0 * acc * df / FS;
    let gain = fir.noise_gain();
    assert!((integral / gain - 1.0).abs() < 1e-6, "{integral} vs {gain}");
}

#[test]
fn synthesis_is_deterministic_and_additive() {
    let sc = SynthScenario::reference();
    let (a, truth) = generate(&sc).unwrap();
    let (b, _) = generate(&sc).unwrap();
    assert_eq!(a, b);
    for (c, comp) in truth.components.iter().enumerate() {
        assert_eq!(comp.total(), a.data[c]);
    }
    let mut other = sc.clone();
    other.seed += 1;
    let (c, _) = generate(&other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn record_round_trips_through_both_formats() {
    let mut sc = SynthScenario::reference();
    sc.duration = 1.0;
    sc.sources.clear();
    let (rec, _) = generate(&sc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["r.csv", "r.bin"] {
        let p = dir.path().join(name);
        rec.save(&p).unwrap();
        assert_eq!(load_record(&p).unwrap(), rec, "{name}");
    }
}

#[test]
fn cluster_defaults_are_in_range() {
    ClusterParams::default().validate(8).unwrap();
}
