use attnpipe_core::data_model::GazeTrack;
use attnpipe_core::gaze_features::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATE: f64 = 120.0;

fn track(points: &[(f64, f64)], conf: f64) -> GazeTrack {
    let n = points.len();
    GazeTrack::new(
        (0..n).map(|i| i as f64 / RATE).collect(),
        points.iter().map(|p| p.0).collect(),
        points.iter().map(|p| p.1).collect(),
        vec![conf; n],
    )
    .unwrap()
}

/// Textbook I-DT: take a minimal window, grow it while dispersion holds,
/// emit it as a fixation, otherwise drop the first point.
fn idt_oracle(t: &[f64], x: &[f64], y: &[f64], thr: f64, min_dur: f64) -> Vec<(f64, f64)> {
    let disp = |a: usize, b: usize| {
        let xs = &x[a..=b];
        let ys = &y[a..=b];
        let mx = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        let my = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
        mx + my
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < t.len() {
        let mut j = i;
        while j < t.len() && t[j] - t[i] < min_dur - 1e-12 {
            j += 1;
        }
        if j >= t.len() {
            break;
        }
        if disp(i, j) <= thr {
            while j + 1 < t.len() && disp(i, j + 1) <= thr {
                j += 1;
            }
            out.push((t[i], t[j]));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn dwell_and_jump(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for _ in 0..8 {
        let c = (rng.random_range(0.3..0.7), rng.random_range(0.3..0.7));
        let len = rng.random_range(5..60);
        for _ in 0..len {
            pts.push((c.0 + rng.random_range(-0.004..0.004), c.1 + rng.random_range(-0.004..0.004)));
        }
    }
    pts
}

#[test]
fn detector_matches_hand_idt() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let pts = dwell_and_jump(&mut rng);
        let tr = track(&pts, 1.0);
        let got: Vec<(f64, f64)> = detect_fixations(&tr, DISPERSION_THRESHOLD, MIN_FIXATION_DURATION)
            .iter()
            .map(|f| (f.start, f.end))
            .collect();
        let want = idt_oracle(tr.timestamps(), tr.x(), tr.y(), DISPERSION_THRESHOLD, MIN_FIXATION_DURATION);
        assert_eq!(got, want);
    }
}

#[test]
fn random_scatter_has_no_fixations() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pts: Vec<(f64, f64)> = (0..360).map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))).collect();
    let tr = track(&pts, 1.0);
    assert!(idt_oracle(tr.timestamps(), tr.x(), tr.y(), DISPERSION_THRESHOLD, MIN_FIXATION_DURATION).is_empty());
    assert!(detect_fixations(&tr, DISPERSION_THRESHOLD, MIN_FIXATION_DURATION).is_empty());
    let f = gaze_feature_vector(&tr);
    assert_eq!(f.get("n_fixations"), Some(0.0));
    assert_eq!(f.get("fixation_time_fraction"), Some(0.0));
}

#[test]
fn steady_gaze_is_one_long_fixation() {
    let pts = vec![(0.5, 0.5); 360];
    let tr = track(&pts, 1.0);
    let fx = detect_fixations(&tr, DISPERSION_THRESHOLD, MIN_FIXATION_DURATION);
    assert_eq!(fx.len(), 1);
    assert!((fx[0].duration() - 359.0 / RATE).abs() < 1e-12);
    let f = gaze_feature_vector(&tr);
    assert_eq!(f.get("n_saccades"), Some(0.0));
    assert!((f.get("fixation_time_fraction").unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn low_confidence_samples_are_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let pts = dwell_and_jump(&mut rng);
    let n = pts.len();
    let mut conf = vec![1.0; n];
    for c in conf.iter_mut().step_by(4) {
        *c = 0.1;
    }
    let tr = GazeTrack::new(
        (0..n).map(|i| i as f64 / RATE).collect(),
        pts.iter().map(|p| p.0).collect(),
        pts.iter().map(|p| p.1).collect(),
        conf,
    )
    .unwrap();
    let expected = n.div_ceil(4) as f64 / n as f64;
    assert!((gaze_feature_vector(&tr).get("outlier_rate").unwrap() - expected).abs() < 1e-12);
}

#[test]
fn feature_names_are_fixed() {
    let tr = track(&[(0.5, 0.5); 10], 1.0);
    let f = gaze_feature_vector(&tr);
    assert_eq!(f.names, GAZE_FEATURE_NAMES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    assert!(f.values.iter().all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn features_are_translation_invariant(seed in any::<u64>(), dx in -0.2f64..0.2, dy in -0.2f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = dwell_and_jump(&mut rng);
        let moved: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 + dx, p.1 + dy)).collect();
        let a = gaze_feature_vector(&track(&pts, 1.0));
        let b = gaze_feature_vector(&track(&moved, 1.0));
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "{:?} vs {:?}", a.values, b.values);
        }
    }
}
