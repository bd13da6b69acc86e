use std::collections::BTreeSet;
use std::f64::consts::PI;

use attnpipe_core::data_model::{ElectrodeMontage, Recording};
use attnpipe_core::signal::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FS: f64 = 500.0;

/// |H(f)| by direct summation over the taps.
fn response(h: &[f64], f: f64, fs: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (k, &c) in h.iter().enumerate() {
        let ph = -2.0 * PI * f * k as f64 / fs;
        re += c * ph.cos();
        im += c * ph.sin();
    }
    re.hypot(im)
}

fn sine(f: f64, n: usize, amp: f64, phase: f64) -> Vec<f64> {
    (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / FS + phase).sin()).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn central_half(x: &[f64]) -> &[f64] {
    &x[x.len() / 4..3 * x.len() / 4]
}

/// Least-squares amplitude of a known-frequency sinusoid.
fn fitted_amplitude(x: &[f64], f: f64, offset: usize) -> (f64, f64) {
    let (mut sc, mut ss, mut cc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, &v) in x.iter().enumerate() {
        let ph = 2.0 * PI * f * (j + offset) as f64 / FS;
        let (s, c) = ph.sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += v * s;
        xc += v * c;
    }
    let det = ss * cc - sc * sc;
    let a = (xs * cc - xc * sc) / det;
    let b = (xc * ss - xs * sc) / det;
    (a.hypot(b), b.atan2(a))
}

#[test]
fn bandpass_frequency_response() {
    let k = design_fir(FilterKind::Bandpass, 3.0, 45.0, FS, 2.0).unwrap();
    let h = k.coefficients();
    assert!(response(h, 0.5, FS) < 0.01);
    let mid = response(h, 20.0, FS);
    assert!((0.95..=1.05).contains(&mid), "{mid}");
    assert!((response(h, 20.0, FS) - k.magnitude_at(20.0)).abs() < 1e-9);
}

#[test]
fn notch_frequency_response() {
    let k = design_fir(FilterKind::Bandstop, 49.0, 51.0, FS, 2.0).unwrap();
    let h = k.coefficients();
    assert!(response(h, 50.0, FS) < 0.05);
    let pass = response(h, 30.0, FS);
    assert!((0.95..=1.05).contains(&pass), "{pass}");
}

#[test]
fn chain_response_at_the_three_reference_frequencies() {
    let bp = design_fir(FilterKind::Bandpass, 3.0, 45.0, FS, 2.0).unwrap();
    let notch = design_fir(FilterKind::Bandstop, 49.0, 51.0, FS, 2.0).unwrap();
    // zero-phase application squares each magnitude
    let chain = |f: f64| (response(bp.coefficients(), f, FS) * response(notch.coefficients(), f, FS)).powi(2);
    assert!(chain(0.5) < 0.01);
    assert!((0.95..=1.05).contains(&chain(20.0)));
    assert!(chain(50.0) < 0.05);
}

#[test]
fn ten_hz_sinusoid_keeps_its_amplitude_and_phase() {
    let n = 5000;
    let x = sine(10.0, n, 1.0, 0.3);
    let f = ZeroPhaseFilter::new(design_fir(FilterKind::Bandpass, 3.0, 45.0, FS, 2.0).unwrap());
    let y = f.apply(&x).unwrap();
    let (amp, phase) = fitted_amplitude(central_half(&y), 10.0, n / 4);
    assert!((0.93..=1.0 + 1e-3).contains(&amp), "{amp}");
    // zero phase: the fitted phase matches the input's
    assert!((phase - 0.3).abs() < 1e-3, "{phase}");
}

#[test]
fn notch_removes_fifty_hz() {
    let x = sine(50.0, 5000, 2.0, 0.0);
    let f = ZeroPhaseFilter::new(design_fir(FilterKind::Bandstop, 49.0, 51.0, FS, 2.0).unwrap());
    let y = f.apply(&x).unwrap();
    assert!(rms(central_half(&y)) < 0.05 * rms(central_half(&x)));
}

#[test]
fn bandpass_removes_dc() {
    let x = vec![7.5; 5000];
    let f = ZeroPhaseFilter::new(design_fir(FilterKind::Bandpass, 3.0, 45.0, FS, 2.0).unwrap());
    let y = f.apply(&x).unwrap();
    assert!(rms(central_half(&y)) < 0.01 * 7.5);
}

#[test]
fn white_noise_parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x: Vec<f64> = (0..1500).map(|_| rng.sample(StandardNormal)).collect();
        let psd = welch_psd(&x, FS, 500, 0.5).unwrap();
        let total: f64 = psd.power.iter().sum::<f64>() * psd.resolution();
        assert!((0.85..=1.15).contains(&total), "{total}");
    }
}

#[test]
fn sinusoid_periodogram_matches_naive_dft() {
    let x = sine(10.0, 1500, 1.0, 0.0);
    let psd = welch_psd(&x, FS, 500, 0.5).unwrap();
    assert!((psd.peak_frequency() - 10.0).abs() <= 1.0);
    let total: f64 = psd.power.iter().sum();
    let outside: f64 = psd
        .freqs
        .iter()
        .zip(&psd.power)
        .filter(|(f, _)| !(8.0..=12.0).contains(*f))
        .map(|(_, p)| p)
        .sum();
    assert!(outside < 0.05 * total);

    // naive DFT of the first segment, Hamming-windowed, one-sided density
    let n = 500;
    let w: Vec<f64> = (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let norm: f64 = w.iter().map(|v| v * v).sum();
    let mut naive = vec![0.0; n / 2 + 1];
    for seg in 0..5 {
        let s = &x[seg * 250..seg * 250 + n];
        for (k, p) in naive.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let ph = -2.0 * PI * (k * i) as f64 / n as f64;
                re += s[i] * w[i] * ph.cos();
                im += s[i] * w[i] * ph.sin();
            }
            let one_sided = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            *p += one_sided * (re * re + im * im) / (FS * norm) / 5.0;
        }
    }
    for (a, b) in psd.power.iter().zip(&naive) {
        assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn alpha_dominates_for_a_ten_hz_tone() {
    let x = sine(10.0, 1500, 1.0, 0.0);
    let psd = welch_psd(&x, FS, 500, 0.5).unwrap();
    let bands = default_bands();
    let p: Vec<f64> = bands.iter().map(|b| band_power(&psd, b).unwrap()).collect();
    for (i, b) in bands.iter().enumerate() {
        if b.name != "Alpha" {
            assert!(p[1] > 10.0 * p[i], "{} {}", b.name, p[i]);
        }
    }
}

fn angular(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let cross = [
        p[1] * q[2] - p[2] * q[1],
        p[2] * q[0] - p[0] * q[2],
        p[0] * q[1] - p[1] * q[0],
    ];
    let c = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let d = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    c.atan2(d)
}

#[test]
fn cz_interpolation_matches_hand_computed_idw() {
    let m = ElectrodeMontage::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..16).map(|_| (0..200).map(|_| rng.random_range(-50.0..50.0)).collect()).collect();
    let rec = Recording::new(rows.clone(), FS, 0.0).unwrap();
    let bad: BTreeSet<String> = ["Cz".to_string()].into_iter().collect();
    let out = interpolate_channels(&rec, &bad, &m).unwrap();

    let cz = m.index_of("Cz").unwrap();
    let pos = m.positions();
    let mut d: Vec<(usize, f64)> = (0..16).filter(|&i| i != cz).map(|i| (i, angular(&pos[cz], &pos[i]))).collect();
    d.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let near = &d[..4];
    let wsum: f64 = near.iter().map(|(_, d)| 1.0 / (d * d)).sum();
    for t in 0..200 {
        let expected: f64 = near.iter().map(|&(i, d)| rows[i][t] / (d * d)).sum::<f64>() / wsum;
        assert!((out.channel(cz)[t] - expected).abs() < 1e-9);
    }
    for c in (0..16).filter(|&c| c != cz) {
        assert_eq!(out.channel(c), rec.channel(c));
    }
}

#[test]
fn preprocessor_chain_on_a_recording() {
    let pre = Preprocessor::new(&PreprocessConfig::default(), FS).unwrap();
    let n = 5000;
    let rows: Vec<Vec<f64>> = (0..16)
        .map(|c| {
            let a = sine(10.0, n, 1.0 + c as f64 * 0.1, c as f64);
            let b = sine(50.0, n, 3.0, 0.0);
            a.iter().zip(&b).map(|(x, y)| x + y + 20.0).collect()
        })
        .collect();
    let rec = Recording::new(rows, FS, 0.0).unwrap();
    let out = pre.apply(&rec, &BTreeSet::new(), &ElectrodeMontage::standard()).unwrap();
    for i in (n / 4..3 * n / 4).step_by(97) {
        let s: f64 = (0..16).map(|c| out.channel(c)[i]).sum();
        assert!(s.abs() < 1e-9);
    }
    // the shared 50 Hz pickup and DC vanish; the 10 Hz rhythms survive
    for c in 0..16 {
        let (amp, _) = fitted_amplitude(central_half(out.channel(c)), 50.0, n / 4);
        assert!(amp < 0.05);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn designed_kernels_are_symmetric(lo in 1.0f64..20.0, width in 3.0f64..100.0, tr in 1.0f64..4.0) {
        let hi = (lo + width).min(240.0);
        for kind in [FilterKind::Bandpass, FilterKind::Bandstop] {
            let k = design_fir(kind, lo, hi, FS, tr).unwrap();
            let h = k.coefficients();
            prop_assert!(h.len() % 2 == 1);
            for i in 0..h.len() / 2 {
                prop_assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_phase_filtering_has_no_lag(f in 5.0f64..40.0, phase in 0.0f64..6.0) {
        let n = 4000;
        let x = sine(f, n, 1.0, phase);
        let filt = ZeroPhaseFilter::new(design_fir(FilterKind::Bandpass, 3.0, 45.0, FS, 2.0).unwrap());
        let y = filt.apply(&x).unwrap();
        let (_, ph) = fitted_amplitude(central_half(&y), f, n / 4);
        let diff = (ph - phase).rem_euclid(2.0 * PI);
        prop_assert!(diff.min(2.0 * PI - diff) < 1e-3, "{}", diff);
    }
}
