//! Seeded synthetic sessions with plantable class effects.
//!
//! EEG is 1/f background plus a per-channel 10 Hz rhythm and 50 Hz mains
//! pickup; Virtual trials attenuate the rhythm at a set of electrodes. Gaze is
//! a fixation/saccade point process whose fixation durations can depend on
//! the condition. Every random draw comes from a ChaCha stream keyed by
//! (seed, participant, purpose), so a participant's session does not depend
//! on which other participants are generated.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    Condition, Dataset, ElectrodeMontage, FieldSize, GazeTrack, Recording, Session, TrialEvent,
    GAZE_RATE_TOLERANCE, MAX_TRIALS_PER_CONDITION, MEMORY_DURATION, NOMINAL_GAZE_RATE,
};
use crate::error::{Error, Result};
use crate::signal::fast_fft_len;

/// Seconds of rest before the first and after the last trial.
pub const LEAD_IN: f64 = 5.0;
pub const LEAD_OUT: f64 = 5.0;
pub const PREPARATION: f64 = 2.0;
pub const RECALL: f64 = 20.0;
pub const FEEDBACK: f64 = 2.0;
pub const INTER_TRIAL: (f64, f64) = (2.0, 4.0);
pub const BLOCK_PAUSE: f64 = 8.0;
pub const BLOCK_SIZE: usize = 4;

const PINK_LOW_CUTOFF: f64 = 0.5;
const ENVELOPE_RATE: f64 = 50.0;
const SACCADE_DURATION: f64 = 0.03;
const FIXATION_SHAPE: f64 = 3.0;
const TIMESTAMP_JITTER: f64 = 0.05;

// sub-stream purposes
const S_PLAN: u64 = 0;
const S_TIMELINE: u64 = 1;
const S_PINK: u64 = 2;
const S_ALPHA: u64 = 3;
const S_CHANNEL: u64 = 4;
const S_DRIFT: u64 = 5;
const S_GAZE: u64 = 6;
const S_BAD: u64 = 7;
const S_BAD_PLAN: u64 = 8;
const STREAMS_PER_PARTICIPANT: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectConfig {
    /// Reduction of the alpha amplitude in Virtual Memory-Phases, percent.
    pub alpha_attenuation_pct: f64,
    /// Electrodes attenuated in every participant.
    pub electrodes: Vec<String>,
    /// Per-participant effect scale is drawn from `U[1 - v, 1 + v]`.
    pub effect_variation: f64,
    /// Extra electrodes drawn at random per participant.
    pub individual_electrodes: usize,
    /// Participant indices carrying the EEG effect; `None` means all.
    pub eeg_participants: Option<Vec<usize>>,
    /// Standard deviation of the per-trial, per-channel log gain.
    pub drift_per_trial: f64,
    /// Log-gain change per channel from the first to the last trial.
    pub drift_trend: f64,
    pub gaze_effect: bool,
    /// Mean fixation duration in Virtual over Real.
    pub gaze_fixation_ratio: f64,
    /// Participant indices carrying the gaze effect; `None` means all.
    pub gaze_participants: Option<Vec<usize>>,
    /// Suspends every effect between 15 and 18 s after Memory-Phase onset.
    pub position4_effect_removal: bool,
}

impl Default for EffectConfig {
    fn default() -> Self {
        Self {
            alpha_attenuation_pct: 20.0,
            electrodes: vec!["C3".into(), "Fp1".into(), "PO8".into()],
            effect_variation: 0.25,
            individual_electrodes: 1,
            eeg_participants: None,
            drift_per_trial: 0.0,
            drift_trend: 0.0,
            gaze_effect: true,
            gaze_fixation_ratio: 1.2,
            gaze_participants: None,
            position4_effect_removal: false,
        }
    }
}

impl EffectConfig {
    /// No class effect of any kind, and no drift.
    pub fn none() -> Self {
        Self {
            alpha_attenuation_pct: 0.0,
            individual_electrodes: 0,
            gaze_effect: false,
            ..Self::default()
        }
    }
}

/// Amplitudes in microvolts, gaze in normalized screen units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// RMS of the 1/f background per channel.
    pub pink_scale: f64,
    /// RMS of the alpha rhythm per channel.
    pub alpha_amplitude: f64,
    /// Spectral spread of the alpha rhythm around its peak, Hz.
    pub alpha_bandwidth: f64,
    /// Share of the alpha power that fluctuates, in [0, 1].
    pub alpha_variability: f64,
    pub line_noise: f64,
    /// Standard deviation of the per-channel log gain.
    pub channel_gain_sd: f64,
    pub gaze_precision: f64,
    /// Standard deviation of the per-participant calibration offset.
    pub gaze_calibration_sd: f64,
    /// Blinks per second.
    pub blink_rate: f64,
    /// Mean fixation duration in Real trials, seconds.
    pub fixation_mean: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pink_scale: 10.0,
            alpha_amplitude: 6.0,
            alpha_bandwidth: 0.8,
            alpha_variability: 0.2,
            line_noise: 5.0,
            channel_gain_sd: 0.4,
            gaze_precision: 0.0015,
            gaze_calibration_sd: 0.03,
            blink_rate: 0.2,
            fixation_mean: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_participants: usize,
    pub trials_per_condition: usize,
    pub fs: f64,
    pub gaze_rate: f64,
    pub seed: u64,
    /// Participants recorded without eye tracking, chosen at random.
    pub n_without_gaze: usize,
    /// Chance that a channel is recorded as broken.
    pub bad_channel_prob: f64,
    pub effect: EffectConfig,
    pub noise: NoiseConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_participants: 20,
            trials_per_condition: MAX_TRIALS_PER_CONDITION,
            fs: crate::data_model::DEFAULT_FS,
            gaze_rate: NOMINAL_GAZE_RATE,
            seed: 0,
            n_without_gaze: 7,
            bad_channel_prob: 0.0,
            effect: EffectConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {msg}"))
}

fn check_nonneg(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a finite non-negative number, got {v}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_participants == 0 {
            return Err(invalid("n_participants", "must be at least 1"));
        }
        if !(2..=MAX_TRIALS_PER_CONDITION).contains(&self.trials_per_condition) {
            return Err(invalid(
                "trials_per_condition",
                format!("must be in [2, {MAX_TRIALS_PER_CONDITION}], got {}", self.trials_per_condition),
            ));
        }
        if !(self.fs.is_finite() && self.fs >= 120.0) {
            return Err(invalid("fs", format!("must be at least 120 Hz, got {}", self.fs)));
        }
        let lo = NOMINAL_GAZE_RATE * (1.0 - GAZE_RATE_TOLERANCE);
        let hi = NOMINAL_GAZE_RATE * (1.0 + GAZE_RATE_TOLERANCE);
        if !(lo..=hi).contains(&self.gaze_rate) {
            return Err(invalid("gaze_rate", format!("must be in [{lo}, {hi}] Hz, got {}", self.gaze_rate)));
        }
        if !(0.0..=1.0).contains(&self.bad_channel_prob) {
            return Err(invalid("bad_channel_prob", "must be in [0, 1]"));
        }
        let e = &self.effect;
        if !(0.0..=100.0).contains(&e.alpha_attenuation_pct) {
            return Err(invalid("effect.alpha_attenuation_pct", "must be in [0, 100]"));
        }
        if !(0.0..=1.0).contains(&e.effect_variation) {
            return Err(invalid("effect.effect_variation", "must be in [0, 1]"));
        }
        let montage = ElectrodeMontage::standard();
        let mut seen = BTreeSet::new();
        for name in &e.electrodes {
            if montage.index_of(name).is_none() {
                return Err(invalid("effect.electrodes", format!("unknown electrode {name}")));
            }
            if !seen.insert(name) {
                return Err(invalid("effect.electrodes", format!("duplicate electrode {name}")));
            }
        }
        if e.electrodes.len() + e.individual_electrodes > montage.len() {
            return Err(invalid("effect.individual_electrodes", "more effect electrodes than channels"));
        }
        for (field, list) in [("effect.eeg_participants", &e.eeg_participants), ("effect.gaze_participants", &e.gaze_participants)] {
            if let Some(idx) = list.iter().flatten().find(|&&i| i >= self.n_participants) {
                return Err(invalid(field, format!("participant index {idx} out of range")));
            }
        }
        check_nonneg("effect.drift_per_trial", e.drift_per_trial)?;
        check_nonneg("effect.drift_trend", e.drift_trend)?;
        if !(e.gaze_fixation_ratio.is_finite() && e.gaze_fixation_ratio > 0.0) {
            return Err(invalid("effect.gaze_fixation_ratio", "must be positive"));
        }
        let n = &self.noise;
        check_nonneg("noise.pink_scale", n.pink_scale)?;
        check_nonneg("noise.alpha_amplitude", n.alpha_amplitude)?;
        check_nonneg("noise.line_noise", n.line_noise)?;
        check_nonneg("noise.channel_gain_sd", n.channel_gain_sd)?;
        check_nonneg("noise.gaze_precision", n.gaze_precision)?;
        check_nonneg("noise.gaze_calibration_sd", n.gaze_calibration_sd)?;
        check_nonneg("noise.blink_rate", n.blink_rate)?;
        if !(n.alpha_bandwidth.is_finite() && n.alpha_bandwidth > 0.0) {
            return Err(invalid("noise.alpha_bandwidth", "must be positive"));
        }
        if !(0.0..=1.0).contains(&n.alpha_variability) {
            return Err(invalid("noise.alpha_variability", "must be in [0, 1]"));
        }
        if !(n.fixation_mean.is_finite() && n.fixation_mean > SACCADE_DURATION) {
            return Err(invalid("noise.fixation_mean", format!("must exceed {SACCADE_DURATION} s")));
        }
        Ok(())
    }

    fn rng(&self, participant: Option<usize>, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let base = participant.map_or(0, |p| (p as u64 + 1) * STREAMS_PER_PARTICIPANT);
        rng.set_stream(base + purpose);
        rng
    }

    /// Indices of participants recorded without eye tracking.
    pub fn participants_without_gaze(&self) -> BTreeSet<usize> {
        let mut idx: Vec<usize> = (0..self.n_participants).collect();
        idx.shuffle(&mut self.rng(None, S_PLAN));
        idx.into_iter().take(self.n_without_gaze.min(self.n_participants)).collect()
    }
}

pub fn participant_id(index: usize) -> String {
    format!("P{:02}", index + 1)
}

/// What was planted in one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: String,
    pub index: usize,
    pub has_gaze: bool,
    pub eeg_effect: bool,
    pub effect_electrodes: Vec<String>,
    /// Fractional alpha amplitude reduction in Virtual at the effect electrodes.
    pub attenuation: f64,
    pub gaze_effect: bool,
    pub alpha_frequency: f64,
    pub bad_channels: Vec<String>,
}

/// Contents of `sim.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub config: SimConfig,
    pub participants: Vec<ParticipantTruth>,
}

impl SimManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Trial {
    start: f64,
    end: f64,
    event: TrialEvent,
}

fn timeline(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> (Vec<Trial>, f64) {
    let mut blocks = Vec::new();
    for cond in Condition::ALL {
        let mut left = cfg.trials_per_condition;
        while left > 0 {
            let size = left.min(BLOCK_SIZE);
            blocks.push((cond, size));
            left -= size;
        }
    }
    blocks.shuffle(rng);
    let mut trials = Vec::new();
    let mut t = LEAD_IN;
    for (cond, size) in blocks {
        for _ in 0..size {
            let start = t;
            let onset = start + PREPARATION;
            let end = onset + MEMORY_DURATION + RECALL + FEEDBACK;
            trials.push(Trial {
                start,
                end,
                event: TrialEvent {
                    trial_id: trials.len() as u32 + 1,
                    condition: cond,
                    memory_onset: onset,
                    memory_duration: MEMORY_DURATION,
                    field_size: FieldSize::ALL[rng.random_range(0..FieldSize::ALL.len())],
                },
            });
            t = end + rng.random_range(INTER_TRIAL.0..INTER_TRIAL.1);
        }
        t += BLOCK_PAUSE;
    }
    (trials, t - BLOCK_PAUSE + LEAD_OUT)
}

/// Memory-Phase spans of Virtual trials during which effects apply.
fn effect_spans(trials: &[Trial], position4_removal: bool) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for tr in trials.iter().filter(|t| t.event.condition == Condition::Virtual) {
        let on = tr.event.memory_onset;
        let off = on + tr.event.memory_duration;
        if position4_removal {
            out.push((on, on + 15.0));
            out.push((on + 18.0, off));
        } else {
            out.push((on, off));
        }
    }
    out
}

fn in_spans(spans: &[(f64, f64)], t: f64) -> bool {
    spans.iter().any(|&(a, b)| t >= a && t < b)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Unit-variance 1/f noise for `n_channels` channels, two per FFT.
fn pink_noise(n_channels: usize, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let size = fast_fft_len(n);
    let fft = FftPlanner::new().plan_fft_inverse(size);
    let amp: Vec<f64> = (0..size)
        .map(|k| {
            let k = k.min(size - k);
            let f = (k as f64 * fs / size as f64).max(PINK_LOW_CUTOFF);
            if k == 0 {
                0.0
            } else {
                1.0 / f.sqrt()
            }
        })
        .collect();
    let mut out = Vec::with_capacity(n_channels);
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    while out.len() < n_channels {
        for (b, &a) in buf.iter_mut().zip(&amp) {
            *b = Complex64::new(normal(rng) * a, normal(rng) * a);
        }
        fft.process(&mut buf);
        let re: Vec<f64> = buf[..n].iter().map(|c| c.re).collect();
        let im: Vec<f64> = buf[..n].iter().map(|c| c.im).collect();
        for ch in [re, im] {
            if out.len() < n_channels {
                out.push(standardize(ch));
            }
        }
    }
    out
}

fn standardize(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { 1.0 / sd } else { 0.0 };
    for v in &mut x {
        *v = (*v - mean) * scale;
    }
    x
}

/// Narrow-band rhythm with unit RMS on a carrier given as `(cos, sin)`
/// tables. A `variability` share of the power sits in a random envelope
/// with a Gaussian spectrum of standard deviation `bandwidth` Hz; the rest
/// is a steady oscillation.
fn rhythm(carrier: &(Vec<f64>, Vec<f64>), fs: f64, bandwidth: f64, variability: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = carrier.0.len();
    let step = fs / ENVELOPE_RATE;
    let n_env = (n as f64 / step).ceil() as usize + 2;
    let size = fast_fft_len(n_env);
    let mut env: Vec<Complex64> = (0..size)
        .map(|k| {
            let k = k.min(size - k);
            let f = k as f64 * ENVELOPE_RATE / size as f64;
            let a = (-0.5 * (f / bandwidth).powi(2)).exp();
            Complex64::new(normal(rng) * a, normal(rng) * a)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(size).process(&mut env);
    env.truncate(n_env);
    let power = env.iter().map(|z| z.norm_sqr()).sum::<f64>() / n_env as f64;
    let norm = if power > 0.0 { variability.sqrt() / power.sqrt() } else { 0.0 };
    let steady = (1.0 - variability).sqrt();
    for z in &mut env {
        *z = *z * norm + steady;
    }
    let phase = Complex64::from_polar(1.0, rng.random_range(0.0..TAU));
    let (cos, sin) = carrier;
    (0..n)
        .map(|i| {
            let pos = i as f64 / step;
            let k = pos as usize;
            let frac = pos - k as f64;
            let z = (env[k] * (1.0 - frac) + env[k + 1] * frac) * phase;
            2f64.sqrt() * (z.re * cos[i] - z.im * sin[i])
        })
        .collect()
}

/// Generates one participant's session and what was planted in it.
pub fn simulate_session_with_truth(cfg: &SimConfig, index: usize) -> Result<(Session, ParticipantTruth)> {
    cfg.validate()?;
    if index >= cfg.n_participants {
        return Err(invalid(
            "participant_index",
            format!("{index} out of range for {} participants", cfg.n_participants),
        ));
    }
    let montage = ElectrodeMontage::standard();
    let n_ch = montage.len();
    let fs = cfg.fs;
    let id = participant_id(index);

    let truth = truth_only(cfg, index)?;
    let e = &cfg.effect;
    let attenuation = truth.attenuation;
    let electrodes = &truth.effect_electrodes;

    let (trials, duration) = timeline(cfg, &mut cfg.rng(Some(index), S_TIMELINE));
    let n = (duration * fs).ceil() as usize;
    let spans = effect_spans(&trials, e.position4_effect_removal);

    let mut data = pink_noise(n_ch, n, fs, &mut cfg.rng(Some(index), S_PINK));
    for row in &mut data {
        for v in row.iter_mut() {
            *v *= cfg.noise.pink_scale;
        }
    }

    let w = TAU * truth.alpha_frequency / fs;
    let carrier: (Vec<f64>, Vec<f64>) = (0..n).map(|i| ((w * i as f64).cos(), (w * i as f64).sin())).unzip();
    let mut alpha_rng = cfg.rng(Some(index), S_ALPHA);
    let effect_idx: BTreeSet<usize> = electrodes.iter().filter_map(|n| montage.index_of(n)).collect();
    let attenuated: Vec<bool> = (0..n)
        .map(|i| attenuation > 0.0 && in_spans(&spans, i as f64 / fs))
        .collect();
    for (c, row) in data.iter_mut().enumerate() {
        let amp = cfg.noise.alpha_amplitude * (0.2 * normal(&mut alpha_rng)).exp();
        let alpha = rhythm(&carrier, fs, cfg.noise.alpha_bandwidth, cfg.noise.alpha_variability, &mut alpha_rng);
        let cut = effect_idx.contains(&c);
        for (i, (v, a)) in row.iter_mut().zip(alpha).enumerate() {
            let g = if cut && attenuated[i] { 1.0 - attenuation } else { 1.0 };
            *v += amp * g * a;
        }
    }
    drop(carrier);

    // per-trial gains model slow electrode drift; they also scale the rhythm
    let mut drift_rng = cfg.rng(Some(index), S_DRIFT);
    if e.drift_per_trial > 0.0 || e.drift_trend > 0.0 {
        let direction: Vec<f64> = (0..n_ch).map(|_| normal(&mut drift_rng)).collect();
        let last = (trials.len() - 1).max(1) as f64;
        for (k, tr) in trials.iter().enumerate() {
            let a = ((tr.start * fs).floor() as usize).min(n);
            let b = ((tr.end * fs).ceil() as usize).min(n);
            let frac = k as f64 / last - 0.5;
            for (c, row) in data.iter_mut().enumerate() {
                let g = (e.drift_per_trial * normal(&mut drift_rng) + e.drift_trend * frac * direction[c]).exp();
                for v in &mut row[a..b] {
                    *v *= g;
                }
            }
        }
    }

    let mut ch_rng = cfg.rng(Some(index), S_CHANNEL);
    for row in data.iter_mut() {
        let gain = (cfg.noise.channel_gain_sd * normal(&mut ch_rng)).exp();
        let line = cfg.noise.line_noise * ch_rng.random_range(0.5..1.5);
        let phase = ch_rng.random_range(0.0..TAU);
        let wl = 2.0 * PI * 50.0 / fs;
        for (i, v) in row.iter_mut().enumerate() {
            *v = *v * gain + line * (wl * i as f64 + phase).sin();
        }
    }

    let mut bad_rng = cfg.rng(Some(index), S_BAD);
    let bad: BTreeSet<String> = truth.bad_channels.iter().cloned().collect();
    for (c, row) in data.iter_mut().enumerate() {
        if bad.contains(&montage.names()[c]) {
            for v in row.iter_mut() {
                *v = 5.0 * *v + 50.0 * normal(&mut bad_rng);
            }
        }
    }

    let gaze = if truth.has_gaze {
        let gaze_spans = if truth.gaze_effect { spans.clone() } else { Vec::new() };
        Some(simulate_gaze(cfg, duration, &gaze_spans, &mut cfg.rng(Some(index), S_GAZE))?)
    } else {
        None
    };

    let recording = Recording::new(data, fs, 0.0)?;
    let events = trials.into_iter().map(|t| t.event).collect();
    let session = Session::new(id, recording, gaze, events, bad, montage)?;
    Ok((session, truth))
}

fn simulate_gaze(cfg: &SimConfig, duration: f64, spans: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Result<GazeTrack> {
    let nz = &cfg.noise;
    let offset = (nz.gaze_calibration_sd * normal(rng), nz.gaze_calibration_sd * normal(rng));
    let gamma = |mean: f64| Gamma::new(FIXATION_SHAPE, mean / FIXATION_SHAPE).expect("positive mean");
    let real = gamma(nz.fixation_mean);
    let virt = gamma(nz.fixation_mean * cfg.effect.gaze_fixation_ratio);

    // fixation plan: (start, end, centroid); a saccade fills each gap
    let mut fixations: Vec<(f64, f64, (f64, f64))> = Vec::new();
    let mut t = 0.0;
    while t < duration {
        let dist = if in_spans(spans, t) { &virt } else { &real };
        let d = dist.sample(rng).max(SACCADE_DURATION);
        let c = (rng.random_range(0.15..0.85), rng.random_range(0.15..0.85));
        fixations.push((t, t + d, c));
        t += d + SACCADE_DURATION;
    }

    let mut blinks = Vec::new();
    if nz.blink_rate > 0.0 {
        let mut t = 0.0;
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / nz.blink_rate;
            if t >= duration {
                break;
            }
            blinks.push((t, t + rng.random_range(0.1..0.3)));
        }
    }

    let period = 1.0 / cfg.gaze_rate;
    let (mut ts, mut xs, mut ys, mut cs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut t = rng.random_range(0.0..period);
    let mut k = 0;
    let mut b = 0;
    while t < duration {
        while k + 1 < fixations.len() && fixations[k].1 + SACCADE_DURATION <= t {
            k += 1;
        }
        let (s, e, c) = fixations[k];
        let (mut x, mut y) = if t < s {
            c
        } else if t <= e || k + 1 == fixations.len() {
            c
        } else {
            let next = fixations[k + 1].2;
            let u = ((t - e) / SACCADE_DURATION).clamp(0.0, 1.0);
            (c.0 + (next.0 - c.0) * u, c.1 + (next.1 - c.1) * u)
        };
        x += offset.0 + nz.gaze_precision * normal(rng);
        y += offset.1 + nz.gaze_precision * normal(rng);
        while b < blinks.len() && blinks[b].1 <= t {
            b += 1;
        }
        let conf = if b < blinks.len() && blinks[b].0 <= t {
            x += 0.2 * normal(rng);
            y += 0.2 * normal(rng);
            rng.random_range(0.0..0.3)
        } else {
            rng.random_range(0.85..1.0)
        };
        ts.push(t);
        xs.push(x);
        ys.push(y);
        cs.push(conf);
        t += period * (1.0 + TIMESTAMP_JITTER * rng.random_range(-1.0..1.0));
    }
    GazeTrack::new(ts, xs, ys, cs)
}

pub fn simulate_session(cfg: &SimConfig, index: usize) -> Result<Session> {
    simulate_session_with_truth(cfg, index).map(|(s, _)| s)
}

/// Planted ground truth for every participant, without generating signals.
pub fn ground_truth(cfg: &SimConfig) -> Result<Vec<ParticipantTruth>> {
    cfg.validate()?;
    (0..cfg.n_participants).map(|i| truth_only(cfg, i)).collect()
}

fn truth_only(cfg: &SimConfig, index: usize) -> Result<ParticipantTruth> {
    let montage = ElectrodeMontage::standard();
    let e = &cfg.effect;
    let mut plan = cfg.rng(Some(index), S_PLAN);
    let eeg_effect = e.alpha_attenuation_pct > 0.0
        && e.eeg_participants.as_ref().is_none_or(|v| v.contains(&index));
    let gaze_effect = e.gaze_effect && e.gaze_participants.as_ref().is_none_or(|v| v.contains(&index));
    let mut electrodes = e.electrodes.clone();
    let mut others: Vec<&String> = montage.names().iter().filter(|n| !electrodes.contains(n)).collect();
    others.shuffle(&mut plan);
    electrodes.extend(others.into_iter().take(e.individual_electrodes).cloned());
    let scale = 1.0 + e.effect_variation * plan.random_range(-1.0..=1.0);
    let attenuation = if eeg_effect {
        (e.alpha_attenuation_pct / 100.0 * scale).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let alpha_frequency = plan.random_range(9.5..10.5);
    let has_gaze = !cfg.participants_without_gaze().contains(&index);
    let mut bad = Vec::new();
    if cfg.bad_channel_prob > 0.0 {
        let mut bad_rng = cfg.rng(Some(index), S_BAD_PLAN);
        for name in montage.names() {
            if bad_rng.random::<f64>() < cfg.bad_channel_prob && bad.len() + 1 < montage.len() {
                bad.push(name.clone());
            }
        }
    }
    Ok(ParticipantTruth {
        participant_id: participant_id(index),
        index,
        has_gaze,
        eeg_effect,
        effect_electrodes: if eeg_effect { electrodes } else { Vec::new() },
        attenuation,
        gaze_effect: gaze_effect && has_gaze,
        alpha_frequency,
        bad_channels: bad,
    })
}

/// All participants in memory. A default dataset needs about 2.5 GB; prefer
/// [`simulate_session`] per participant for large configurations.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let sessions = (0..cfg.n_participants)
        .map(|i| simulate_session(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sessions)
}
