//! Fixation detection and the per-window eye-tracking feature vector.
//!
//! The ten features are our own reading of "outlier quote, fixations,
//! saccades and gaze velocity and distance"; see [`GAZE_FEATURE_NAMES`].

use serde::{Deserialize, Serialize};

use crate::data_model::GazeTrack;
use crate::eeg_features::FeatureVector;

pub const DISPERSION_THRESHOLD: f64 = 0.02;
/// Seconds.
pub const MIN_FIXATION_DURATION: f64 = 0.1;
pub const CONFIDENCE_CUTOFF: f64 = 0.6;

pub const GAZE_FEATURE_NAMES: [&str; 10] = [
    "outlier_rate",
    "n_fixations",
    "mean_fixation_duration",
    "fixation_time_fraction",
    "n_saccades",
    "mean_saccade_amplitude",
    "path_length",
    "mean_velocity",
    "peak_velocity",
    "dispersion_total",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub start: f64,
    pub end: f64,
    pub centroid: (f64, f64),
    pub dispersion: f64,
}

impl Fixation {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeFeatureConfig {
    pub dispersion_threshold: f64,
    pub min_duration: f64,
    pub confidence_cutoff: f64,
}

impl Default for GazeFeatureConfig {
    fn default() -> Self {
        Self {
            dispersion_threshold: DISPERSION_THRESHOLD,
            min_duration: MIN_FIXATION_DURATION,
            confidence_cutoff: CONFIDENCE_CUTOFF,
        }
    }
}

#[derive(Clone, Copy)]
struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn new(x: f64, y: f64) -> Self {
        Self {
            min_x: x,
            max_x: x,
            min_y: y,
            max_y: y,
        }
    }

    fn add(&mut self, x: f64, y: f64) {
        self.min_x = self.min_x.min(x);
        self.max_x = self.max_x.max(x);
        self.min_y = self.min_y.min(y);
        self.max_y = self.max_y.max(y);
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// Dispersion-threshold identification (I-DT) over every sample of `track`.
///
/// A run starts with the samples spanning `min_duration`; if their
/// dispersion is within the threshold the run grows one sample at a time
/// until it would not be, otherwise the start advances by one sample.
pub fn detect_fixations(track: &GazeTrack, dispersion_threshold: f64, min_duration: f64) -> Vec<Fixation> {
    let t = track.timestamps();
    let (x, y) = (track.x(), track.y());
    let n = t.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        // first j with t[j] - t[i] >= min_duration
        let Some(j0) = (i..n).find(|&j| t[j] - t[i] >= min_duration - 1e-12) else {
            break;
        };
        let mut b = Bounds::new(x[i], y[i]);
        for k in i + 1..=j0 {
            b.add(x[k], y[k]);
        }
        if b.dispersion() > dispersion_threshold {
            i += 1;
            continue;
        }
        let mut j = j0;
        while j + 1 < n {
            let mut grown = b;
            grown.add(x[j + 1], y[j + 1]);
            if grown.dispersion() > dispersion_threshold {
                break;
            }
            b = grown;
            j += 1;
        }
        let m = (j - i + 1) as f64;
        let cx = x[i..=j].iter().sum::<f64>() / m;
        let cy = y[i..=j].iter().sum::<f64>() / m;
        out.push(Fixation {
            start: t[i],
            end: t[j],
            centroid: (cx, cy),
            dispersion: b.dispersion(),
        });
        i = j + 1;
    }
    out
}

fn is_valid(x: f64, y: f64, c: f64, cutoff: f64) -> bool {
    c >= cutoff && (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)
}

/// Linear-interpolated quantile of an unsorted sample.
fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// The ten gaze features of one window, with default thresholds.
pub fn gaze_feature_vector(track: &GazeTrack) -> FeatureVector {
    gaze_feature_vector_with(track, &GazeFeatureConfig::default())
}

pub fn gaze_feature_vector_with(track: &GazeTrack, cfg: &GazeFeatureConfig) -> FeatureVector {
    let names = GAZE_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    FeatureVector {
        names,
        values: gaze_feature_values(track, cfg).to_vec(),
    }
}

pub fn gaze_feature_values(track: &GazeTrack, cfg: &GazeFeatureConfig) -> [f64; 10] {
    let n = track.len();
    let mut out = [0.0; 10];
    if n == 0 {
        return out;
    }
    let (t, x, y, c) = (track.timestamps(), track.x(), track.y(), track.confidence());
    let valid: Vec<usize> = (0..n)
        .filter(|&i| is_valid(x[i], y[i], c[i], cfg.confidence_cutoff))
        .collect();
    out[0] = (n - valid.len()) as f64 / n as f64;
    if valid.is_empty() {
        return out;
    }

    let pick = |v: &[f64]| valid.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let clean = GazeTrack::new(pick(t), pick(x), pick(y), pick(c)).expect("subset of a valid track");
    let fixations = detect_fixations(&clean, cfg.dispersion_threshold, cfg.min_duration);
    let span = t[n - 1] - t[0];
    let fix_time: f64 = fixations.iter().map(Fixation::duration).sum();
    out[1] = fixations.len() as f64;
    if !fixations.is_empty() {
        out[2] = fix_time / fixations.len() as f64;
    }
    if span > 0.0 {
        out[3] = (fix_time / span).clamp(0.0, 1.0);
    }
    let amplitudes: Vec<f64> = fixations
        .windows(2)
        .map(|w| (w[1].centroid.0 - w[0].centroid.0).hypot(w[1].centroid.1 - w[0].centroid.1))
        .collect();
    out[4] = amplitudes.len() as f64;
    if !amplitudes.is_empty() {
        out[5] = amplitudes.iter().sum::<f64>() / amplitudes.len() as f64;
    }

    let (ct, cx, cy) = (clean.timestamps(), clean.x(), clean.y());
    let mut path = 0.0;
    let mut speeds = Vec::with_capacity(ct.len().saturating_sub(1));
    for k in 1..ct.len() {
        let step = (cx[k] - cx[k - 1]).hypot(cy[k] - cy[k - 1]);
        path += step;
        speeds.push(step / (ct[k] - ct[k - 1]));
    }
    out[6] = path;
    if !speeds.is_empty() {
        out[7] = speeds.iter().sum::<f64>() / speeds.len() as f64;
        out[8] = quantile(&speeds, 0.95);
    }
    let mut b = Bounds::new(cx[0], cy[0]);
    for k in 1..cx.len() {
        b.add(cx[k], cy[k]);
    }
    out[9] = b.dispersion();
    out
}
