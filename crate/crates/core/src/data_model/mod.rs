//! Domain types for multimodal recordings and their on-disk layout.
//!
//! A session directory holds `manifest.json`, `eeg.csv`, `events.csv` and an
//! optional `gaze.csv`. All types are immutable once constructed and are
//! validated on construction or load.

mod io;
mod montage;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, load_session, save_dataset, save_session};
pub use montage::{standard_position, ElectrodeMontage, STANDARD_LABELS};
pub use validate::{validate_dataset, Severity, ValidationEntry, ValidationReport};

/// Default EEG sampling rate in Hz.
pub const DEFAULT_FS: f64 = 500.0;
/// Nominal eye-tracker sampling rate in Hz.
pub const NOMINAL_GAZE_RATE: f64 = 120.0;
/// Relative deviation from [`NOMINAL_GAZE_RATE`] accepted by validation.
pub const GAZE_RATE_TOLERANCE: f64 = 0.2;
/// Protocol duration of the Memory-Phase in seconds.
pub const MEMORY_DURATION: f64 = 20.0;
/// Memory phases shorter than this cannot hold all five windows.
pub const MIN_MEMORY_DURATION: f64 = 18.0;
/// Protocol cap on trials per condition.
pub const MAX_TRIALS_PER_CONDITION: usize = 20;

/// Which kind of cards the participant attended to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Real,
    Virtual,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Real, Condition::Virtual];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Real => "Real",
            Condition::Virtual => "Virtual",
        }
    }

    /// +1 for Virtual, -1 for Real; the sign convention of the classifiers.
    pub fn sign(self) -> f64 {
        match self {
            Condition::Real => -1.0,
            Condition::Virtual => 1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Condition::Real => Condition::Virtual,
            Condition::Virtual => Condition::Real,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Condition::Real),
            "virtual" => Ok(Condition::Virtual),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

/// Card layout of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldSize {
    #[serde(rename = "5x5")]
    F5x5,
    #[serde(rename = "4x3")]
    F4x3,
    #[serde(rename = "7x2")]
    F7x2,
    #[serde(rename = "4x4")]
    F4x4,
}

impl FieldSize {
    pub const ALL: [FieldSize; 4] = [
        FieldSize::F5x5,
        FieldSize::F4x3,
        FieldSize::F7x2,
        FieldSize::F4x4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldSize::F5x5 => "5x5",
            FieldSize::F4x3 => "4x3",
            FieldSize::F7x2 => "7x2",
            FieldSize::F4x4 => "4x4",
        }
    }
}

impl FromStr for FieldSize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FieldSize::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| format!("unknown field size {s:?}"))
    }
}

/// Index of the sample nearest to time `t` on the grid `t0 + i / fs`.
pub fn sample_index(t0: f64, fs: f64, t: f64) -> i64 {
    ((t - t0) * fs).round() as i64
}

/// Time of sample `i` on the grid `t0 + i / fs`.
pub fn sample_time(t0: f64, fs: f64, i: usize) -> f64 {
    t0 + i as f64 / fs
}

/// Multichannel EEG in microvolts, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    samples: Vec<Vec<f64>>,
    fs: f64,
    t0: f64,
}

impl Recording {
    pub fn new(samples: Vec<Vec<f64>>, fs: f64, t0: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvariantViolation("t0 must be finite".into()));
        }
        if let Some(first) = samples.first() {
            let n = first.len();
            for (c, row) in samples.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::InvariantViolation(format!(
                        "channel {c} has {} samples, channel 0 has {n}",
                        row.len()
                    )));
                }
                if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvariantViolation(format!(
                        "non-finite sample at channel {c}, index {i}"
                    )));
                }
            }
        }
        Ok(Self { samples, fs, t0 })
    }

    /// Builds a recording from data already known to satisfy the invariants.
    pub(crate) fn from_parts_unchecked(samples: Vec<Vec<f64>>, fs: f64, t0: f64) -> Self {
        debug_assert!(samples.windows(2).all(|w| w[0].len() == w[1].len()));
        Self { samples, fs, t0 }
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c]
    }

    pub fn into_samples(self) -> Vec<Vec<f64>> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Time just past the last sample.
    pub fn end_time(&self) -> f64 {
        self.t0 + self.n_samples() as f64 / self.fs
    }

    /// Sample index of time `t`, rounded to the nearest sample.
    pub fn index_at(&self, t: f64) -> i64 {
        sample_index(self.t0, self.fs, t)
    }

    /// Copies samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Recording {
        let samples = self.samples.iter().map(|r| r[start..end].to_vec()).collect();
        Recording {
            samples,
            fs: self.fs,
            t0: self.t0 + start as f64 / self.fs,
        }
    }
}

/// Normalized 2D gaze points with detector confidence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GazeTrack {
    timestamps: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    confidence: Vec<f64>,
}

impl GazeTrack {
    pub fn new(timestamps: Vec<f64>, x: Vec<f64>, y: Vec<f64>, confidence: Vec<f64>) -> Result<Self> {
        let n = timestamps.len();
        if x.len() != n || y.len() != n || confidence.len() != n {
            return Err(Error::InvariantViolation(format!(
                "gaze columns differ in length: t={n}, x={}, y={}, confidence={}",
                x.len(),
                y.len(),
                confidence.len()
            )));
        }
        for i in 0..n {
            if !(timestamps[i].is_finite() && x[i].is_finite() && y[i].is_finite()) {
                return Err(Error::InvariantViolation(format!(
                    "non-finite gaze sample at index {i}"
                )));
            }
            if !(0.0..=1.0).contains(&confidence[i]) {
                return Err(Error::InvariantViolation(format!(
                    "gaze confidence {} outside [0, 1] at index {i}",
                    confidence[i]
                )));
            }
            if i > 0 && timestamps[i] <= timestamps[i - 1] {
                return Err(Error::InvariantViolation(format!(
                    "gaze timestamps not strictly increasing at index {i}"
                )));
            }
        }
        Ok(Self {
            timestamps,
            x,
            y,
            confidence,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Samples with `start <= t < end`.
    pub fn slice(&self, start: f64, end: f64) -> GazeTrack {
        let lo = self.timestamps.partition_point(|&t| t < start);
        let hi = self.timestamps.partition_point(|&t| t < end);
        GazeTrack {
            timestamps: self.timestamps[lo..hi].to_vec(),
            x: self.x[lo..hi].to_vec(),
            y: self.y[lo..hi].to_vec(),
            confidence: self.confidence[lo..hi].to_vec(),
        }
    }

    /// Effective rate from first to last sample, `None` below two samples.
    pub fn effective_rate(&self) -> Option<f64> {
        let n = self.timestamps.len();
        if n < 2 {
            return None;
        }
        let span = self.timestamps[n - 1] - self.timestamps[0];
        Some((n - 1) as f64 / span)
    }
}

/// One trial's Memory-Phase marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub trial_id: u32,
    pub condition: Condition,
    pub memory_onset: f64,
    pub memory_duration: f64,
    pub field_size: FieldSize,
}

/// One participant's recording with its markers.
///
/// Fields are public so that damaged sessions can be represented and
/// reported by [`validate_dataset`]; use [`Session::new`] to build a
/// checked one.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub participant_id: String,
    pub recording: Recording,
    pub gaze: Option<GazeTrack>,
    pub events: Vec<TrialEvent>,
    pub bad_channels: BTreeSet<String>,
    pub montage: ElectrodeMontage,
}

impl Session {
    pub fn new(
        participant_id: impl Into<String>,
        recording: Recording,
        gaze: Option<GazeTrack>,
        events: Vec<TrialEvent>,
        bad_channels: BTreeSet<String>,
        montage: ElectrodeMontage,
    ) -> Result<Self> {
        let session = Self {
            participant_id: participant_id.into(),
            recording,
            gaze,
            events,
            bad_channels,
            montage,
        };
        if let Some(v) = session
            .check()
            .into_iter()
            .find(|e| e.severity == Severity::Violation)
        {
            return Err(Error::InvariantViolation(v.to_string()));
        }
        Ok(session)
    }

    /// All invariant findings for this session, including informational ones.
    pub fn check(&self) -> Vec<ValidationEntry> {
        validate::check_session(self)
    }

    /// Copy of everything but the EEG samples, which are left empty.
    pub fn clone_without_signal(&self) -> Session {
        Session {
            participant_id: self.participant_id.clone(),
            recording: Recording::from_parts_unchecked(Vec::new(), self.recording.fs, self.recording.t0),
            gaze: self.gaze.clone(),
            events: self.events.clone(),
            bad_channels: self.bad_channels.clone(),
            montage: self.montage.clone(),
        }
    }

    pub fn event(&self, trial_id: u32) -> Option<&TrialEvent> {
        self.events.iter().find(|e| e.trial_id == trial_id)
    }
}

/// A set of sessions with unique participant ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub sessions: Vec<Session>,
}

impl Dataset {
    pub fn new(sessions: Vec<Session>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &sessions {
            if !seen.insert(s.participant_id.as_str()) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate participant id {}",
                    s.participant_id
                )));
            }
        }
        Ok(Self { sessions })
    }
}
