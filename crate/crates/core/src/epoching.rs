//! Cuts each Memory-Phase into five labelled 3-second windows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data_model::{sample_time, Condition, GazeTrack, Recording, Session};

/// Window length in seconds.
pub const WINDOW_SECONDS: f64 = 3.0;
/// Window start offsets after Memory-Phase onset, indexed by position.
pub const WINDOW_OFFSETS: [f64; 5] = [3.0, 6.0, 9.0, 12.0, 15.0];
pub const WINDOWS_PER_TRIAL: usize = WINDOW_OFFSETS.len();

/// One labelled segment, the unit every classifier sees.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochWindow {
    pub participant_id: String,
    pub trial_id: u32,
    pub condition: Condition,
    pub position_index: usize,
    /// Memory-Phase onset of the owning trial, seconds.
    pub memory_onset: f64,
    /// First sample of the window in the source recording.
    pub start_sample: usize,
    pub fs: f64,
    /// Channels × samples.
    pub eeg: Vec<Vec<f64>>,
    pub gaze: Option<GazeTrack>,
}

impl EpochWindow {
    pub fn n_channels(&self) -> usize {
        self.eeg.len()
    }

    pub fn n_samples(&self) -> usize {
        self.eeg.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTrial {
    pub participant_id: String,
    pub trial_id: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub windows: Vec<EpochWindow>,
    /// Trials that could not be windowed (`TrialOutOfBounds`).
    pub skipped: Vec<SkippedTrial>,
}

/// Window length in samples at `fs`.
pub fn window_len(fs: f64) -> usize {
    (WINDOW_SECONDS * fs).round() as usize
}

/// Sample range of the window starting `offset` seconds after `onset`.
/// The arithmetic is shared with the online classifier so both paths pick
/// identical samples.
pub fn window_start(rec: &Recording, onset: f64, offset: f64) -> i64 {
    rec.index_at(onset + offset)
}

/// Time span `[start, end)` covered by samples `start..start+len`.
pub fn window_time_span(rec: &Recording, start: usize, len: usize) -> (f64, f64) {
    (
        sample_time(rec.t0(), rec.fs(), start),
        sample_time(rec.t0(), rec.fs(), start + len),
    )
}

/// Extracts windows from a preprocessed session.
///
/// Trials whose windows would leave the recording are skipped and listed in
/// [`Extraction::skipped`].
pub fn extract_windows(session: &Session) -> Extraction {
    let rec = &session.recording;
    let len = window_len(rec.fs());
    let mut out = Extraction::default();
    for ev in &session.events {
        let starts: Vec<i64> = WINDOW_OFFSETS
            .iter()
            .map(|&o| window_start(rec, ev.memory_onset, o))
            .collect();
        let fits = starts
            .iter()
            .all(|&s| s >= 0 && s as usize + len <= rec.n_samples());
        if !fits {
            out.skipped.push(SkippedTrial {
                participant_id: session.participant_id.clone(),
                trial_id: ev.trial_id,
                reason: format!(
                    "windows of trial at {} s exceed recording [{}, {}) s",
                    ev.memory_onset,
                    rec.t0(),
                    rec.end_time()
                ),
            });
            continue;
        }
        for (position_index, &s) in starts.iter().enumerate() {
            let start = s as usize;
            let eeg = rec
                .samples()
                .iter()
                .map(|row| row[start..start + len].to_vec())
                .collect();
            let gaze = session.gaze.as_ref().map(|g| {
                let (a, b) = window_time_span(rec, start, len);
                g.slice(a, b)
            });
            out.windows.push(EpochWindow {
                participant_id: session.participant_id.clone(),
                trial_id: ev.trial_id,
                condition: ev.condition,
                position_index,
                memory_onset: ev.memory_onset,
                start_sample: start,
                fs: rec.fs(),
                eeg,
                gaze,
            });
        }
    }
    out
}

pub type WindowTally = BTreeMap<(String, Condition, usize), usize>;

/// Counts windows per (participant, condition, position).
pub fn window_counts<'a, I>(windows: I) -> WindowTally
where
    I: IntoIterator<Item = &'a EpochWindow>,
{
    let mut tally = WindowTally::new();
    for w in windows {
        *tally
            .entry((w.participant_id.clone(), w.condition, w.position_index))
            .or_default() += 1;
    }
    tally
}
