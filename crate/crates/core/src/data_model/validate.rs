use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    Condition, Dataset, Session, GAZE_RATE_TOLERANCE, MAX_TRIALS_PER_CONDITION,
    MIN_MEMORY_DURATION, NOMINAL_GAZE_RATE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    /// Breaks a session invariant.
    Violation,
    /// Worth knowing, does not block analysis.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub participant_id: String,
    pub trial_id: Option<u32>,
    pub rule: String,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ValidationEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.participant_id, self.rule)?;
        if let Some(t) = self.trial_id {
            write!(f, " (trial {t})")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &ValidationEntry> {
        self.entries
            .iter()
            .filter(|e| e.severity == Severity::Violation)
    }

    pub fn is_valid(&self) -> bool {
        self.violations().next().is_none()
    }
}

/// Checks every session; problems are reported, never raised.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut entries = Vec::new();
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &dataset.sessions {
        *ids.entry(s.participant_id.as_str()).or_default() += 1;
    }
    for (id, n) in ids {
        if n > 1 {
            entries.push(ValidationEntry {
                participant_id: id.to_string(),
                trial_id: None,
                rule: "unique_participant".into(),
                severity: Severity::Violation,
                message: format!("participant id appears {n} times"),
            });
        }
    }
    for s in &dataset.sessions {
        entries.extend(check_session(s));
    }
    ValidationReport { entries }
}

pub(super) fn check_session(s: &Session) -> Vec<ValidationEntry> {
    let mut out = Vec::new();
    let mut push = |trial: Option<u32>, rule: &str, severity: Severity, message: String| {
        out.push(ValidationEntry {
            participant_id: s.participant_id.clone(),
            trial_id: trial,
            rule: rule.to_string(),
            severity,
            message,
        })
    };

    if s.recording.n_channels() != s.montage.len() {
        push(
            None,
            "channel_count",
            Severity::Violation,
            format!(
                "recording has {} channels, montage has {}",
                s.recording.n_channels(),
                s.montage.len()
            ),
        );
    }
    for b in &s.bad_channels {
        if s.montage.index_of(b).is_none() {
            push(
                None,
                "bad_channels_in_montage",
                Severity::Violation,
                format!("bad channel {b} is not in the montage"),
            );
        }
    }

    let start = s.recording.t0();
    let end = s.recording.end_time();
    let mut seen = BTreeMap::new();
    let mut per_condition: BTreeMap<Condition, usize> = BTreeMap::new();
    for e in &s.events {
        if seen.insert(e.trial_id, ()).is_some() {
            push(
                Some(e.trial_id),
                "unique_trial_id",
                Severity::Violation,
                "trial id is duplicated".into(),
            );
        }
        *per_condition.entry(e.condition).or_default() += 1;
        if !(e.memory_duration > MIN_MEMORY_DURATION) {
            push(
                Some(e.trial_id),
                "memory_duration",
                Severity::Violation,
                format!(
                    "memory duration {} s must exceed {MIN_MEMORY_DURATION} s",
                    e.memory_duration
                ),
            );
        }
        let phase_end = e.memory_onset + e.memory_duration;
        if !(e.memory_onset >= start && phase_end <= end) {
            push(
                Some(e.trial_id),
                "event_within_recording",
                Severity::Violation,
                format!(
                    "memory phase [{}, {}] s outside recording [{start}, {end}] s",
                    e.memory_onset, phase_end
                ),
            );
        }
    }
    for (cond, n) in per_condition {
        if n > MAX_TRIALS_PER_CONDITION {
            push(
                None,
                "trials_per_condition",
                Severity::Violation,
                format!("{n} {cond} trials, protocol allows {MAX_TRIALS_PER_CONDITION}"),
            );
        }
    }

    match &s.gaze {
        None => push(
            None,
            "gaze_present",
            Severity::Info,
            "no eye-tracking data; gaze and fusion pipelines are skipped".into(),
        ),
        Some(g) => {
            if let Some(rate) = g.effective_rate() {
                let lo = NOMINAL_GAZE_RATE * (1.0 - GAZE_RATE_TOLERANCE);
                let hi = NOMINAL_GAZE_RATE * (1.0 + GAZE_RATE_TOLERANCE);
                if !(lo..=hi).contains(&rate) {
                    push(
                        None,
                        "gaze_rate",
                        Severity::Violation,
                        format!("gaze rate {rate:.1} Hz outside [{lo}, {hi}] Hz"),
                    );
                }
            }
        }
    }
    out
}
