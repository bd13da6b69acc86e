use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WindowMeta;
use crate::data_model::Condition;
use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRAC: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    TrialOblivious,
    TrialSensitive,
    Chronological,
    LeaveOneSubjectOut,
}

impl SplitPolicy {
    pub const ALL: [SplitPolicy; 4] = [
        SplitPolicy::TrialOblivious,
        SplitPolicy::TrialSensitive,
        SplitPolicy::Chronological,
        SplitPolicy::LeaveOneSubjectOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitPolicy::TrialOblivious => "trial_oblivious",
            SplitPolicy::TrialSensitive => "trial_sensitive",
            SplitPolicy::Chronological => "chronological",
            SplitPolicy::LeaveOneSubjectOut => "loso",
        }
    }
}

impl std::fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trial_oblivious" => Ok(SplitPolicy::TrialOblivious),
            "trial_sensitive" => Ok(SplitPolicy::TrialSensitive),
            "chronological" => Ok(SplitPolicy::Chronological),
            "loso" | "leave_one_subject_out" => Ok(SplitPolicy::LeaveOneSubjectOut),
            other => Err(Error::InvalidConfig(format!("policy: unknown value '{other}'"))),
        }
    }
}

/// Train/test window indices under one leakage policy. Both lists are
/// sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub policy: SplitPolicy,
    pub seed: Option<u64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    fn new(policy: SplitPolicy, seed: Option<u64>, mut train: Vec<usize>, mut test: Vec<usize>) -> Self {
        train.sort_unstable();
        test.sort_unstable();
        Self {
            policy,
            seed,
            train,
            test,
        }
    }
}

/// `round(frac * n)` with halves rounded up.
pub fn stratified_count(n: usize, frac: f64) -> usize {
    ((frac * n as f64 + 0.5 + 1e-9).floor() as usize).min(n)
}

fn check_frac(test_frac: f64) -> Result<()> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidConfig(format!("test_frac: {test_frac} outside (0, 1)")));
    }
    Ok(())
}

/// Window-level stratified split that ignores trial membership.
pub fn split_trial_oblivious<W: WindowMeta>(windows: &[W], test_frac: f64, seed: u64) -> Result<Split> {
    check_frac(test_frac)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for cond in Condition::ALL {
        let mut idx: Vec<usize> = (0..windows.len())
            .filter(|&i| windows[i].condition() == cond)
            .collect();
        if idx.len() < 2 {
            return Err(Error::TooFewWindows(format!(
                "{} {cond} windows, need at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let k = stratified_count(idx.len(), test_frac).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    Ok(Split::new(SplitPolicy::TrialOblivious, Some(seed), train, test))
}

type TrialKey = (String, u32);

fn trials_by_class<W: WindowMeta>(windows: &[W]) -> BTreeMap<Condition, BTreeMap<TrialKey, Vec<usize>>> {
    let mut out: BTreeMap<Condition, BTreeMap<TrialKey, Vec<usize>>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        out.entry(w.condition())
            .or_default()
            .entry((w.participant_id().to_string(), w.trial_id()))
            .or_default()
            .push(i);
    }
    out
}

fn require_trials(groups: &BTreeMap<Condition, BTreeMap<TrialKey, Vec<usize>>>) -> Result<()> {
    for cond in Condition::ALL {
        let n = groups.get(&cond).map_or(0, BTreeMap::len);
        if n < 2 {
            return Err(Error::TooFewTrials(format!("{n} {cond} trials, need at least 2")));
        }
    }
    Ok(())
}

/// Stratified split over trials; all windows of a trial stay together.
pub fn split_trial_sensitive<W: WindowMeta>(windows: &[W], test_frac: f64, seed: u64) -> Result<Split> {
    check_frac(test_frac)?;
    let groups = trials_by_class(windows);
    require_trials(&groups)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for cond in Condition::ALL {
        let mut trials: Vec<&Vec<usize>> = groups[&cond].values().collect();
        trials.shuffle(&mut rng);
        let k = stratified_count(trials.len(), test_frac).clamp(1, trials.len() - 1);
        for (j, t) in trials.iter().enumerate() {
            if j < k {
                test.extend_from_slice(t);
            } else {
                train.extend_from_slice(t);
            }
        }
    }
    Ok(Split::new(SplitPolicy::TrialSensitive, Some(seed), train, test))
}

/// Per participant and class, the earliest `ceil((1 - test_frac) * n)`
/// trials train and the rest test. At least one trial is always tested.
pub fn split_chronological<W: WindowMeta>(windows: &[W], test_frac: f64) -> Result<Split> {
    check_frac(test_frac)?;
    require_trials(&trials_by_class(windows))?;
    let mut groups: BTreeMap<(String, Condition), BTreeMap<u32, (f64, Vec<usize>)>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        groups
            .entry((w.participant_id().to_string(), w.condition()))
            .or_default()
            .entry(w.trial_id())
            .or_insert_with(|| (w.memory_onset(), Vec::new()))
            .1
            .push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for trials in groups.values() {
        let mut ordered: Vec<(u32, &(f64, Vec<usize>))> = trials.iter().map(|(k, v)| (*k, v)).collect();
        ordered.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)));
        let n = ordered.len();
        let n_train = (((1.0 - test_frac) * n as f64 - 1e-9).ceil() as usize).min(n.saturating_sub(1));
        for (j, (_, (_, idx))) in ordered.iter().enumerate() {
            if j < n_train {
                train.extend_from_slice(idx);
            } else {
                test.extend_from_slice(idx);
            }
        }
    }
    Ok(Split::new(SplitPolicy::Chronological, None, train, test))
}

pub fn participants<W: WindowMeta>(windows: &[W]) -> Vec<String> {
    windows
        .iter()
        .map(|w| w.participant_id().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Holds out every window of one participant.
pub fn split_loso<W: WindowMeta>(windows: &[W], held_out: &str) -> Result<Split> {
    let ids = participants(windows);
    if ids.len() < 2 {
        return Err(Error::TooFewParticipants(ids.len()));
    }
    if !ids.iter().any(|p| p == held_out) {
        return Err(Error::UnknownParticipant(held_out.to_string()));
    }
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..windows.len()).partition(|&i| windows[i].participant_id() == held_out);
    Ok(Split::new(SplitPolicy::LeaveOneSubjectOut, None, train, test))
}
