//! Split protocols, the fit/predict pipeline, metrics and reports.

mod position;
mod psd;
mod split;
pub mod stats;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use position::{position_accuracy_analysis, PositionPair, PositionReport, PositionStat};
pub use psd::{
    default_welch, minmax_scale_per_participant, psd_feature_names, psd_features, psd_group_analysis,
    psd_group_analysis_table, psd_table, FeatureDiffReport, FeatureDiffRow, PsdTable, ScaledTable, PSD_ALPHA,
};
pub use split::{
    participants, split_chronological, split_loso, split_trial_oblivious, split_trial_sensitive,
    stratified_count, Split, SplitPolicy, DEFAULT_TEST_FRAC,
};
pub use stats::{
    mean_std, normal_cdf, normal_quantile, paired_ttest, pearson_r, significance_threshold, welch_ttest, TTest,
};

use crate::classify::{fit_lda_rows, fuse, LdaModel, Modality, Prediction, DEFAULT_RIDGE_SCALE, DEFAULT_TAU};
use crate::data_model::{Condition, Session};
use crate::eeg_features::{fit_fbcsp_from_scatters, BandScatter, FbcspConfig, FbcspModel, FilterBank};
use crate::epoching::{extract_windows, EpochWindow, SkippedTrial, WINDOWS_PER_TRIAL};
use crate::error::{Error, Result};
use crate::gaze_features::{gaze_feature_values, GazeFeatureConfig, GAZE_FEATURE_NAMES};
use crate::signal::{BandDefinition, Preprocessor};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_RUNS: usize = 10;

/// Labels every split and report needs from a window.
pub trait WindowMeta {
    fn participant_id(&self) -> &str;
    fn trial_id(&self) -> u32;
    fn condition(&self) -> Condition;
    fn position_index(&self) -> usize;
    fn memory_onset(&self) -> f64;
}

impl WindowMeta for EpochWindow {
    fn participant_id(&self) -> &str {
        &self.participant_id
    }
    fn trial_id(&self) -> u32 {
        self.trial_id
    }
    fn condition(&self) -> Condition {
        self.condition
    }
    fn position_index(&self) -> usize {
        self.position_index
    }
    fn memory_onset(&self) -> f64 {
        self.memory_onset
    }
}

/// A window reduced to what the classifiers read: band scatters for the
/// filter bank and the gaze feature values. Computing these does not
/// depend on any split, so they are shared by every run.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedWindow {
    pub participant_id: String,
    pub trial_id: u32,
    pub condition: Condition,
    pub position_index: usize,
    pub memory_onset: f64,
    pub fs: f64,
    pub scatters: Vec<BandScatter>,
    pub gaze: Option<[f64; 10]>,
}

impl WindowMeta for PreparedWindow {
    fn participant_id(&self) -> &str {
        &self.participant_id
    }
    fn trial_id(&self) -> u32 {
        self.trial_id
    }
    fn condition(&self) -> Condition {
        self.condition
    }
    fn position_index(&self) -> usize {
        self.position_index
    }
    fn memory_onset(&self) -> f64 {
        self.memory_onset
    }
}

pub fn prepare_window(w: &EpochWindow, bank: &FilterBank, gaze_cfg: &GazeFeatureConfig) -> Result<PreparedWindow> {
    Ok(PreparedWindow {
        participant_id: w.participant_id.clone(),
        trial_id: w.trial_id,
        condition: w.condition,
        position_index: w.position_index,
        memory_onset: w.memory_onset,
        fs: w.fs,
        scatters: bank.scatters(&w.eeg)?,
        gaze: w.gaze.as_ref().map(|g| gaze_feature_values(g, gaze_cfg)),
    })
}

pub fn prepare_windows(
    windows: &[EpochWindow],
    bank: &FilterBank,
    gaze_cfg: &GazeFeatureConfig,
) -> Result<Vec<PreparedWindow>> {
    windows.iter().map(|w| prepare_window(w, bank, gaze_cfg)).collect()
}

/// Everything the evaluations need from one session.
#[derive(Debug, Clone)]
pub struct SessionProducts {
    pub windows: Vec<PreparedWindow>,
    /// Band-power rows, when requested.
    pub psd: Option<PsdTable>,
    pub skipped: Vec<SkippedTrial>,
}

/// Preprocesses, epochs and featurizes one session, so that the raw signal
/// can be dropped before the next one is loaded.
pub fn process_session(
    session: &Session,
    pre: &Preprocessor,
    bank: &FilterBank,
    gaze_cfg: &GazeFeatureConfig,
    psd_bands: Option<&[BandDefinition]>,
) -> Result<SessionProducts> {
    let recording = pre.apply(&session.recording, &session.bad_channels, &session.montage)?;
    let clean = Session {
        recording,
        ..session.clone_without_signal()
    };
    let ex = extract_windows(&clean);
    let psd = psd_bands
        .map(|bands| psd_table(&ex.windows, session.montage.names(), bands))
        .transpose()?;
    Ok(SessionProducts {
        windows: prepare_windows(&ex.windows, bank, gaze_cfg)?,
        psd,
        skipped: ex.skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PipelineSpec {
    Eeg,
    Gaze,
    Fusion { tau: f64 },
}

impl PipelineSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PipelineSpec::Eeg => "eeg",
            PipelineSpec::Gaze => "gaze",
            PipelineSpec::Fusion { .. } => "fusion",
        }
    }

    pub fn parse(name: &str, tau: f64) -> Result<Self> {
        match name {
            "eeg" => Ok(PipelineSpec::Eeg),
            "gaze" => Ok(PipelineSpec::Gaze),
            "fusion" => {
                if !(0.5..=1.0).contains(&tau) {
                    return Err(Error::InvalidConfig(format!("tau: {tau} outside [0.5, 1]")));
                }
                Ok(PipelineSpec::Fusion { tau })
            }
            other => Err(Error::InvalidConfig(format!("pipeline: unknown value '{other}'"))),
        }
    }

    fn uses_eeg(&self) -> bool {
        !matches!(self, PipelineSpec::Gaze)
    }

    fn uses_gaze(&self) -> bool {
        !matches!(self, PipelineSpec::Eeg)
    }
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec::Fusion { tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fbcsp: FbcspConfig,
    pub ridge_scale: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fbcsp: FbcspConfig::default(),
            ridge_scale: DEFAULT_RIDGE_SCALE,
        }
    }
}

/// Models fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub spec: PipelineSpec,
    pub eeg: Option<(FbcspModel, LdaModel)>,
    pub gaze: Option<LdaModel>,
}

fn gaze_of<'a>(w: &'a PreparedWindow) -> Result<&'a [f64; 10]> {
    w.gaze.as_ref().ok_or_else(|| {
        Error::MissingModality(format!(
            "participant {} trial {} has no gaze",
            w.participant_id, w.trial_id
        ))
    })
}

/// Fits every model the pipeline needs. Only training windows reach here.
pub fn fit_pipeline(train: &[&PreparedWindow], spec: PipelineSpec, cfg: &PipelineConfig) -> Result<TrainedPipeline> {
    let Some(first) = train.first() else {
        return Err(Error::TooFewWindows("empty training set".into()));
    };
    let labels: Vec<Condition> = train.iter().map(|w| w.condition).collect();
    let eeg = if spec.uses_eeg() {
        let fb = fit_fbcsp_from_scatters(
            &cfg.fbcsp,
            first.fs,
            train.iter().map(|w| (w.scatters.as_slice(), w.condition)),
        )?;
        let feats = train
            .iter()
            .map(|w| fb.features_from_scatters(&w.scatters).map(|f| f.values))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        let lda = fit_lda_rows(&rows, &labels, fb.feature_names.clone(), cfg.ridge_scale)?;
        Some((fb, lda))
    } else {
        None
    };
    let gaze = if spec.uses_gaze() {
        let rows = train
            .iter()
            .map(|w| gaze_of(w).map(|g| g.as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let names = GAZE_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        Some(fit_lda_rows(&rows, &labels, names, cfg.ridge_scale)?)
    } else {
        None
    };
    Ok(TrainedPipeline { spec, eeg, gaze })
}

impl TrainedPipeline {
    pub fn predict(&self, w: &PreparedWindow) -> Result<(Prediction, Option<Modality>)> {
        let eeg = match &self.eeg {
            Some((fb, lda)) => Some(lda.predict_values(&fb.features_from_scatters(&w.scatters)?.values)?),
            None => None,
        };
        let gaze = match &self.gaze {
            Some(lda) => Some(lda.predict_values(gaze_of(w)?)?),
            None => None,
        };
        Ok(match (self.spec, eeg, gaze) {
            (PipelineSpec::Fusion { tau }, Some(e), Some(g)) => {
                let f = fuse(e, g, tau);
                (f.prediction, Some(f.decided_by))
            }
            (_, Some(e), _) => (e, None),
            (_, None, Some(g)) => (g, None),
            (_, None, None) => unreachable!("a pipeline uses at least one modality"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub window: usize,
    pub participant_id: String,
    pub trial_id: u32,
    pub position_index: usize,
    pub truth: Condition,
    pub predicted: Condition,
    pub confidence: f64,
    pub score: f64,
    pub decided_by: Option<Modality>,
}

impl WindowPrediction {
    pub fn correct(&self) -> bool {
        self.truth == self.predicted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub n_test: usize,
    /// `confusion[truth][predicted]`, Real = 0, Virtual = 1.
    pub confusion: [[usize; 2]; 2],
    pub real: ClassMetrics,
    #[serde(rename = "virtual")]
    pub virtual_: ClassMetrics,
}

impl Metrics {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Condition, Condition)>,
    {
        let mut confusion = [[0usize; 2]; 2];
        for (truth, pred) in pairs {
            confusion[truth as usize][pred as usize] += 1;
        }
        let n = confusion.iter().flatten().sum::<usize>();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let class = |k: usize| {
            let tp = confusion[k][k];
            let precision = ratio(tp, confusion[0][k] + confusion[1][k]);
            let recall = ratio(tp, confusion[k][0] + confusion[k][1]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
            }
        };
        Metrics {
            accuracy: ratio(confusion[0][0] + confusion[1][1], n),
            n_test: n,
            confusion,
            real: class(0),
            virtual_: class(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metrics: Metrics,
    pub predictions: Vec<WindowPrediction>,
    /// Share of fused decisions taken by the EEG model.
    pub eeg_fraction: Option<f64>,
}

fn check_split(split: &Split, n: usize) -> Result<()> {
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::TooFewWindows("split has an empty side".into()));
    }
    if split.train.iter().chain(&split.test).any(|&i| i >= n) {
        return Err(Error::InvariantViolation("split index beyond window list".into()));
    }
    let mut both = split.train.iter().filter(|i| split.test.binary_search(i).is_ok());
    if let Some(i) = both.next() {
        return Err(Error::InvariantViolation(format!("window {i} is in train and test")));
    }
    Ok(())
}

/// Fits on the training side of `split` and scores every test window.
pub fn run_pipeline(
    windows: &[PreparedWindow],
    split: &Split,
    spec: PipelineSpec,
    cfg: &PipelineConfig,
) -> Result<RunOutcome> {
    check_split(split, windows.len())?;
    let train: Vec<&PreparedWindow> = split.train.iter().map(|&i| &windows[i]).collect();
    let model = fit_pipeline(&train, spec, cfg)?;
    let mut predictions = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let w = &windows[i];
        let (p, decided_by) = model.predict(w)?;
        predictions.push(WindowPrediction {
            window: i,
            participant_id: w.participant_id.clone(),
            trial_id: w.trial_id,
            position_index: w.position_index,
            truth: w.condition,
            predicted: p.label,
            confidence: p.confidence,
            score: p.score,
            decided_by,
        });
    }
    let metrics = Metrics::from_pairs(predictions.iter().map(|p| (p.truth, p.predicted)));
    let eeg_fraction = matches!(spec, PipelineSpec::Fusion { .. }).then(|| {
        let n = predictions.iter().filter(|p| p.decided_by == Some(Modality::Eeg)).count();
        n as f64 / predictions.len() as f64
    });
    Ok(RunOutcome {
        metrics,
        predictions,
        eeg_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: Option<u64>,
    pub metrics: Metrics,
    pub eeg_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionAccuracy {
    pub position: usize,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub pipeline: String,
    pub policy: SplitPolicy,
    pub runs: Vec<RunSummary>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub mean_f1_real: f64,
    pub mean_f1_virtual: f64,
    /// Smallest test-set size over runs; the threshold is taken at it.
    pub n_test: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub significant: bool,
    /// Pooled over runs.
    pub positions: Vec<PositionAccuracy>,
    pub pooled_accuracy: f64,
    pub mean_eeg_fraction: Option<f64>,
    #[serde(skip)]
    pub predictions: Vec<Vec<WindowPrediction>>,
}

impl EvalReport {
    /// Aggregates finished runs.
    pub fn from_runs(
        label: &str,
        spec: PipelineSpec,
        policy: SplitPolicy,
        alpha: f64,
        runs: Vec<(Option<u64>, RunOutcome)>,
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvariantViolation("no runs to report".into()));
        }
        let acc: Vec<f64> = runs.iter().map(|(_, r)| r.metrics.accuracy).collect();
        let (mean, std) = mean_std(&acc);
        let n_test = runs.iter().map(|(_, r)| r.metrics.n_test).min().unwrap_or(0);
        let threshold = significance_threshold(n_test.max(1), 0.5, alpha)?;
        let mut hits = [0usize; WINDOWS_PER_TRIAL];
        let mut counts = [0usize; WINDOWS_PER_TRIAL];
        for (_, r) in &runs {
            for p in &r.predictions {
                if p.position_index < WINDOWS_PER_TRIAL {
                    counts[p.position_index] += 1;
                    hits[p.position_index] += usize::from(p.correct());
                }
            }
        }
        let positions = (0..WINDOWS_PER_TRIAL)
            .map(|k| PositionAccuracy {
                position: k,
                n: counts[k],
                correct: hits[k],
                accuracy: if counts[k] == 0 { 0.0 } else { hits[k] as f64 / counts[k] as f64 },
            })
            .collect();
        let total: usize = counts.iter().sum();
        let fractions: Vec<f64> = runs.iter().filter_map(|(_, r)| r.eeg_fraction).collect();
        let n_runs = runs.len() as f64;
        let mean_f1_real = runs.iter().map(|(_, r)| r.metrics.real.f1).sum::<f64>() / n_runs;
        let mean_f1_virtual = runs.iter().map(|(_, r)| r.metrics.virtual_.f1).sum::<f64>() / n_runs;
        let mut summaries = Vec::with_capacity(runs.len());
        let mut predictions = Vec::with_capacity(runs.len());
        for (i, (seed, r)) in runs.into_iter().enumerate() {
            summaries.push(RunSummary {
                run: i,
                seed,
                metrics: r.metrics,
                eeg_fraction: r.eeg_fraction,
            });
            predictions.push(r.predictions);
        }
        Ok(EvalReport {
            label: label.to_string(),
            pipeline: spec.name().to_string(),
            policy,
            mean_accuracy: mean,
            std_accuracy: std,
            min_accuracy: acc.iter().copied().fold(f64::INFINITY, f64::min),
            max_accuracy: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_f1_real,
            mean_f1_virtual,
            n_test,
            alpha,
            threshold,
            significant: mean > threshold,
            positions,
            pooled_accuracy: if total == 0 { 0.0 } else { hits.iter().sum::<usize>() as f64 / total as f64 },
            mean_eeg_fraction: (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
            runs: summaries,
            predictions,
        })
    }

    pub fn position_analysis(&self) -> PositionReport {
        position_accuracy_analysis(&self.predictions)
    }

    /// One row per run.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from(
            "label,pipeline,policy,run,seed,n_test,accuracy,precision_real,recall_real,f1_real,precision_virtual,recall_virtual,f1_virtual,eeg_fraction\n",
        );
        for r in &self.runs {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                self.label,
                self.pipeline,
                self.policy,
                r.run,
                r.seed.map_or(String::new(), |v| v.to_string()),
                m.n_test,
                m.accuracy,
                m.real.precision,
                m.real.recall,
                m.real.f1,
                m.virtual_.precision,
                m.virtual_.recall,
                m.virtual_.f1,
                r.eeg_fraction.map_or(String::new(), |v| format!("{v:.6}")),
            );
        }
        s
    }
}

/// Runs `n_runs` evaluations with seeds `base_seed + i`.
pub fn repeat_eval<F>(
    windows: &[PreparedWindow],
    label: &str,
    policy: SplitPolicy,
    n_runs: usize,
    base_seed: u64,
    split_fn: F,
    spec: PipelineSpec,
    cfg: &PipelineConfig,
    alpha: f64,
) -> Result<EvalReport>
where
    F: Fn(&[PreparedWindow], u64) -> Result<Split>,
{
    if n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs: must be at least 1".into()));
    }
    let runs = (0..n_runs as u64)
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            let split = split_fn(windows, seed)?;
            let seed = split.seed;
            run_pipeline(windows, &split, spec, cfg).map(|r| (seed, r))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_runs(label, spec, policy, alpha, runs)
}

/// The split function of a within-participant policy.
pub fn policy_splitter(policy: SplitPolicy, test_frac: f64) -> Result<impl Fn(&[PreparedWindow], u64) -> Result<Split>> {
    if policy == SplitPolicy::LeaveOneSubjectOut {
        return Err(Error::InvalidConfig(
            "policy: loso splits across participants, use evaluate_loso".into(),
        ));
    }
    Ok(move |w: &[PreparedWindow], seed: u64| match policy {
        SplitPolicy::TrialOblivious => split_trial_oblivious(w, test_frac, seed),
        SplitPolicy::TrialSensitive => split_trial_sensitive(w, test_frac, seed),
        _ => split_chronological(w, test_frac),
    })
}

/// Number of repetitions that make sense for a policy; deterministic
/// splits are run once.
pub fn effective_runs(policy: SplitPolicy, n_runs: usize) -> usize {
    match policy {
        SplitPolicy::TrialOblivious | SplitPolicy::TrialSensitive => n_runs,
        SplitPolicy::Chronological | SplitPolicy::LeaveOneSubjectOut => n_runs.min(1),
    }
}

/// One LOSO fold per participant; each fold's outcome keyed by the
/// held-out id.
pub fn evaluate_loso(
    windows: &[PreparedWindow],
    spec: PipelineSpec,
    cfg: &PipelineConfig,
    alpha: f64,
) -> Result<Vec<(String, EvalReport)>> {
    participants(windows)
        .into_iter()
        .map(|p| {
            let split = split_loso(windows, &p)?;
            let outcome = run_pipeline(windows, &split, spec, cfg)?;
            let report = EvalReport::from_runs(&p, spec, SplitPolicy::LeaveOneSubjectOut, alpha, vec![(None, outcome)])?;
            Ok((p, report))
        })
        .collect()
}
