//! Per-participant and cross-participant evaluation of every configured
//! pipeline under every configured split policy.

use std::fmt::Write as _;
use std::time::Instant;

use attnpipe_core::eeg_features::FilterBank;
use attnpipe_core::epoching::SkippedTrial;
use attnpipe_core::eval::*;
use attnpipe_core::signal::Preprocessor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Resolved;
use crate::rundir::RunDir;
use crate::source::Source;
use crate::CliResult;

/// An evaluation that could not run, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipNote {
    pub participant_id: String,
    pub policy: String,
    pub pipeline: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ParticipantResult {
    pub participant_id: String,
    pub has_gaze: bool,
    pub reports: Vec<EvalReport>,
    pub skipped_trials: Vec<SkippedTrial>,
}

/// Aggregate of one (policy, pipeline) cell over participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub policy: String,
    pub pipeline: String,
    pub n_participants: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub mean_precision_real: f64,
    pub mean_recall_real: f64,
    pub mean_f1_real: f64,
    pub mean_precision_virtual: f64,
    pub mean_recall_virtual: f64,
    pub mean_f1_virtual: f64,
    /// Threshold at the smallest per-participant test size.
    pub threshold: f64,
    pub n_significant: usize,
    pub mean_eeg_fraction: Option<f64>,
    pub positions: PositionReport,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub participants: Vec<ParticipantResult>,
    /// Held-out reports per pipeline.
    pub loso: Vec<(PipelineSpec, Vec<EvalReport>)>,
    pub skipped: Vec<SkipNote>,
}

impl Evaluation {
    /// Every report of one cell, in participant order.
    pub fn cell(&self, policy: SplitPolicy, pipeline: &str) -> Vec<&EvalReport> {
        if policy == SplitPolicy::LeaveOneSubjectOut {
            return self
                .loso
                .iter()
                .filter(|(s, _)| s.name() == pipeline)
                .flat_map(|(_, r)| r.iter())
                .collect();
        }
        self.participants
            .iter()
            .flat_map(|p| &p.reports)
            .filter(|r| r.policy == policy && r.pipeline == pipeline)
            .collect()
    }

    pub fn summaries(&self, res: &Resolved) -> Vec<CellSummary> {
        let mut out = Vec::new();
        for &policy in &res.policies {
            for spec in &res.pipelines {
                let reports = self.cell(policy, spec.name());
                if let Some(s) = summarize(policy, spec.name(), &reports) {
                    out.push(s);
                }
            }
        }
        out
    }
}

fn mean_of(reports: &[&EvalReport], f: impl Fn(&RunSummary) -> f64) -> f64 {
    let per: Vec<f64> = reports
        .iter()
        .map(|r| r.runs.iter().map(&f).sum::<f64>() / r.runs.len() as f64)
        .collect();
    mean_std(&per).0
}

fn summarize(policy: SplitPolicy, pipeline: &str, reports: &[&EvalReport]) -> Option<CellSummary> {
    let first = reports.first()?;
    let acc: Vec<f64> = reports.iter().map(|r| r.mean_accuracy).collect();
    let (mean, std) = mean_std(&acc);
    let n_test = reports.iter().map(|r| r.n_test).min().unwrap_or(1).max(1);
    let threshold = significance_threshold(n_test, 0.5, first.alpha).unwrap_or(f64::NAN);
    let fractions: Vec<f64> = reports.iter().filter_map(|r| r.mean_eeg_fraction).collect();
    let pooled: Vec<Vec<WindowPrediction>> = reports.iter().flat_map(|r| r.predictions.iter().cloned()).collect();
    Some(CellSummary {
        policy: policy.as_str().into(),
        pipeline: pipeline.into(),
        n_participants: reports.len(),
        mean_accuracy: mean,
        std_accuracy: std,
        min_accuracy: acc.iter().copied().fold(f64::INFINITY, f64::min),
        max_accuracy: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_precision_real: mean_of(reports, |r| r.metrics.real.precision),
        mean_recall_real: mean_of(reports, |r| r.metrics.real.recall),
        mean_f1_real: mean_of(reports, |r| r.metrics.real.f1),
        mean_precision_virtual: mean_of(reports, |r| r.metrics.virtual_.precision),
        mean_recall_virtual: mean_of(reports, |r| r.metrics.virtual_.recall),
        mean_f1_virtual: mean_of(reports, |r| r.metrics.virtual_.f1),
        threshold,
        n_significant: reports.iter().filter(|r| r.significant).count(),
        mean_eeg_fraction: (!fractions.is_empty()).then(|| mean_std(&fractions).0),
        positions: position_accuracy_analysis(&pooled),
    })
}

fn needs_gaze(spec: &PipelineSpec) -> bool {
    !matches!(spec, PipelineSpec::Eeg)
}

struct Prepared {
    windows: Vec<PreparedWindow>,
    result: ParticipantResult,
    skipped: Vec<SkipNote>,
}

fn evaluate_participant(res: &Resolved, source: &Source, index: usize, keep_windows: bool) -> CliResult<Prepared> {
    let cfg = &res.cfg;
    let started = Instant::now();
    let session = source.load(index)?;
    let fs = session.recording.fs();
    let pre = Preprocessor::new(&cfg.preprocess, fs)?;
    let pc = cfg.pipeline_config();
    let bank = FilterBank::new(&pc.fbcsp.bands, fs, pc.fbcsp.transition)?;
    let products = process_session(&session, &pre, &bank, &cfg.gaze, None)?;
    let participant_id = session.participant_id.clone();
    drop(session);
    let windows = products.windows;
    let has_gaze = !windows.is_empty() && windows.iter().all(|w| w.gaze.is_some());

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for &policy in res.policies.iter().filter(|p| **p != SplitPolicy::LeaveOneSubjectOut) {
        for spec in &res.pipelines {
            if needs_gaze(spec) && !has_gaze {
                skipped.push(SkipNote {
                    participant_id: participant_id.clone(),
                    policy: policy.as_str().into(),
                    pipeline: spec.name().into(),
                    reason: "no eye-tracking recording".into(),
                });
                continue;
            }
            let split = policy_splitter(policy, cfg.test_frac)?;
            let n_runs = effective_runs(policy, cfg.n_runs);
            match repeat_eval(&windows, &participant_id, policy, n_runs, cfg.seed, split, *spec, &pc, cfg.alpha) {
                Ok(r) => reports.push(r),
                Err(e) => skipped.push(SkipNote {
                    participant_id: participant_id.clone(),
                    policy: policy.as_str().into(),
                    pipeline: spec.name().into(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    log::info!(
        "{participant_id}: {} windows, {} evaluations in {:.1} s",
        windows.len(),
        reports.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(Prepared {
        windows: if keep_windows { windows } else { Vec::new() },
        result: ParticipantResult {
            participant_id,
            has_gaze,
            reports,
            skipped_trials: products.skipped,
        },
        skipped,
    })
}

/// Evaluates every participant of `source`, on `cfg.jobs` threads.
pub fn run_evaluation(res: &Resolved, source: &Source) -> CliResult<Evaluation> {
    let loso = res.policies.contains(&SplitPolicy::LeaveOneSubjectOut);
    let prepared = crate::with_pool(res.cfg.jobs, || {
        (0..source.len())
            .into_par_iter()
            .map(|i| evaluate_participant(res, source, i, loso))
            .collect::<Vec<_>>()
    })?
    .into_iter()
    .collect::<CliResult<Vec<_>>>()?;

    let mut skipped: Vec<SkipNote> = prepared.iter().flat_map(|p| p.skipped.iter().cloned()).collect();
    let mut loso_reports = Vec::new();
    if loso {
        let pc = res.cfg.pipeline_config();
        for spec in &res.pipelines {
            let windows: Vec<PreparedWindow> = prepared
                .iter()
                .filter(|p| !needs_gaze(spec) || p.result.has_gaze)
                .flat_map(|p| p.windows.iter().cloned())
                .collect();
            match evaluate_loso(&windows, *spec, &pc, res.cfg.alpha) {
                Ok(folds) => loso_reports.push((*spec, folds.into_iter().map(|(_, r)| r).collect())),
                Err(e) => skipped.push(SkipNote {
                    participant_id: String::new(),
                    policy: SplitPolicy::LeaveOneSubjectOut.as_str().into(),
                    pipeline: spec.name().into(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok(Evaluation {
        participants: prepared.into_iter().map(|p| p.result).collect(),
        loso: loso_reports,
        skipped,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.6}"))
}

/// Participants as rows, one mean and std column per (policy, pipeline).
pub fn overview_csv(res: &Resolved, ev: &Evaluation) -> String {
    let cells: Vec<(SplitPolicy, &str)> = res
        .policies
        .iter()
        .flat_map(|&p| res.pipelines.iter().map(move |s| (p, s.name())))
        .collect();
    let mut s = String::from("participant");
    for (p, n) in &cells {
        let _ = write!(s, ",{p}/{n}/mean,{p}/{n}/std");
    }
    s.push('\n');
    let ids: Vec<&str> = ev.participants.iter().map(|p| p.participant_id.as_str()).collect();
    for id in &ids {
        s.push_str(id);
        for (p, n) in &cells {
            let r = ev.cell(*p, n).into_iter().find(|r| r.label == *id);
            let std = r.filter(|r| r.runs.len() > 1).map(|r| r.std_accuracy);
            let _ = write!(s, ",{},{}", fmt_opt(r.map(|r| r.mean_accuracy)), fmt_opt(std));
        }
        s.push('\n');
    }
    let summaries = ev.summaries(res);
    for (row, pick) in [("mean", 0), ("std", 1)] {
        s.push_str(row);
        for (p, n) in &cells {
            let c = summaries.iter().find(|c| c.policy == p.as_str() && c.pipeline == *n);
            let v = c.map(|c| if pick == 0 { c.mean_accuracy } else { c.std_accuracy });
            let _ = write!(s, ",{},", fmt_opt(v));
        }
        s.push('\n');
    }
    s
}

pub fn summary_csv(summaries: &[CellSummary]) -> String {
    let mut s = String::from(
        "policy,pipeline,n_participants,mean_accuracy,std_accuracy,min_accuracy,max_accuracy,precision_real,recall_real,f1_real,precision_virtual,recall_virtual,f1_virtual,threshold,n_significant,eeg_fraction\n",
    );
    for c in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            c.policy,
            c.pipeline,
            c.n_participants,
            c.mean_accuracy,
            c.std_accuracy,
            c.min_accuracy,
            c.max_accuracy,
            c.mean_precision_real,
            c.mean_recall_real,
            c.mean_f1_real,
            c.mean_precision_virtual,
            c.mean_recall_virtual,
            c.mean_f1_virtual,
            c.threshold,
            c.n_significant,
            fmt_opt(c.mean_eeg_fraction)
        );
    }
    s
}

pub fn positions_csv(summaries: &[CellSummary]) -> (String, String) {
    let mut pos = String::from("policy,pipeline,position,accuracy,std_error,n_runs\n");
    let mut pairs = String::from("policy,pipeline,a,b,t,df,p,significant_05,significant_001\n");
    for c in summaries {
        for p in &c.positions.positions {
            let _ = writeln!(pos, "{},{},{},{:.6},{:.6},{}", c.policy, c.pipeline, p.position, p.accuracy, p.std_error, p.n_runs);
        }
        for q in &c.positions.pairs {
            let _ = writeln!(
                pairs,
                "{},{},{},{},{:.6},{:.3},{:.6e},{},{}",
                c.policy, c.pipeline, q.a, q.b, q.test.t, q.test.df, q.test.p, q.significant_05, q.significant_001
            );
        }
    }
    (pos, pairs)
}

/// Writes every result table of an evaluation into `dir`.
pub fn write_evaluation(dir: &RunDir, res: &Resolved, ev: &Evaluation) -> CliResult<()> {
    let summaries = ev.summaries(res);
    dir.write_text("overview.csv", &overview_csv(res, ev))?;
    dir.write_text("summary.csv", &summary_csv(&summaries))?;
    dir.write_json("summary.json", &summaries)?;
    let (pos, pairs) = positions_csv(&summaries);
    dir.write_text("positions.csv", &pos)?;
    dir.write_text("position_pairs.csv", &pairs)?;

    let mut runs = String::new();
    let all: Vec<&EvalReport> = ev
        .participants
        .iter()
        .flat_map(|p| &p.reports)
        .chain(ev.loso.iter().flat_map(|(_, r)| r))
        .collect();
    for (i, r) in all.iter().enumerate() {
        let csv = r.runs_csv();
        let body = if i == 0 { csv.as_str() } else { csv.split_once('\n').map_or("", |x| x.1) };
        runs.push_str(body);
    }
    dir.write_text("runs.csv", &runs)?;
    dir.write_json("reports.json", &all)?;

    let mut skipped = String::from("participant,trial_id,policy,pipeline,reason\n");
    for p in &ev.participants {
        for t in &p.skipped_trials {
            let _ = writeln!(skipped, "{},{},,,\"{}\"", t.participant_id, t.trial_id, t.reason.replace('"', "'"));
        }
    }
    for n in &ev.skipped {
        let _ = writeln!(skipped, "{},,{},{},\"{}\"", n.participant_id, n.policy, n.pipeline, n.reason.replace('"', "'"));
    }
    dir.write_text("skipped.csv", &skipped)?;
    Ok(())
}
