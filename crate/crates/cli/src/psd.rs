//! Band-power group analysis over all participants.

use attnpipe_core::data_model::Session;
use attnpipe_core::epoching::extract_windows;
use attnpipe_core::eval::{psd_group_analysis_table, psd_table, FeatureDiffReport, PsdTable};
use attnpipe_core::signal::Preprocessor;
use rayon::prelude::*;

use crate::config::Resolved;
use crate::rundir::RunDir;
use crate::source::Source;
use crate::CliResult;

fn participant_table(res: &Resolved, source: &Source, index: usize) -> CliResult<PsdTable> {
    let session = source.load(index)?;
    let pre = Preprocessor::new(&res.cfg.preprocess, session.recording.fs())?;
    let clean = Session {
        recording: pre.apply(&session.recording, &session.bad_channels, &session.montage)?,
        ..session.clone_without_signal()
    };
    drop(session);
    let ex = extract_windows(&clean);
    Ok(psd_table(&ex.windows, clean.montage.names(), &res.cfg.bands)?)
}

pub fn run_psd(res: &Resolved, source: &Source) -> CliResult<FeatureDiffReport> {
    let tables = crate::with_pool(res.cfg.jobs, || {
        (0..source.len())
            .into_par_iter()
            .map(|i| participant_table(res, source, i))
            .collect::<Vec<_>>()
    })?;
    let mut all: Option<PsdTable> = None;
    for t in tables {
        let t = t?;
        match &mut all {
            Some(acc) => acc.append(t)?,
            None => all = Some(t),
        }
    }
    let table = all.expect("source has at least one participant");
    Ok(psd_group_analysis_table(&table, res.cfg.psd_alpha)?)
}

pub fn write_psd(dir: &RunDir, report: &FeatureDiffReport) -> CliResult<()> {
    dir.write_text("psd_features.csv", &report.to_csv())?;
    dir.write_json("psd_report.json", report)?;
    let mut selected = report.selected().join("\n");
    selected.push('\n');
    dir.write_text("psd_selected.txt", &selected)?;
    Ok(())
}
