//! Replay server and online classifier commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use attnpipe_core::data_model::Session;
use attnpipe_core::eval::PipelineSpec;
use attnpipe_core::stream::{classify_stream, fit_bundle, ModelBundle, SessionServer, ServeSummary, StreamPrediction, StreamSummary};

use crate::config::Resolved;
use crate::{CliResult, Failure};

pub fn serve(session: &Session, address: &str, speed_factor: f64) -> CliResult<ServeSummary> {
    let server = SessionServer::bind(address)?;
    log::info!("serving {} on {}", session.participant_id, server.local_addr()?);
    Ok(server.serve(session, speed_factor)?)
}

pub fn load_bundle(path: &Path) -> CliResult<ModelBundle> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    Ok(ModelBundle::from_json(&text)?)
}

/// Fits a model on every window of `session`.
pub fn train_bundle(res: &Resolved, session: &Session, spec: PipelineSpec) -> CliResult<ModelBundle> {
    let cfg = &res.cfg;
    Ok(fit_bundle(session, spec, &cfg.pipeline_config(), &cfg.preprocess, &cfg.gaze, None)?)
}

pub fn classify(
    bundle: &ModelBundle,
    address: &str,
    hop: f64,
    mut on_prediction: impl FnMut(&StreamPrediction),
) -> CliResult<(Vec<StreamPrediction>, StreamSummary)> {
    let mut all = Vec::new();
    let summary = classify_stream(bundle, address, hop, |p| {
        on_prediction(p);
        all.push(p.clone());
    })?;
    Ok((all, summary))
}

pub fn predictions_csv(preds: &[StreamPrediction]) -> String {
    let mut s = String::from("trial_id,truth,offset,position_index,window_start,t,label,confidence,score,decided_by\n");
    for p in preds {
        let _ = writeln!(
            s,
            "{},{},{:.3},{},{:.6},{:.6},{},{:.6},{:.6},{}",
            p.trial_id,
            p.truth,
            p.offset,
            p.position_index.map_or(String::new(), |k| k.to_string()),
            p.window_start,
            p.t,
            p.label,
            p.confidence,
            p.score,
            p.decided_by
                .map_or(String::new(), |m| serde_json::to_string(&m).unwrap_or_default().trim_matches('"').to_string())
        );
    }
    s
}
