//! Session replay over TCP and online classification of the replayed stream.
//!
//! Wire format: one JSON object per LF-terminated line with fields
//! `{kind, t, v}`. `v` is the channel vector for `eeg`, `[x, y, confidence]`
//! for `gaze` and `{trial_id, condition, phase}` for `event`. Frames are sent
//! in global timestamp order; at equal timestamps events precede EEG, which
//! precedes gaze.
//!
//! The online classifier filters each buffered window on its own, so its
//! decisions match [`offline_prediction`] on the same window exactly.

use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::classify::{Modality, Prediction};
use crate::data_model::{sample_index, sample_time, Condition, ElectrodeMontage, GazeTrack, Recording, Session};
use crate::epoching::{window_len, window_start, window_time_span, WINDOW_OFFSETS, WINDOW_SECONDS};
use crate::error::{Error, Result};
use crate::eeg_features::FilterBank;
use crate::eval::{fit_pipeline, process_session, PipelineConfig, PipelineSpec, PreparedWindow, TrainedPipeline};
use crate::gaze_features::{gaze_feature_values, GazeFeatureConfig};
use crate::signal::{PreprocessConfig, Preprocessor};

pub const DEFAULT_PORT: u16 = 17324;
/// Seconds between online decisions.
pub const DEFAULT_HOP: f64 = 1.0;
/// Latest window end after Memory-Phase onset, seconds.
pub const LAST_WINDOW_END: f64 = 18.0;

const MEMORY_PHASE: &str = "memory";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    pub trial_id: u32,
    pub condition: Condition,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StreamFrame {
    Eeg { t: f64, v: Vec<f64> },
    Gaze { t: f64, v: [f64; 3] },
    Event { t: f64, v: EventPayload },
}

impl StreamFrame {
    pub fn t(&self) -> f64 {
        match self {
            StreamFrame::Eeg { t, .. } | StreamFrame::Gaze { t, .. } | StreamFrame::Event { t, .. } => *t,
        }
    }
}

/// Every frame of a session in wire order.
pub fn session_frames(session: &Session) -> impl Iterator<Item = StreamFrame> + '_ {
    let rec = &session.recording;
    let mut events: Vec<_> = session.events.iter().collect();
    events.sort_by(|a, b| a.memory_onset.total_cmp(&b.memory_onset).then(a.trial_id.cmp(&b.trial_id)));
    let n_gaze = session.gaze.as_ref().map_or(0, GazeTrack::len);
    let (mut e, mut i, mut g) = (0usize, 0usize, 0usize);
    std::iter::from_fn(move || {
        let te = events.get(e).map(|ev| ev.memory_onset);
        let ti = (i < rec.n_samples()).then(|| sample_time(rec.t0(), rec.fs(), i));
        let tg = session.gaze.as_ref().filter(|_| g < n_gaze).map(|gz| gz.timestamps()[g]);
        let next = [te, ti, tg]
            .into_iter()
            .enumerate()
            .filter_map(|(k, t)| t.map(|t| (k, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
        Some(match next.0 {
            0 => {
                let ev = events[e];
                e += 1;
                StreamFrame::Event {
                    t: ev.memory_onset,
                    v: EventPayload {
                        trial_id: ev.trial_id,
                        condition: ev.condition,
                        phase: MEMORY_PHASE.into(),
                    },
                }
            }
            1 => {
                let v = rec.samples().iter().map(|row| row[i]).collect();
                i += 1;
                StreamFrame::Eeg { t: next.1, v }
            }
            _ => {
                let gz = session.gaze.as_ref().expect("gaze source is active");
                let v = [gz.x()[g], gz.y()[g], gz.confidence()[g]];
                g += 1;
                StreamFrame::Gaze { t: next.1, v }
            }
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeSummary {
    pub peer: String,
    pub frames_sent: usize,
    pub frames_total: usize,
    /// Set when the client went away before the last frame.
    pub disconnected: Option<String>,
    pub wall_seconds: f64,
}

pub struct SessionServer {
    listener: TcpListener,
}

impl SessionServer {
    pub fn bind(addr: &str) -> Result<Self> {
        let fail = |reason: String| Error::BindFailure {
            addr: addr.to_string(),
            reason,
        };
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(|e| fail(e.to_string()))?.collect();
        let listener = TcpListener::bind(&addrs[..]).map_err(|e| fail(e.to_string()))?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(|e| Error::BindFailure {
            addr: "listener".into(),
            reason: e.to_string(),
        })
    }

    /// Waits for one client and replays `session` to it. `speed_factor` 0
    /// sends as fast as possible; otherwise `Δt` of session time takes
    /// `Δt / speed_factor` of wall time. A client that disconnects early is
    /// logged and reported in the summary, not treated as an error.
    pub fn serve(&self, session: &Session, speed_factor: f64) -> Result<ServeSummary> {
        if !(speed_factor.is_finite() && speed_factor >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "speed_factor: must be a finite non-negative number, got {speed_factor}"
            )));
        }
        let (socket, peer) = self.listener.accept().map_err(|e| Error::ConnectionLost(e.to_string()))?;
        let peer = peer.to_string();
        log::info!("streaming {} to {peer}", session.participant_id);
        let total = session.recording.n_samples()
            + session.gaze.as_ref().map_or(0, GazeTrack::len)
            + session.events.len();
        let mut out = BufWriter::with_capacity(1 << 16, socket);
        let started = Instant::now();
        let mut t_first = None;
        let mut sent = 0;
        let mut disconnected = None;
        let mut line = Vec::with_capacity(512);
        for frame in session_frames(session) {
            if speed_factor > 0.0 {
                let t0 = *t_first.get_or_insert(frame.t());
                let due = Duration::from_secs_f64(((frame.t() - t0) / speed_factor).max(0.0));
                let now = started.elapsed();
                if due > now + Duration::from_millis(1) {
                    if let Err(e) = out.flush() {
                        disconnected = Some(e.to_string());
                        break;
                    }
                    std::thread::sleep(due - now);
                }
            }
            line.clear();
            serde_json::to_writer(&mut line, &frame)?;
            line.push(b'\n');
            if let Err(e) = out.write_all(&line) {
                disconnected = Some(e.to_string());
                break;
            }
            sent += 1;
        }
        if disconnected.is_none() {
            if let Err(e) = out.flush() {
                disconnected = Some(e.to_string());
            }
        }
        if let Some(reason) = &disconnected {
            let err = Error::ClientDisconnect {
                peer: peer.clone(),
                reason: reason.clone(),
            };
            log::warn!("{err} after {sent} of {total} frames");
        }
        Ok(ServeSummary {
            peer,
            frames_sent: sent,
            frames_total: total,
            disconnected,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

/// Binds `addr`, serves one client and returns.
pub fn serve_session(session: &Session, addr: &str, speed_factor: f64) -> Result<ServeSummary> {
    SessionServer::bind(addr)?.serve(session, speed_factor)
}

/// Everything the online classifier needs: fitted models plus the recording
/// context they were fitted in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub participant_id: String,
    pub montage: ElectrodeMontage,
    pub fs: f64,
    pub preprocess: PreprocessConfig,
    pub bad_channels: BTreeSet<String>,
    pub gaze_features: GazeFeatureConfig,
    pub pipeline: TrainedPipeline,
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: ModelBundle = serde_json::from_str(s)?;
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        let p = &self.pipeline;
        let uses_gaze = !matches!(p.spec, PipelineSpec::Eeg);
        let uses_eeg = !matches!(p.spec, PipelineSpec::Gaze);
        if uses_eeg != p.eeg.is_some() || uses_gaze != p.gaze.is_some() {
            return Err(Error::InvariantViolation(format!(
                "{} pipeline carries the wrong set of models",
                p.spec.name()
            )));
        }
        if let Some((fb, _)) = &p.eeg {
            if fb.n_channels() != self.montage.len() {
                return Err(Error::InvariantViolation(format!(
                    "CSP filters span {} channels, montage has {}",
                    fb.n_channels(),
                    self.montage.len()
                )));
            }
            if (fb.fs - self.fs).abs() > 1e-9 {
                return Err(Error::InvariantViolation(format!(
                    "filter bank designed for {} Hz, bundle declares {} Hz",
                    fb.fs, self.fs
                )));
            }
        }
        Ok(())
    }

    /// Per-window preprocessing and prediction. `gaze` is `None` when the
    /// source has no eye tracking at all; a fusion model then decides on
    /// EEG alone.
    pub fn predict_raw(
        &self,
        pre: &Preprocessor,
        raw: Vec<Vec<f64>>,
        t0: f64,
        gaze: Option<GazeTrack>,
    ) -> Result<(Prediction, Option<Modality>)> {
        let rec = Recording::new(raw, self.fs, t0)?;
        let clean = pre.apply(&rec, &self.bad_channels, &self.montage)?;
        let p = &self.pipeline;
        if gaze.is_none() && p.eeg.is_none() {
            return Err(Error::ModelMismatch("gaze model but the stream has no gaze frames".into()));
        }
        let prepared = PreparedWindow {
            participant_id: self.participant_id.clone(),
            trial_id: 0,
            condition: Condition::Real,
            position_index: 0,
            memory_onset: t0,
            fs: self.fs,
            scatters: match &p.eeg {
                Some((fb, _)) => fb.filter_bank()?.scatters(clean.samples())?,
                None => Vec::new(),
            },
            gaze: gaze.as_ref().map(|g| gaze_feature_values(g, &self.gaze_features)),
        };
        if let (None, Some((fb, lda)), PipelineSpec::Fusion { .. }) = (&prepared.gaze, &p.eeg, p.spec) {
            let f = fb.features_from_scatters(&prepared.scatters)?;
            return Ok((lda.predict_values(&f.values)?, Some(Modality::Eeg)));
        }
        p.predict(&prepared)
    }

    pub fn preprocessor(&self) -> Result<Preprocessor> {
        Preprocessor::new(&self.preprocess, self.fs)
    }
}

/// One online decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPrediction {
    pub trial_id: u32,
    pub truth: Condition,
    /// Window start relative to Memory-Phase onset, seconds.
    pub offset: f64,
    /// Offline window position this window coincides with, if any.
    pub position_index: Option<usize>,
    pub window_start: f64,
    /// Time of the decision: the end of the window.
    pub t: f64,
    pub label: Condition,
    pub confidence: f64,
    pub score: f64,
    pub decided_by: Option<Modality>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamSummary {
    pub eeg_frames: usize,
    pub gaze_frames: usize,
    pub events: usize,
    pub predictions: usize,
    /// Windows whose samples never fully arrived.
    pub incomplete_windows: usize,
}

/// Window start offsets after onset for a hop, anchored at the first offline
/// position and ending with the last window that closes by 18 s.
pub fn hop_offsets(hop: f64) -> Result<Vec<f64>> {
    if !(hop.is_finite() && hop > 0.0) {
        return Err(Error::InvalidConfig(format!("hop: must be positive, got {hop}")));
    }
    let first = WINDOW_OFFSETS[0];
    let span = LAST_WINDOW_END - WINDOW_SECONDS - first;
    let n = (span / hop + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| first + k as f64 * hop).collect())
}

fn aligned_position(offset: f64) -> Option<usize> {
    WINDOW_OFFSETS.iter().position(|&o| (o - offset).abs() < 1e-9)
}

struct Pending {
    trial_id: u32,
    truth: Condition,
    onset: f64,
    offset: f64,
}

struct OnlineState<'a> {
    bundle: &'a ModelBundle,
    pre: Preprocessor,
    len: usize,
    t0: Option<f64>,
    n_eeg: usize,
    /// EEG samples from index `base` on.
    eeg: VecDeque<Vec<f64>>,
    base: usize,
    gaze: VecDeque<(f64, [f64; 3])>,
    saw_gaze: bool,
    pending: VecDeque<Pending>,
    summary: StreamSummary,
}

impl OnlineState<'_> {
    fn bounds(&self, p: &Pending) -> Option<(usize, f64, f64)> {
        let t0 = self.t0?;
        let start = sample_index(t0, self.bundle.fs, p.onset + p.offset);
        if start < 0 {
            return None;
        }
        let start = start as usize;
        let a = sample_time(t0, self.bundle.fs, start);
        let b = sample_time(t0, self.bundle.fs, start + self.len);
        Some((start, a, b))
    }

    fn decide(&mut self, p: &Pending, start: usize, a: f64, b: f64) -> Result<StreamPrediction> {
        let n_ch = self.bundle.montage.len();
        let mut raw = vec![Vec::with_capacity(self.len); n_ch];
        for s in self.eeg.range(start - self.base..start - self.base + self.len) {
            for (row, &v) in raw.iter_mut().zip(s) {
                row.push(v);
            }
        }
        let gaze = if self.saw_gaze {
            let pts: Vec<_> = self.gaze.iter().filter(|(t, _)| *t >= a && *t < b).collect();
            Some(GazeTrack::new(
                pts.iter().map(|p| p.0).collect(),
                pts.iter().map(|p| p.1[0]).collect(),
                pts.iter().map(|p| p.1[1]).collect(),
                pts.iter().map(|p| p.1[2]).collect(),
            )?)
        } else {
            None
        };
        let (pred, decided_by) = self.bundle.predict_raw(&self.pre, raw, a, gaze)?;
        Ok(StreamPrediction {
            trial_id: p.trial_id,
            truth: p.truth,
            offset: p.offset,
            position_index: aligned_position(p.offset),
            window_start: a,
            t: b,
            label: pred.label,
            confidence: pred.confidence,
            score: pred.score,
            decided_by,
        })
    }

    /// Decides every pending window that closes by `now`.
    fn flush(&mut self, now: f64, on_prediction: &mut dyn FnMut(&StreamPrediction)) -> Result<()> {
        while let Some(p) = self.pending.front() {
            if self.t0.is_none() {
                if self.saw_gaze {
                    return Err(Error::ModelMismatch("stream carries gaze but no EEG frames".into()));
                }
                return Ok(());
            }
            let Some((start, a, b)) = self.bounds(p) else {
                self.pending.pop_front();
                self.summary.incomplete_windows += 1;
                continue;
            };
            if b > now || start + self.len > self.n_eeg {
                break;
            }
            let p = self.pending.pop_front().expect("front exists");
            if start < self.base {
                self.summary.incomplete_windows += 1;
                continue;
            }
            let pred = self.decide(&p, start, a, b)?;
            self.summary.predictions += 1;
            on_prediction(&pred);
        }
        self.prune();
        Ok(())
    }

    fn prune(&mut self) {
        let keep_from = match self.pending.front().and_then(|p| self.bounds(p)) {
            Some((start, a, _)) => Some((start.min(self.n_eeg), a)),
            None => self.t0.map(|t0| (self.n_eeg, sample_time(t0, self.bundle.fs, self.n_eeg))),
        };
        let Some((idx, t)) = keep_from else {
            return;
        };
        while self.base < idx && !self.eeg.is_empty() {
            self.eeg.pop_front();
            self.base += 1;
        }
        while self.gaze.front().is_some_and(|g| g.0 < t) {
            self.gaze.pop_front();
        }
    }

    fn push(&mut self, frame: StreamFrame, hop_offsets: &[f64]) -> Result<()> {
        match frame {
            StreamFrame::Eeg { t, v } => {
                if v.len() != self.bundle.montage.len() {
                    return Err(Error::ModelMismatch(format!(
                        "EEG frame has {} channels, model expects {}",
                        v.len(),
                        self.bundle.montage.len()
                    )));
                }
                let t0 = *self.t0.get_or_insert(t);
                let expected = sample_time(t0, self.bundle.fs, self.n_eeg);
                if (t - expected).abs() > 0.5 / self.bundle.fs {
                    return Err(Error::ModelMismatch(format!(
                        "EEG frame at {t} s does not fit a {} Hz grid (expected {expected} s)",
                        self.bundle.fs
                    )));
                }
                if self.n_eeg == self.base && self.eeg.is_empty() && self.pending.is_empty() {
                    // nothing will ever need this sample
                    self.base += 1;
                } else {
                    self.eeg.push_back(v);
                }
                self.n_eeg += 1;
                self.summary.eeg_frames += 1;
            }
            StreamFrame::Gaze { t, v } => {
                self.saw_gaze = true;
                if self.gaze.back().is_some_and(|g| t < g.0) {
                    return Err(Error::MalformedFrame(format!("gaze timestamp {t} goes backwards")));
                }
                self.gaze.push_back((t, v));
                self.summary.gaze_frames += 1;
            }
            StreamFrame::Event { t, v } => {
                self.summary.events += 1;
                if v.phase == MEMORY_PHASE {
                    for &offset in hop_offsets {
                        self.pending.push_back(Pending {
                            trial_id: v.trial_id,
                            truth: v.condition,
                            onset: t,
                            offset,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Connects to a replay server and classifies every hop until the stream
/// ends. Each decision is handed to `on_prediction` as soon as it is made.
pub fn classify_stream(
    bundle: &ModelBundle,
    addr: &str,
    hop: f64,
    mut on_prediction: impl FnMut(&StreamPrediction),
) -> Result<StreamSummary> {
    let offsets = hop_offsets(hop)?;
    let socket = TcpStream::connect(addr).map_err(|e| Error::ConnectionLost(format!("{addr}: {e}")))?;
    let reader = BufReader::with_capacity(1 << 16, socket);
    let mut state = OnlineState {
        bundle,
        pre: bundle.preprocessor()?,
        len: window_len(bundle.fs),
        t0: None,
        n_eeg: 0,
        eeg: VecDeque::new(),
        base: 0,
        gaze: VecDeque::new(),
        saw_gaze: false,
        pending: VecDeque::new(),
        summary: StreamSummary::default(),
    };
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::ConnectionLost(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let frame: StreamFrame =
            serde_json::from_str(&line).map_err(|e| Error::MalformedFrame(format!("line {}: {e}", n + 1)))?;
        state.flush(frame.t(), &mut on_prediction)?;
        state.push(frame, &offsets)?;
    }
    state.flush(f64::INFINITY, &mut on_prediction)?;
    if state.t0.is_none() && bundle.pipeline.eeg.is_some() && state.summary.events > 0 {
        return Err(Error::ModelMismatch("stream carries no EEG frames but the model needs EEG".into()));
    }
    state.summary.incomplete_windows += state.pending.len();
    Ok(state.summary)
}

/// The offline reference for one online window: the raw session samples at
/// `offset` seconds after the onset of `trial_id`, through the same
/// per-window path the stream uses.
pub fn offline_prediction(
    bundle: &ModelBundle,
    pre: &Preprocessor,
    session: &Session,
    trial_id: u32,
    offset: f64,
) -> Result<(Prediction, Option<Modality>)> {
    let rec = &session.recording;
    let ev = session
        .event(trial_id)
        .ok_or_else(|| Error::InvariantViolation(format!("no trial {trial_id}")))?;
    let len = window_len(rec.fs());
    let start = window_start(rec, ev.memory_onset, offset);
    if start < 0 || start as usize + len > rec.n_samples() {
        return Err(Error::InvariantViolation(format!(
            "window at {offset} s of trial {trial_id} leaves the recording"
        )));
    }
    let start = start as usize;
    let raw = rec.samples().iter().map(|r| r[start..start + len].to_vec()).collect();
    let (a, b) = window_time_span(rec, start, len);
    let gaze = session.gaze.as_ref().map(|g| g.slice(a, b));
    bundle.predict_raw(pre, raw, a, gaze)
}

/// Fits a bundle on the windows of `session` (whole-recording preprocessing,
/// as in offline evaluation). `trials` restricts training to those trial ids.
pub fn fit_bundle(
    session: &Session,
    spec: PipelineSpec,
    cfg: &PipelineConfig,
    preprocess: &PreprocessConfig,
    gaze_features: &GazeFeatureConfig,
    trials: Option<&BTreeSet<u32>>,
) -> Result<ModelBundle> {
    let fs = session.recording.fs();
    let pre = Preprocessor::new(preprocess, fs)?;
    let bank = FilterBank::new(&cfg.fbcsp.bands, fs, cfg.fbcsp.transition)?;
    let products = process_session(session, &pre, &bank, gaze_features, None)?;
    let train: Vec<&PreparedWindow> = products
        .windows
        .iter()
        .filter(|w| trials.is_none_or(|t| t.contains(&w.trial_id)))
        .collect();
    let pipeline = fit_pipeline(&train, spec, cfg)?;
    let bundle = ModelBundle {
        participant_id: session.participant_id.clone(),
        montage: session.montage.clone(),
        fs,
        preprocess: preprocess.clone(),
        bad_channels: session.bad_channels.clone(),
        gaze_features: *gaze_features,
        pipeline,
    };
    bundle.check()?;
    Ok(bundle)
}
