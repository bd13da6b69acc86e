//! Directory format: `manifest.json`, `eeg.csv`, `events.csv`, `gaze.csv`.
//!
//! CSVs use `,` delimiters, `.` decimals and LF line endings. EEG values are
//! written in scientific notation with nine fractional digits; every other
//! number uses the shortest representation that parses back exactly.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Condition, Dataset, ElectrodeMontage, FieldSize, GazeTrack, Recording, Session, TrialEvent};
use crate::error::{Error, Result};

const MANIFEST: &str = "manifest.json";
const EEG: &str = "eeg.csv";
const EVENTS: &str = "events.csv";
const GAZE: &str = "gaze.csv";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    participant_id: String,
    fs: f64,
    t0: f64,
    channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<[f64; 3]>>,
    bad_channels: Vec<String>,
    has_gaze: bool,
}

pub fn save_session(session: &Session, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        participant_id: session.participant_id.clone(),
        fs: session.recording.fs(),
        t0: session.recording.t0(),
        channels: session.montage.names().to_vec(),
        positions: Some(session.montage.positions().to_vec()),
        bad_channels: session.bad_channels.iter().cloned().collect(),
        has_gaze: session.gaze.is_some(),
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    write_csv(&dir.join(EEG), |w| {
        writeln!(w, "{}", session.montage.names().join(","))?;
        let rows = session.recording.samples();
        let mut line = String::with_capacity(rows.len() * 18);
        for i in 0..session.recording.n_samples() {
            line.clear();
            for (c, row) in rows.iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                use std::fmt::Write as _;
                let _ = write!(line, "{:.9e}", row[i]);
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    })?;

    write_csv(&dir.join(EVENTS), |w| {
        writeln!(w, "trial_id,condition,memory_onset,memory_duration,field_size")?;
        for e in &session.events {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.trial_id,
                e.condition,
                e.memory_onset,
                e.memory_duration,
                e.field_size.as_str()
            )?;
        }
        Ok(())
    })?;

    let gaze_path = dir.join(GAZE);
    match &session.gaze {
        Some(g) => write_csv(&gaze_path, |w| {
            writeln!(w, "timestamp,x,y,confidence")?;
            for i in 0..g.len() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    g.timestamps()[i],
                    g.x()[i],
                    g.y()[i],
                    g.confidence()[i]
                )?;
            }
            Ok(())
        })?,
        None => {
            if gaze_path.exists() {
                fs::remove_file(&gaze_path).map_err(|e| Error::io(&gaze_path, e))?;
            }
        }
    }
    Ok(())
}

fn write_csv(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_session(dir: impl AsRef<Path>) -> Result<Session> {
    let dir = dir.as_ref();
    let manifest_path = require(dir, MANIFEST)?;
    let eeg_path = require(dir, EEG)?;
    let events_path = require(dir, EVENTS)?;

    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::MalformedRow {
        file: manifest_path.clone(),
        line: e.line(),
        reason: e.to_string(),
    })?;

    let montage = match &manifest.positions {
        Some(p) => ElectrodeMontage::new(manifest.channels.clone(), p.clone())?,
        None => ElectrodeMontage::from_labels(&manifest.channels)?,
    };

    let samples = read_eeg(&eeg_path, &manifest.channels)?;
    let recording = Recording::new(samples, manifest.fs, manifest.t0)?;
    let events = read_events(&events_path)?;

    let gaze_path = dir.join(GAZE);
    let gaze = if gaze_path.is_file() {
        Some(read_gaze(&gaze_path)?)
    } else if manifest.has_gaze {
        return Err(Error::MissingFile(gaze_path));
    } else {
        None
    };

    let bad: BTreeSet<String> = manifest.bad_channels.into_iter().collect();
    Session::new(manifest.participant_id, recording, gaze, events, bad, montage)
}

/// Loads every session subdirectory of `dir`, in name order.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut subdirs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.join(MANIFEST).is_file() {
            subdirs.push(path);
        }
    }
    subdirs.sort();
    let sessions = subdirs.iter().map(load_session).collect::<Result<Vec<_>>>()?;
    Dataset::new(sessions)
}

/// Writes each session into `dir/<participant_id>/`.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    for s in &dataset.sessions {
        save_session(s, dir.as_ref().join(&s.participant_id))?;
    }
    Ok(())
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingFile(p))
    }
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(path, e)))))
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        file: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| malformed(path, line, format!("not a number: {field:?}")))
}

fn read_eeg(path: &Path, channels: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut it = lines(path)?;
    let header = match it.next() {
        Some((_, l)) => l?,
        None => return Err(malformed(path, 1, "empty file")),
    };
    let labels: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if labels.len() != channels.len() {
        return Err(malformed(
            path,
            1,
            format!("header has {} columns, manifest lists {} channels", labels.len(), channels.len()),
        ));
    }
    // column j of the file feeds manifest channel order[j]
    let order = labels
        .iter()
        .map(|l| {
            channels
                .iter()
                .position(|c| c == l.trim())
                .ok_or_else(|| malformed(path, 1, format!("column {l:?} not in manifest")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = vec![Vec::new(); channels.len()];
    for (line_no, line) in it {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for (j, field) in line.split(',').enumerate() {
            if j >= order.len() {
                return Err(malformed(path, line_no, "too many fields"));
            }
            samples[order[j]].push(parse_f64(path, line_no, field)?);
            n += 1;
        }
        if n != order.len() {
            return Err(malformed(
                path,
                line_no,
                format!("expected {} fields, found {n}", order.len()),
            ));
        }
    }
    Ok(samples)
}

fn read_events(path: &Path) -> Result<Vec<TrialEvent>> {
    let mut it = lines(path)?;
    it.next();
    let mut events = Vec::new();
    for (line_no, line) in it {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(malformed(path, line_no, format!("expected 5 fields, found {}", f.len())));
        }
        let trial_id = f[0]
            .trim()
            .parse::<u32>()
            .map_err(|_| malformed(path, line_no, format!("bad trial id {:?}", f[0])))?;
        let condition = f[1]
            .parse::<Condition>()
            .map_err(|e| malformed(path, line_no, e))?;
        let field_size = f[4]
            .parse::<FieldSize>()
            .map_err(|e| malformed(path, line_no, e))?;
        events.push(TrialEvent {
            trial_id,
            condition,
            memory_onset: parse_f64(path, line_no, f[2])?,
            memory_duration: parse_f64(path, line_no, f[3])?,
            field_size,
        });
    }
    Ok(events)
}

fn read_gaze(path: &Path) -> Result<GazeTrack> {
    let mut it = lines(path)?;
    it.next();
    let (mut t, mut x, mut y, mut c) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line_no, line) in it {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(malformed(path, line_no, format!("expected 4 fields, found {}", f.len())));
        }
        t.push(parse_f64(path, line_no, f[0])?);
        x.push(parse_f64(path, line_no, f[1])?);
        y.push(parse_f64(path, line_no, f[2])?);
        c.push(parse_f64(path, line_no, f[3])?);
    }
    GazeTrack::new(t, x, y, c)
}
