use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{welch_ttest, TTest};
use crate::data_model::Condition;
use crate::epoching::EpochWindow;
use crate::error::{Error, Result};
use crate::signal::{band_power, BandDefinition, Welch, DEFAULT_OVERLAP, DEFAULT_SEGMENT_SECONDS};

pub const PSD_ALPHA: f64 = 0.001;

/// `Band/Electrode` names, band-major.
pub fn psd_feature_names(channels: &[String], bands: &[BandDefinition]) -> Vec<String> {
    bands
        .iter()
        .flat_map(|b| channels.iter().map(move |c| format!("{}/{c}", b.name)))
        .collect()
}

/// Band powers of every channel from one Welch spectrum each.
pub fn psd_features(eeg: &[Vec<f64>], welch: &Welch, bands: &[BandDefinition]) -> Result<Vec<f64>> {
    let spectra = eeg.iter().map(|ch| welch.estimate(ch)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(bands.len() * eeg.len());
    for b in bands {
        for psd in &spectra {
            out.push(band_power(psd, b)?);
        }
    }
    Ok(out)
}

pub fn default_welch(fs: f64) -> Result<Welch> {
    Welch::new(fs, (DEFAULT_SEGMENT_SECONDS * fs).round() as usize, DEFAULT_OVERLAP)
}

/// One row of band powers per window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PsdTable {
    pub feature_names: Vec<String>,
    pub participants: Vec<String>,
    pub conditions: Vec<Condition>,
    pub rows: Vec<Vec<f64>>,
}

impl PsdTable {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            ..Self::default()
        }
    }

    pub fn push(&mut self, participant: &str, condition: Condition, row: Vec<f64>) -> Result<()> {
        if row.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        self.participants.push(participant.to_string());
        self.conditions.push(condition);
        self.rows.push(row);
        Ok(())
    }

    pub fn append(&mut self, other: PsdTable) -> Result<()> {
        if other.feature_names != self.feature_names {
            return Err(Error::NameMismatch("PSD tables use different features".into()));
        }
        self.participants.extend(other.participants);
        self.conditions.extend(other.conditions);
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn psd_table(windows: &[EpochWindow], channels: &[String], bands: &[BandDefinition]) -> Result<PsdTable> {
    let mut table = PsdTable::new(psd_feature_names(channels, bands));
    let Some(first) = windows.first() else {
        return Ok(table);
    };
    let welch = default_welch(first.fs)?;
    for w in windows {
        table.push(&w.participant_id, w.condition, psd_features(&w.eeg, &welch, bands)?)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledTable {
    pub rows: Vec<Vec<f64>>,
    /// Per participant, per feature `(min, max)` before scaling.
    pub bounds: BTreeMap<String, Vec<(f64, f64)>>,
}

/// Min-max scales every feature within each participant's rows. Constant
/// features become 0.5.
pub fn minmax_scale_per_participant(participants: &[String], rows: &[Vec<f64>]) -> ScaledTable {
    let d = rows.first().map_or(0, Vec::len);
    let mut bounds: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (p, r) in participants.iter().zip(rows) {
        let b = bounds
            .entry(p.clone())
            .or_insert_with(|| vec![(f64::INFINITY, f64::NEG_INFINITY); d]);
        for (slot, &v) in b.iter_mut().zip(r) {
            slot.0 = slot.0.min(v);
            slot.1 = slot.1.max(v);
        }
    }
    let rows = participants
        .iter()
        .zip(rows)
        .map(|(p, r)| {
            r.iter()
                .zip(&bounds[p])
                .map(|(&v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
                .collect()
        })
        .collect();
    ScaledTable { rows, bounds }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiffRow {
    pub feature: String,
    pub band: String,
    pub electrode: String,
    pub mean_real: f64,
    pub mean_virtual: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiffReport {
    pub alpha: f64,
    pub n_real: usize,
    pub n_virtual: usize,
    pub rows: Vec<FeatureDiffRow>,
    pub bounds: BTreeMap<String, Vec<(f64, f64)>>,
}

impl FeatureDiffReport {
    pub fn selected(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.selected).map(|r| r.feature.as_str()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,band,electrode,mean_real,mean_virtual,t,df,p,selected\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6},{:.3},{:.6e},{}",
                r.feature, r.band, r.electrode, r.mean_real, r.mean_virtual, r.t, r.df, r.p, r.selected
            );
        }
        s
    }
}

/// Scales per participant, then compares Real against Virtual per feature
/// with Welch's t test. A feature is selected when `p < alpha`.
pub fn psd_group_analysis_table(table: &PsdTable, alpha: f64) -> Result<FeatureDiffReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let scaled = minmax_scale_per_participant(&table.participants, &table.rows);
    let mut rows = Vec::with_capacity(table.feature_names.len());
    let n_real = table.conditions.iter().filter(|&&c| c == Condition::Real).count();
    let n_virtual = table.len() - n_real;
    if n_real < 2 || n_virtual < 2 {
        return Err(Error::TooFewWindows(format!(
            "{n_real} Real and {n_virtual} Virtual windows, need 2 of each"
        )));
    }
    for (j, name) in table.feature_names.iter().enumerate() {
        let mut real = Vec::with_capacity(n_real);
        let mut virt = Vec::with_capacity(n_virtual);
        for (r, c) in scaled.rows.iter().zip(&table.conditions) {
            match c {
                Condition::Real => real.push(r[j]),
                Condition::Virtual => virt.push(r[j]),
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let test = match welch_ttest(&virt, &real) {
            Ok(t) => t,
            // both groups constant: no evidence of a difference
            Err(Error::DegenerateVariance(_)) => TTest {
                t: 0.0,
                df: (n_real + n_virtual - 2) as f64,
                p: 1.0,
            },
            Err(e) => return Err(e),
        };
        let (band, electrode) = name.split_once('/').unwrap_or((name.as_str(), ""));
        rows.push(FeatureDiffRow {
            feature: name.clone(),
            band: band.to_string(),
            electrode: electrode.to_string(),
            mean_real: mean(&real),
            mean_virtual: mean(&virt),
            t: test.t,
            df: test.df,
            p: test.p,
            selected: test.p < alpha,
        });
    }
    Ok(FeatureDiffReport {
        alpha,
        n_real,
        n_virtual,
        rows,
        bounds: scaled.bounds,
    })
}

/// Band powers of every window, per-participant scaling and the
/// Real-vs-Virtual test per (band, electrode).
pub fn psd_group_analysis(
    windows: &[EpochWindow],
    channels: &[String],
    bands: &[BandDefinition],
    alpha: f64,
) -> Result<FeatureDiffReport> {
    psd_group_analysis_table(&psd_table(windows, channels, bands)?, alpha)
}
