//! Filter-bank CSP: per-band spatial filters fitted on class covariances,
//! read out as log-variances.

mod csp;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use csp::{fit_csp, CspFilters, COMPOSITE_RIDGE};

use crate::data_model::Condition;
use crate::epoching::EpochWindow;
use crate::error::{Error, Result};
use crate::signal::{default_bands, design_fir, BandDefinition, FilterKind, ZeroPhaseFilter, DEFAULT_TRANSITION};

/// Added to every variance before the logarithm.
pub const LOG_VARIANCE_FLOOR: f64 = 1e-12;
pub const DEFAULT_M_PAIRS: usize = 3;

/// Named feature values, the input to every classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "feature {} is not finite",
                names[i]
            )));
        }
        Ok(Self { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Unit-trace scatter matrix `X Xᵀ / tr(X Xᵀ)` of a channels × samples epoch.
pub fn epoch_covariance(eeg: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n_ch = eeg.len();
    let n = eeg.first().map_or(0, Vec::len);
    if n <= n_ch {
        return Err(Error::TooShort { len: n, required: n_ch });
    }
    BandScatter::from_channels(eeg)?.normalized()
}

/// First and second moments of one band-passed epoch. Enough to rebuild
/// both the CSP training covariance and the variance of any projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BandScatter {
    pub n_samples: usize,
    pub mean: DVector<f64>,
    /// `X Xᵀ / N`.
    pub second_moment: DMatrix<f64>,
}

impl BandScatter {
    pub fn from_channels(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        if n == 0 {
            return Err(Error::DegenerateEpoch);
        }
        let x = DMatrix::from_fn(d, n, |r, c| rows[r][c]);
        let inv = 1.0 / n as f64;
        let mean = DVector::from_iterator(d, rows.iter().map(|r| r.iter().sum::<f64>() * inv));
        let second_moment = (&x * x.transpose()) * inv;
        Ok(Self {
            n_samples: n,
            mean,
            second_moment,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scatter scaled to unit trace.
    pub fn normalized(&self) -> Result<DMatrix<f64>> {
        let tr = self.second_moment.trace();
        if !(tr > 0.0) {
            return Err(Error::DegenerateEpoch);
        }
        Ok(&self.second_moment / tr)
    }

    /// Population variance of `wᵀx`.
    pub fn projected_variance(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        let m = w.dot(&self.mean);
        (w.dot(&(&self.second_moment * &w)) - m * m).max(0.0)
    }
}

/// Band-pass filters for every band of the bank at one sampling rate.
#[derive(Debug, Clone)]
pub struct FilterBank {
    filters: Vec<ZeroPhaseFilter>,
}

impl FilterBank {
    pub fn new(bands: &[BandDefinition], fs: f64, transition: f64) -> Result<Self> {
        let filters = bands
            .iter()
            .map(|b| {
                b.check_fs(fs)?;
                design_fir(FilterKind::Bandpass, b.lo, b.hi, fs, transition).map(ZeroPhaseFilter::new)
            })
            .collect::<Result<_>>()?;
        Ok(Self { filters })
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Band-passes a channels × samples epoch through every filter.
    pub fn filter(&self, eeg: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
        let rows: Vec<&[f64]> = eeg.iter().map(Vec::as_slice).collect();
        self.filters.iter().map(|f| f.apply_channels(&rows)).collect()
    }

    pub fn scatters(&self, eeg: &[Vec<f64>]) -> Result<Vec<BandScatter>> {
        self.filter(eeg)?
            .iter()
            .map(|band| BandScatter::from_channels(band))
            .collect()
    }
}

/// Filter-bank settings shared by fitting and feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbcspConfig {
    pub bands: Vec<BandDefinition>,
    pub m_pairs: usize,
    /// Transition width of the band filters, Hz.
    pub transition: f64,
}

impl Default for FbcspConfig {
    fn default() -> Self {
        Self {
            bands: default_bands(),
            m_pairs: DEFAULT_M_PAIRS,
            transition: DEFAULT_TRANSITION,
        }
    }
}

/// Fitted CSP filters for every band of the bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FbcspModel {
    pub fs: f64,
    pub transition: f64,
    pub bands: Vec<BandDefinition>,
    pub per_band: Vec<CspFilters>,
    pub m_pairs: usize,
    pub feature_names: Vec<String>,
    #[serde(skip)]
    bank: OnceLock<FilterBank>,
}

impl PartialEq for FbcspModel {
    fn eq(&self, other: &Self) -> bool {
        self.fs == other.fs
            && self.transition == other.transition
            && self.bands == other.bands
            && self.per_band == other.per_band
            && self.m_pairs == other.m_pairs
            && self.feature_names == other.feature_names
    }
}

impl FbcspModel {
    pub fn from_parts(
        fs: f64,
        transition: f64,
        bands: Vec<BandDefinition>,
        per_band: Vec<CspFilters>,
        m_pairs: usize,
    ) -> Result<Self> {
        if bands.len() != per_band.len() {
            return Err(Error::DimensionMismatch {
                expected: bands.len(),
                got: per_band.len(),
            });
        }
        let feature_names = bands
            .iter()
            .zip(&per_band)
            .flat_map(|(b, f)| (0..f.n_filters()).map(move |k| format!("{}/csp{k}", b.name)))
            .collect::<Vec<_>>();
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvariantViolation(format!("duplicate feature name {dup}")));
        }
        Ok(Self {
            fs,
            transition,
            bands,
            per_band,
            m_pairs,
            feature_names,
            bank: OnceLock::new(),
        })
    }

    pub fn n_channels(&self) -> usize {
        self.per_band.first().map_or(0, CspFilters::n_channels)
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn filter_bank(&self) -> Result<&FilterBank> {
        if let Some(b) = self.bank.get() {
            return Ok(b);
        }
        let bank = FilterBank::new(&self.bands, self.fs, self.transition)?;
        Ok(self.bank.get_or_init(|| bank))
    }

    /// Log-variance features from precomputed band scatters.
    pub fn features_from_scatters(&self, scatters: &[BandScatter]) -> Result<FeatureVector> {
        if scatters.len() != self.per_band.len() {
            return Err(Error::DimensionMismatch {
                expected: self.per_band.len(),
                got: scatters.len(),
            });
        }
        let mut values = Vec::with_capacity(self.dim());
        for (s, filters) in scatters.iter().zip(&self.per_band) {
            if s.dim() != filters.n_channels() {
                return Err(Error::DimensionMismatch {
                    expected: filters.n_channels(),
                    got: s.dim(),
                });
            }
            for w in &filters.projection {
                values.push((s.projected_variance(w) + LOG_VARIANCE_FLOOR).ln());
            }
        }
        Ok(FeatureVector {
            names: self.feature_names.clone(),
            values,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FbcspModel = serde_json::from_str(s)?;
        Self::from_parts(m.fs, m.transition, m.bands, m.per_band, m.m_pairs)
    }
}

/// Fits one CSP per band from per-window band scatters.
pub fn fit_fbcsp_from_scatters<'a, I>(cfg: &FbcspConfig, fs: f64, train: I) -> Result<FbcspModel>
where
    I: IntoIterator<Item = (&'a [BandScatter], Condition)>,
{
    let n_bands = cfg.bands.len();
    let mut sums: [Vec<Option<DMatrix<f64>>>; 2] = [vec![None; n_bands], vec![None; n_bands]];
    let mut counts = [0usize; 2];
    for (scatters, cond) in train {
        if scatters.len() != n_bands {
            return Err(Error::DimensionMismatch {
                expected: n_bands,
                got: scatters.len(),
            });
        }
        let k = cond as usize;
        counts[k] += 1;
        for (slot, s) in sums[k].iter_mut().zip(scatters) {
            let c = s.normalized()?;
            match slot {
                Some(acc) => {
                    if acc.nrows() != c.nrows() {
                        return Err(Error::DimensionMismatch {
                            expected: acc.nrows(),
                            got: c.nrows(),
                        });
                    }
                    *acc += c;
                }
                None => *slot = Some(c),
            }
        }
    }
    if counts.contains(&0) {
        return Err(Error::SingleClassTraining);
    }
    let per_band = (0..n_bands)
        .map(|b| {
            let c1 = sums[0][b].as_ref().expect("class sums present") / counts[0] as f64;
            let c2 = sums[1][b].as_ref().expect("class sums present") / counts[1] as f64;
            fit_csp(&c1, &c2, cfg.m_pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    FbcspModel::from_parts(fs, cfg.transition, cfg.bands.clone(), per_band, cfg.m_pairs)
}

/// Band-passes every training window and fits a CSP per band.
pub fn fit_fbcsp(train: &[EpochWindow], bands: &[BandDefinition], m_pairs: usize) -> Result<FbcspModel> {
    let cfg = FbcspConfig {
        bands: bands.to_vec(),
        m_pairs,
        transition: DEFAULT_TRANSITION,
    };
    fit_fbcsp_with(train, &cfg)
}

pub fn fit_fbcsp_with(train: &[EpochWindow], cfg: &FbcspConfig) -> Result<FbcspModel> {
    let Some(first) = train.first() else {
        return Err(Error::SingleClassTraining);
    };
    let bank = FilterBank::new(&cfg.bands, first.fs, cfg.transition)?;
    let scatters = train
        .iter()
        .map(|w| bank.scatters(&w.eeg))
        .collect::<Result<Vec<_>>>()?;
    let model = fit_fbcsp_from_scatters(
        cfg,
        first.fs,
        scatters.iter().zip(train).map(|(s, w)| (s.as_slice(), w.condition)),
    )?;
    let _ = model.bank.set(bank);
    Ok(model)
}

/// Log-variance of every CSP component of every band.
pub fn fbcsp_features(model: &FbcspModel, window: &EpochWindow) -> Result<FeatureVector> {
    if window.n_channels() != model.n_channels() {
        return Err(Error::DimensionMismatch {
            expected: model.n_channels(),
            got: window.n_channels(),
        });
    }
    let scatters = model.filter_bank()?.scatters(&window.eeg)?;
    model.features_from_scatters(&scatters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncorrelated_unit_channels() {
        let a: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b: Vec<f64> = (0..1000).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c = epoch_covariance(&[a, b]).unwrap();
        assert!((c[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((c[(1, 1)] - 0.5).abs() < 1e-12);
        assert!(c[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn correlated_pair_is_rank_one() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = epoch_covariance(&[a.clone(), a]).unwrap();
        assert!((c[(0, 1)] - c[(0, 0)]).abs() < 1e-15);
        assert!((c.trace() - 1.0).abs() < 1e-12);
        assert!(c.determinant().abs() < 1e-15);
    }

    #[test]
    fn zero_epoch_is_degenerate() {
        assert!(matches!(
            epoch_covariance(&[vec![0.0; 10], vec![0.0; 10]]),
            Err(Error::DegenerateEpoch)
        ));
    }

    #[test]
    fn feature_names_follow_bands() {
        let f = CspFilters {
            projection: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            eigenvalues: vec![0.6, 0.4],
        };
        let m = FbcspModel::from_parts(
            500.0,
            2.0,
            default_bands(),
            vec![f.clone(), f.clone(), f.clone(), f],
            1,
        )
        .unwrap();
        assert_eq!(m.dim(), 8);
        assert_eq!(m.feature_names[2], "Alpha/csp0");
        let back = FbcspModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
