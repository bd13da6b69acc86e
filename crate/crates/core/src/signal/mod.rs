//! FIR design and zero-phase filtering, spatial re-referencing and
//! interpolation, Welch spectra and band powers.

mod fir;
mod spatial;
mod spectrum;
mod zero_phase;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use fir::{design_fir, tap_count, FilterKernel, FilterKind, DEFAULT_TRANSITION};
pub use spatial::{interpolate_channels, rereference_average, INTERPOLATION_NEIGHBOURS};
pub use spectrum::{
    band_power, default_bands, welch_psd, BandDefinition, PsdEstimate, Welch,
    DEFAULT_OVERLAP, DEFAULT_SEGMENT_SECONDS,
};
pub use zero_phase::{filter_zero_phase, ZeroPhaseFilter};

pub(crate) use zero_phase::fast_fft_len;

use crate::data_model::{ElectrodeMontage, Recording};
use crate::error::Result;

/// Cleaning applied before epoching: band-pass, line-noise notch, bad-channel
/// interpolation, average reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub bandpass: (f64, f64),
    /// Band-stop edges; `None` disables the notch.
    pub notch: Option<(f64, f64)>,
    pub transition: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bandpass: (3.0, 45.0),
            notch: Some((49.0, 51.0)),
            transition: DEFAULT_TRANSITION,
        }
    }
}

/// Designed filters for one [`PreprocessConfig`] and sampling rate.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    bandpass: ZeroPhaseFilter,
    notch: Option<ZeroPhaseFilter>,
}

impl Preprocessor {
    pub fn new(cfg: &PreprocessConfig, fs: f64) -> Result<Self> {
        let (lo, hi) = cfg.bandpass;
        let bandpass = ZeroPhaseFilter::new(design_fir(FilterKind::Bandpass, lo, hi, fs, cfg.transition)?);
        let notch = cfg
            .notch
            .map(|(lo, hi)| design_fir(FilterKind::Bandstop, lo, hi, fs, cfg.transition))
            .transpose()?
            .map(ZeroPhaseFilter::new);
        Ok(Self { bandpass, notch })
    }

    /// Runs the full cleaning chain. Works on whole recordings and on single
    /// windows alike; the online path relies on the two agreeing exactly.
    pub fn apply(
        &self,
        rec: &Recording,
        bad: &BTreeSet<String>,
        montage: &ElectrodeMontage,
    ) -> Result<Recording> {
        let mut out = self.bandpass.apply_recording(rec)?;
        if let Some(notch) = &self.notch {
            out = notch.apply_recording(&out)?;
        }
        let out = interpolate_channels(&out, bad, montage)?;
        Ok(rereference_average(&out))
    }

    pub fn min_len(&self) -> usize {
        self.bandpass
            .min_len()
            .max(self.notch.as_ref().map_or(0, ZeroPhaseFilter::min_len))
    }
}
