use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default transition bandwidth in Hz.
pub const DEFAULT_TRANSITION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Bandpass,
    Bandstop,
}

/// Linear-phase FIR taps with the design parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterKernel {
    coefficients: Vec<f64>,
    fs: f64,
    kind: FilterKind,
    lo: f64,
    hi: f64,
}

impl FilterKernel {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn band(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// |H(f)| evaluated directly from the taps.
    pub fn magnitude_at(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f / self.fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, h) in self.coefficients.iter().enumerate() {
            re += h * (w * k as f64).cos();
            im -= h * (w * k as f64).sin();
        }
        re.hypot(im)
    }
}

/// Smallest odd tap count meeting the Hamming estimate `3.3 * fs / transition`.
pub fn tap_count(fs: f64, transition: f64) -> usize {
    let n = (3.3 * fs / transition - 1e-9).ceil().max(1.0) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Hamming-windowed sinc design with cutoffs at `lo` and `hi`.
pub fn design_fir(kind: FilterKind, lo: f64, hi: f64, fs: f64, transition: f64) -> Result<FilterKernel> {
    let nyquist = fs / 2.0;
    let valid = fs > 0.0
        && lo.is_finite()
        && hi.is_finite()
        && 0.0 < lo
        && lo < hi
        && hi < nyquist
        && transition > 0.0
        && transition.is_finite();
    if !valid {
        return Err(Error::InvalidBand { lo, hi, fs });
    }
    let n = tap_count(fs, transition);
    let m = (n / 2) as isize;
    let (f1, f2) = (lo / fs, hi / fs);

    let mut coefficients = vec![0.0; n];
    // fill the centre and left half, then mirror so symmetry is exact
    for k in 0..=m {
        let t = (k - m) as f64;
        let ideal_bp = if k == m {
            2.0 * (f2 - f1)
        } else {
            ((2.0 * PI * f2 * t).sin() - (2.0 * PI * f1 * t).sin()) / (PI * t)
        };
        let ideal = match kind {
            FilterKind::Bandpass => ideal_bp,
            FilterKind::Bandstop if k == m => 1.0 - ideal_bp,
            FilterKind::Bandstop => -ideal_bp,
        };
        let window = if n == 1 {
            1.0
        } else {
            0.54 - 0.46 * (2.0 * PI * k as f64 / (n - 1) as f64).cos()
        };
        coefficients[k as usize] = ideal * window;
    }
    for k in 0..m as usize {
        coefficients[n - 1 - k] = coefficients[k];
    }
    Ok(FilterKernel {
        coefficients,
        fs,
        kind,
        lo,
        hi,
    })
}
