use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Welch segment length in seconds.
pub const DEFAULT_SEGMENT_SECONDS: f64 = 1.0;
pub const DEFAULT_OVERLAP: f64 = 0.5;

/// One-sided power spectral density in µV²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl PsdEstimate {
    pub fn resolution(&self) -> f64 {
        if self.freqs.len() < 2 {
            0.0
        } else {
            self.freqs[1] - self.freqs[0]
        }
    }

    /// Rectangle-rule total power, Σ power·Δf.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution()
    }

    pub fn peak_frequency(&self) -> f64 {
        let i = self
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        self.freqs[i]
    }
}

/// A named frequency band `[lo, hi]` in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl BandDefinition {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidBand { lo, hi, fs: f64::NAN });
        }
        Ok(Self {
            name: name.into(),
            lo,
            hi,
        })
    }

    pub fn check_fs(&self, fs: f64) -> Result<()> {
        if self.hi > fs / 2.0 {
            return Err(Error::InvalidBand {
                lo: self.lo,
                hi: self.hi,
                fs,
            });
        }
        Ok(())
    }
}

/// Theta, Alpha, Beta and Gamma, in that order.
pub fn default_bands() -> Vec<BandDefinition> {
    vec![
        BandDefinition::new("Theta", 4.0, 8.0).unwrap(),
        BandDefinition::new("Alpha", 8.0, 14.0).unwrap(),
        BandDefinition::new("Beta", 14.0, 30.0).unwrap(),
        BandDefinition::new("Gamma", 30.0, 45.0).unwrap(),
    ]
}

fn periodic_hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Reusable Welch estimator for a fixed segmentation.
pub struct Welch {
    seg_len: usize,
    step: usize,
    fs: f64,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    scale: f64,
}

impl Welch {
    pub fn new(fs: f64, seg_len: usize, overlap_frac: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap_frac) {
            return Err(Error::InvariantViolation(format!(
                "overlap fraction {overlap_frac} outside [0, 1)"
            )));
        }
        if seg_len == 0 || !(fs > 0.0) {
            return Err(Error::InvariantViolation("empty Welch segment".into()));
        }
        let overlap = (seg_len as f64 * overlap_frac).round() as usize;
        let step = (seg_len - overlap).max(1);
        let window = periodic_hamming(seg_len);
        let norm: f64 = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(seg_len);
        Ok(Self {
            seg_len,
            step,
            fs,
            window,
            fft,
            scale: 1.0 / (fs * norm),
        })
    }

    pub fn estimate(&self, x: &[f64]) -> Result<PsdEstimate> {
        let n = self.seg_len;
        if x.len() < n {
            return Err(Error::TooShort {
                len: x.len(),
                required: n - 1,
            });
        }
        let n_bins = n / 2 + 1;
        let mut power = vec![0.0; n_bins];
        let n_segs = (x.len() - n) / self.step + 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for s in 0..n_segs {
            let seg = &x[s * self.step..s * self.step + n];
            for ((b, v), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(v * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
        }
        let even = n % 2 == 0;
        for (k, p) in power.iter_mut().enumerate() {
            let one_sided = if k == 0 || (even && k == n / 2) { 1.0 } else { 2.0 };
            *p *= one_sided * self.scale / n_segs as f64;
        }
        let freqs = (0..n_bins).map(|k| k as f64 * self.fs / n as f64).collect();
        Ok(PsdEstimate { freqs, power })
    }
}

/// Averaged Hamming-windowed periodograms, one-sided, density-normalized.
pub fn welch_psd(samples: &[f64], fs: f64, seg_len: usize, overlap_frac: f64) -> Result<PsdEstimate> {
    Welch::new(fs, seg_len, overlap_frac)?.estimate(samples)
}

fn interpolate(psd: &PsdEstimate, f: f64) -> f64 {
    let i = psd.freqs.partition_point(|&g| g < f);
    if i < psd.freqs.len() && psd.freqs[i] == f {
        return psd.power[i];
    }
    let (f0, f1) = (psd.freqs[i - 1], psd.freqs[i]);
    let t = (f - f0) / (f1 - f0);
    psd.power[i - 1] * (1.0 - t) + psd.power[i] * t
}

/// Trapezoidal integral of the density over `[band.lo, band.hi]`.
pub fn band_power(psd: &PsdEstimate, band: &BandDefinition) -> Result<f64> {
    let (min, max) = match (psd.freqs.first(), psd.freqs.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return Err(Error::BandOutOfRange {
                lo: band.lo,
                hi: band.hi,
                min: f64::NAN,
                max: f64::NAN,
            })
        }
    };
    if band.lo < min || band.hi > max || band.lo >= band.hi {
        return Err(Error::BandOutOfRange {
            lo: band.lo,
            hi: band.hi,
            min,
            max,
        });
    }
    let mut pts = vec![(band.lo, interpolate(psd, band.lo))];
    pts.extend(
        psd.freqs
            .iter()
            .zip(&psd.power)
            .filter(|(f, _)| **f > band.lo && **f < band.hi)
            .map(|(f, p)| (*f, *p)),
    );
    pts.push((band.hi, interpolate(psd, band.hi)));
    let area = pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum::<f64>();
    Ok(area.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_density_alpha_area() {
        let psd = PsdEstimate {
            freqs: (0..=250).map(f64::from).collect(),
            power: vec![1.0; 251],
        };
        let alpha = &default_bands()[1];
        assert!((band_power(&psd, alpha).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_zero_power() {
        let psd = welch_psd(&vec![0.0; 1500], 500.0, 500, 0.5).unwrap();
        assert!(psd.power.iter().all(|&p| p == 0.0));
        for b in default_bands() {
            assert_eq!(band_power(&psd, &b).unwrap(), 0.0);
        }
    }

    #[test]
    fn segmentation_of_three_seconds() {
        let w = Welch::new(500.0, 500, 0.5).unwrap();
        assert_eq!(w.step, 250);
        assert_eq!((1500 - 500) / w.step + 1, 5);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            welch_psd(&[0.0; 10], 500.0, 500, 0.5),
            Err(Error::TooShort { .. })
        ));
        let psd = welch_psd(&vec![0.0; 60], 60.0, 60, 0.5).unwrap();
        let gamma = &default_bands()[3];
        assert!(matches!(
            band_power(&psd, gamma),
            Err(Error::BandOutOfRange { .. })
        ));
    }
}
