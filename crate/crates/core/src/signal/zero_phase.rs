use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::fir::FilterKernel;
use crate::data_model::Recording;
use crate::error::{Error, Result};

struct Plan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_spectrum: Vec<Complex64>,
}

/// Forward-backward FIR application, realised as one FFT convolution with
/// the kernel's autocorrelation.
///
/// Each edge is extended by reflection over one tap-count of samples. FFT
/// plans are cached per signal length, so reusing one filter over many
/// equal-length windows is cheap.
pub struct ZeroPhaseFilter {
    kernel: FilterKernel,
    autocorr: Vec<f64>,
    plans: Mutex<HashMap<usize, Arc<Plan>>>,
}

impl Clone for ZeroPhaseFilter {
    fn clone(&self) -> Self {
        Self::new(self.kernel.clone())
    }
}

impl std::fmt::Debug for ZeroPhaseFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZeroPhaseFilter")
            .field("kernel", &self.kernel)
            .finish_non_exhaustive()
    }
}

impl ZeroPhaseFilter {
    pub fn new(kernel: FilterKernel) -> Self {
        let h = kernel.coefficients();
        let n = h.len();
        // h is symmetric, so h * reverse(h) == h * h
        let mut autocorr = vec![0.0; 2 * n - 1];
        for (i, a) in h.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                autocorr[i + j] += a * b;
            }
        }
        Self {
            kernel,
            autocorr,
            plans: Mutex::new(HashMap::new()),
        }
    }

    pub fn kernel(&self) -> &FilterKernel {
        &self.kernel
    }

    fn pad(&self) -> usize {
        self.kernel.len()
    }

    /// Shortest input the reflection padding can handle.
    pub fn min_len(&self) -> usize {
        self.pad() + 1
    }

    fn plan(&self, len: usize) -> Arc<Plan> {
        let mut plans = self.plans.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(p) = plans.get(&len) {
            return Arc::clone(p);
        }
        let padded = len + 2 * self.pad();
        let size = fast_fft_len(padded + self.autocorr.len() - 1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut kernel_spectrum: Vec<Complex64> = self
            .autocorr
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(size)
            .collect();
        forward.process(&mut kernel_spectrum);
        let scale = 1.0 / size as f64;
        for v in &mut kernel_spectrum {
            *v *= scale;
        }
        let plan = Arc::new(Plan {
            forward,
            inverse,
            kernel_spectrum,
        });
        plans.insert(len, Arc::clone(&plan));
        plan
    }

    /// Filters equal-length channels; two real channels share one complex FFT.
    pub fn apply_channels(&self, channels: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let Some(first) = channels.first() else {
            return Ok(Vec::new());
        };
        let len = first.len();
        if len < self.min_len() {
            return Err(Error::TooShort {
                len,
                required: self.pad(),
            });
        }
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: bad.len(),
            });
        }
        let plan = self.plan(len);
        let size = plan.kernel_spectrum.len();
        let pad = self.pad();
        let offset = pad + (self.kernel.len() - 1);
        let mut out = Vec::with_capacity(channels.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); plan.forward.get_inplace_scratch_len().max(plan.inverse.get_inplace_scratch_len())];

        for pair in channels.chunks(2) {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            let a = pair[0];
            let b = pair.get(1).copied();
            for i in 0..len + 2 * pad {
                let src = reflect_index(i as isize - pad as isize, len);
                buf[i] = Complex64::new(a[src], b.map_or(0.0, |b| b[src]));
            }
            plan.forward.process_with_scratch(&mut buf, &mut scratch);
            for (v, k) in buf.iter_mut().zip(&plan.kernel_spectrum) {
                *v *= k;
            }
            plan.inverse.process_with_scratch(&mut buf, &mut scratch);
            out.push(buf[offset..offset + len].iter().map(|v| v.re).collect());
            if b.is_some() {
                out.push(buf[offset..offset + len].iter().map(|v| v.im).collect());
            }
        }
        Ok(out)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_channels(&[x])?.pop().unwrap_or_default())
    }

    pub fn apply_recording(&self, rec: &Recording) -> Result<Recording> {
        if (rec.fs() - self.kernel.fs()).abs() > 1e-9 {
            return Err(Error::InvariantViolation(format!(
                "kernel designed for {} Hz applied to {} Hz data",
                self.kernel.fs(),
                rec.fs()
            )));
        }
        let rows: Vec<&[f64]> = rec.samples().iter().map(Vec::as_slice).collect();
        let filtered = self.apply_channels(&rows)?;
        Ok(Recording::from_parts_unchecked(filtered, rec.fs(), rec.t0()))
    }
}

/// Zero-phase application of `kernel` to every channel.
pub fn filter_zero_phase(kernel: &FilterKernel, rec: &Recording) -> Result<Recording> {
    ZeroPhaseFilter::new(kernel.clone()).apply_recording(rec)
}

/// Mirror about the edge samples without repeating them.
fn reflect_index(i: isize, len: usize) -> usize {
    let last = len as isize - 1;
    let j = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    j.clamp(0, last) as usize
}

/// Smallest length >= n whose only prime factors are 2, 3, 5 and 7.
pub(crate) fn fast_fft_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{design_fir, FilterKind};

    fn direct_filtfilt(h: &[f64], x: &[f64]) -> Vec<f64> {
        let pad = h.len();
        let len = x.len();
        let padded: Vec<f64> = (0..len + 2 * pad)
            .map(|i| x[reflect_index(i as isize - pad as isize, len)])
            .collect();
        let conv = |s: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; s.len()];
            for n in 0..s.len() {
                for (k, hk) in h.iter().enumerate() {
                    if n >= k {
                        y[n] += hk * s[n - k];
                    }
                }
            }
            y
        };
        let mut y = conv(&padded);
        y.reverse();
        let mut z = conv(&y);
        z.reverse();
        z[pad..pad + len].to_vec()
    }

    #[test]
    fn fft_path_matches_direct_forward_backward() {
        let k = design_fir(FilterKind::Bandpass, 8.0, 30.0, 200.0, 10.0).unwrap();
        let x: Vec<f64> = (0..400).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let fast = ZeroPhaseFilter::new(k.clone()).apply(&x).unwrap();
        let slow = direct_filtfilt(k.coefficients(), &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn paired_channels_match_single_channel() {
        let k = design_fir(FilterKind::Bandpass, 3.0, 45.0, 500.0, 2.0).unwrap();
        let f = ZeroPhaseFilter::new(k);
        let a: Vec<f64> = (0..1500).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..1500).map(|i| (i as f64 * 0.05).cos()).collect();
        let both = f.apply_channels(&[&a, &b]).unwrap();
        let only_b = f.apply(&b).unwrap();
        for (x, y) in both[1].iter().zip(&only_b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_input_is_rejected() {
        let k = design_fir(FilterKind::Bandpass, 3.0, 45.0, 500.0, 2.0).unwrap();
        let x = vec![0.0; 825];
        assert!(matches!(filter_zero_phase(&k, &Recording::new(vec![x], 500.0, 0.0).unwrap()), Err(Error::TooShort { .. })));
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_fft_len(4797), 4800);
        assert_eq!(fast_fft_len(11), 12);
        assert_eq!(fast_fft_len(1024), 1024);
    }
}
