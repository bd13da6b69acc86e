use std::collections::BTreeSet;

use crate::data_model::{ElectrodeMontage, Recording};
use crate::error::{Error, Result};

/// Neighbours used to rebuild a bad channel.
pub const INTERPOLATION_NEIGHBOURS: usize = 4;

/// Subtracts the across-channel mean from every time sample.
pub fn rereference_average(rec: &Recording) -> Recording {
    let rows = rec.samples();
    let n_ch = rows.len();
    if n_ch == 0 {
        return rec.clone();
    }
    let n = rec.n_samples();
    let mut mean = vec![0.0; n];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / n_ch as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let out = rows
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    Recording::from_parts_unchecked(out, rec.fs(), rec.t0())
}

/// Replaces each bad channel by the inverse-squared-distance weighted mean
/// of its four nearest good channels on the sphere. Good rows are copied
/// untouched.
pub fn interpolate_channels(
    rec: &Recording,
    bad: &BTreeSet<String>,
    montage: &ElectrodeMontage,
) -> Result<Recording> {
    if bad.is_empty() {
        return Ok(rec.clone());
    }
    if rec.n_channels() != montage.len() {
        return Err(Error::DimensionMismatch {
            expected: montage.len(),
            got: rec.n_channels(),
        });
    }
    let bad_idx = bad
        .iter()
        .map(|b| {
            montage
                .index_of(b)
                .ok_or_else(|| Error::InvariantViolation(format!("bad channel {b} not in montage")))
        })
        .collect::<Result<BTreeSet<usize>>>()?;
    let good: Vec<usize> = (0..montage.len()).filter(|i| !bad_idx.contains(i)).collect();
    if good.len() < INTERPOLATION_NEIGHBOURS {
        return Err(Error::TooFewGoodChannels {
            good: good.len(),
            required: INTERPOLATION_NEIGHBOURS,
        });
    }

    let mut out: Vec<Vec<f64>> = rec.samples().to_vec();
    for &b in &bad_idx {
        let weights = idw_weights(montage, b, &good);
        let row = &mut out[b];
        row.iter_mut().for_each(|v| *v = 0.0);
        for &(ch, w) in &weights {
            for (dst, src) in row.iter_mut().zip(rec.channel(ch)) {
                *dst += w * src;
            }
        }
    }
    Ok(Recording::from_parts_unchecked(out, rec.fs(), rec.t0()))
}

/// Normalized weights of the nearest good channels for `target`.
pub(crate) fn idw_weights(montage: &ElectrodeMontage, target: usize, good: &[usize]) -> Vec<(usize, f64)> {
    let mut by_distance: Vec<(usize, f64)> = good
        .iter()
        .map(|&g| (g, montage.angular_distance(target, g)))
        .collect();
    by_distance.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    by_distance.truncate(INTERPOLATION_NEIGHBOURS);
    if let Some(&(g, _)) = by_distance.iter().find(|(_, d)| *d == 0.0) {
        return vec![(g, 1.0)];
    }
    let raw: Vec<(usize, f64)> = by_distance.iter().map(|&(g, d)| (g, 1.0 / (d * d))).collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(g, w)| (g, w / total)).collect()
}
