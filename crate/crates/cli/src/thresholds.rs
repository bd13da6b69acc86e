//! Better-than-chance accuracy thresholds for the reference test sizes.

use std::fmt::Write as _;

use attnpipe_core::eval::significance_threshold;
use serde::{Deserialize, Serialize};

use crate::CliResult;

/// Test-set sizes with their published thresholds.
pub const REFERENCE_SIZES: [(usize, f64); 3] = [(60, 0.6225), (45, 0.64), (200, 0.568)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub n: usize,
    pub p: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub reference: f64,
}

pub fn threshold_table(alpha: f64) -> CliResult<Vec<ThresholdRow>> {
    REFERENCE_SIZES
        .iter()
        .map(|&(n, reference)| {
            Ok(ThresholdRow {
                n,
                p: 0.5,
                alpha,
                threshold: significance_threshold(n, 0.5, alpha)?,
                reference,
            })
        })
        .collect()
}

pub fn threshold_csv(rows: &[ThresholdRow]) -> String {
    let mut s = String::from("n,p,alpha,threshold,reference\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6},{:.4}", r.n, r.p, r.alpha, r.threshold, r.reference);
    }
    s
}
