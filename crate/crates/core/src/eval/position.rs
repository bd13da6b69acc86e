use serde::{Deserialize, Serialize};

use super::stats::{mean_std, welch_ttest, TTest};
use super::WindowPrediction;
use crate::epoching::WINDOWS_PER_TRIAL;
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionStat {
    pub position: usize,
    /// Mean over runs of the per-run accuracy at this position.
    pub accuracy: f64,
    pub std_error: f64,
    pub n_runs: usize,
    pub run_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionPair {
    pub a: usize,
    pub b: usize,
    pub test: TTest,
    pub significant_05: bool,
    pub significant_001: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub positions: Vec<PositionStat>,
    pub pairs: Vec<PositionPair>,
}

impl PositionReport {
    /// Number of other positions `pos` differs from at `alpha = 0.05`.
    pub fn flagged_against(&self, pos: usize) -> usize {
        self.pairs
            .iter()
            .filter(|p| (p.a == pos || p.b == pos) && p.significant_05)
            .count()
    }
}

/// Per-position accuracy over runs, with Welch tests between every pair of
/// positions on the per-run accuracies.
///
/// When both positions have zero spread the test degenerates; equal means
/// then give p = 1 and different means p = 0.
pub fn position_accuracy_analysis(runs: &[Vec<WindowPrediction>]) -> PositionReport {
    let mut per_pos: Vec<Vec<f64>> = vec![Vec::new(); WINDOWS_PER_TRIAL];
    for run in runs {
        let mut hits = [0usize; WINDOWS_PER_TRIAL];
        let mut counts = [0usize; WINDOWS_PER_TRIAL];
        for p in run {
            if p.position_index < WINDOWS_PER_TRIAL {
                counts[p.position_index] += 1;
                hits[p.position_index] += usize::from(p.correct());
            }
        }
        for k in 0..WINDOWS_PER_TRIAL {
            if counts[k] > 0 {
                per_pos[k].push(hits[k] as f64 / counts[k] as f64);
            }
        }
    }
    let positions: Vec<PositionStat> = per_pos
        .iter()
        .enumerate()
        .map(|(k, acc)| {
            let (m, s) = mean_std(acc);
            PositionStat {
                position: k,
                accuracy: if acc.is_empty() { 0.0 } else { m },
                std_error: if acc.len() > 1 { s / (acc.len() as f64).sqrt() } else { 0.0 },
                n_runs: acc.len(),
                run_accuracies: acc.clone(),
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for a in 0..WINDOWS_PER_TRIAL {
        for b in a + 1..WINDOWS_PER_TRIAL {
            let (xa, xb) = (&per_pos[a], &per_pos[b]);
            if xa.is_empty() || xb.is_empty() {
                continue;
            }
            let test = match welch_ttest(xa, xb) {
                Ok(t) => t,
                Err(Error::DegenerateVariance(_)) => {
                    let diff = positions[a].accuracy - positions[b].accuracy;
                    TTest {
                        t: if diff == 0.0 { 0.0 } else { diff.signum() * f64::MAX },
                        df: (xa.len() + xb.len()).saturating_sub(2) as f64,
                        p: if diff == 0.0 { 1.0 } else { 0.0 },
                    }
                }
                Err(_) => continue,
            };
            pairs.push(PositionPair {
                a,
                b,
                test,
                significant_05: test.p < 0.05,
                significant_001: test.p < 0.001,
            });
        }
    }
    PositionReport { positions, pairs }
}
