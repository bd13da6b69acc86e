use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue floor of the composite covariance. Directions below
/// `COMPOSITE_RIDGE * λ_max` are treated as null space and never whitened.
pub const COMPOSITE_RIDGE: f64 = 1e-8;

/// Spatial filters of one band, strongest class-1 filter first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspFilters {
    /// One filter per row, over channels.
    pub projection: Vec<Vec<f64>>,
    /// Generalised eigenvalues, descending, each in `[0, 1]`.
    pub eigenvalues: Vec<f64>,
}

impl CspFilters {
    pub fn n_filters(&self) -> usize {
        self.projection.len()
    }

    pub fn n_channels(&self) -> usize {
        self.projection.first().map_or(0, Vec::len)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let rows = self.n_filters();
        let cols = self.n_channels();
        DMatrix::from_fn(rows, cols, |r, c| self.projection[r][c])
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solves `C1 w = λ (C1 + C2) w` and keeps `m_pairs` filters from each end
/// of the spectrum.
pub fn fit_csp(c1: &DMatrix<f64>, c2: &DMatrix<f64>, m_pairs: usize) -> Result<CspFilters> {
    let d = c1.nrows();
    for m in [c1, c2] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if m.nrows() != d { m.nrows() } else { m.ncols() },
            });
        }
    }
    if m_pairs == 0 || 2 * m_pairs > d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: 2 * m_pairs,
        });
    }

    let composite = symmetrize(&(c1 + c2));
    let eig = SymmetricEigen::new(composite);
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..d)
        .filter(|&i| lambda_max > 0.0 && eig.eigenvalues[i] > COMPOSITE_RIDGE * lambda_max)
        .collect();
    if kept.len() < 2 * m_pairs {
        return Err(Error::SingularComposite {
            rank: kept.len(),
            required: 2 * m_pairs,
        });
    }

    // whitening P, rank × d, with P (C1 + C2) Pᵀ = I
    let r = kept.len();
    let mut p = DMatrix::zeros(r, d);
    for (row, &k) in kept.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[k].sqrt();
        for c in 0..d {
            p[(row, c)] = eig.eigenvectors[(c, k)] * scale;
        }
    }
    let whitened = symmetrize(&(&p * c1 * p.transpose()));
    let inner = SymmetricEigen::new(whitened);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| inner.eigenvalues[b].total_cmp(&inner.eigenvalues[a]));

    let picks = order[..m_pairs].iter().chain(&order[r - m_pairs..]);
    let mut projection = Vec::with_capacity(2 * m_pairs);
    let mut eigenvalues = Vec::with_capacity(2 * m_pairs);
    for &k in picks {
        let v: DVector<f64> = inner.eigenvectors.column(k).into_owned();
        let mut w: Vec<f64> = (p.transpose() * v).iter().copied().collect();
        let lead = w
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > w[best].abs() { i } else { best });
        if w[lead] < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        projection.push(w);
        eigenvalues.push(inner.eigenvalues[k].clamp(0.0, 1.0));
    }
    Ok(CspFilters {
        projection,
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_case() {
        let c1 = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0]));
        let c2 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 3.0, 2.0 / 3.0]));
        let f = fit_csp(&c1, &c2, 1).unwrap();
        assert!((f.eigenvalues[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.eigenvalues[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(f.projection[0][1].abs() < 1e-12 && f.projection[0][0] > 0.0);
        assert!(f.projection[1][0].abs() < 1e-12 && f.projection[1][1] > 0.0);
    }

    #[test]
    fn equal_classes_give_one_half() {
        let c = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 });
        let f = fit_csp(&c, &c, 2).unwrap();
        for l in f.eigenvalues {
            assert!((l - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_composite() {
        // rank-1 composite cannot provide two filters
        let c = DMatrix::from_fn(3, 3, |_, _| 1.0);
        assert!(matches!(
            fit_csp(&c, &c, 1),
            Err(Error::SingularComposite { rank: 1, required: 2 })
        ));
    }

    #[test]
    fn too_many_pairs() {
        let c = DMatrix::identity(3, 3);
        assert!(matches!(fit_csp(&c, &c, 2), Err(Error::DimensionMismatch { .. })));
        let small = DMatrix::identity(2, 2);
        assert!(matches!(fit_csp(&c, &small, 1), Err(Error::DimensionMismatch { .. })));
    }
}
