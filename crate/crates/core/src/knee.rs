//! Knee detection on the sorted value distribution and value smoothing.
//!
//! The curve is the descending list of nonzero values plotted against the
//! rank normalized to `[0, 1]`. Both the concave and the convex
//! difference curves are scanned; the knee with the highest value (lowest
//! rank) that clears the sensitivity threshold wins.

use crate::error::Result;
use crate::matrix::ExplanationMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_SENSITIVITY: f64 = 1.0;

const BEND_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueDistribution<F> {
    pub sorted_values: Vec<F>,
    pub knee_index: Option<usize>,
    pub cap_value: Option<F>,
}

impl<F: Scalar> ValueDistribution<F> {
    pub fn from_values(mut values: Vec<F>) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
        Self {
            sorted_values: values,
            knee_index: None,
            cap_value: None,
        }
    }

    pub fn from_matrix(matrix: &ExplanationMatrix<F>) -> Self {
        Self::from_values(matrix.entries().iter().map(|e| e.value).collect())
    }

    /// Runs knee detection and records the result on the distribution.
    pub fn with_knee(mut self, sensitivity: F) -> Self {
        self.knee_index = knee_index(&self.sorted_values, sensitivity);
        self.cap_value = self.knee_index.map(|i| self.sorted_values[i]);
        self
    }
}

/// Returns the value at the knee of the distribution, if there is one.
pub fn find_knee<F: Scalar>(dist: &ValueDistribution<F>, sensitivity: F) -> Option<F> {
    knee_index(&dist.sorted_values, sensitivity).map(|i| dist.sorted_values[i])
}

/// Index of the knee in a non-increasing sequence.
pub fn knee_index<F: Scalar>(values: &[F], sensitivity: F) -> Option<usize> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let hi = values[0];
    let lo = values[n - 1];
    if hi - lo <= F::zero() {
        return None;
    }
    let step = F::one() / F::of_usize(n - 1);
    let chord_gap: Vec<F> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - lo) / (hi - lo) - (F::one() - F::of_usize(i) * step))
        .collect();
    let concave = first_confirmed_max(&chord_gap, sensitivity * step);
    let flipped: Vec<F> = chord_gap.iter().map(|&d| -d).collect();
    let convex = first_confirmed_max(&flipped, sensitivity * step);
    match (concave, convex) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// First local maximum of the difference curve that is followed by a drop
/// below `max - drop` before the next local maximum.
fn first_confirmed_max<F: Scalar>(diff: &[F], drop: F) -> Option<usize> {
    let n = diff.len();
    let eps = F::of(BEND_EPS);
    let mut candidate: Option<(usize, F)> = None;
    for j in 1..n {
        let interior_max = j + 1 < n && diff[j] > diff[j - 1] && diff[j] >= diff[j + 1];
        if interior_max && diff[j] > eps {
            candidate = Some((j, diff[j] - drop));
            continue;
        }
        if let Some((c, threshold)) = candidate {
            if diff[j] < threshold {
                return Some(c);
            }
        }
    }
    None
}

/// Caps every value above the knee at the knee value and renormalizes.
/// Returns the matrix unchanged when no knee is found.
pub fn smooth<F: Scalar>(matrix: &ExplanationMatrix<F>, sensitivity: F) -> Result<ExplanationMatrix<F>> {
    let dist = ValueDistribution::from_matrix(matrix);
    let Some(cap) = find_knee(&dist, sensitivity) else {
        return Ok(matrix.clone());
    };
    if cap >= dist.sorted_values[0] {
        return Ok(matrix.clone());
    }
    let capped = matrix.data().map_values(|e| e.value.min(cap));
    ExplanationMatrix::try_new(capped, matrix.row_meta().to_vec(), matrix.col_meta().to_vec())?.renormalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{default_col_meta, default_row_meta, normalize, NormalizeOptions, SparseMatrix};

    fn knee(values: &[f64]) -> Option<f64> {
        find_knee(&ValueDistribution::from_values(values.to_vec()), 1.0)
    }

    #[test]
    fn straight_line_has_no_knee() {
        assert_eq!(knee(&[5.0, 4.0, 3.0, 2.0, 1.0]), None);
    }

    #[test]
    fn flat_has_no_knee() {
        assert_eq!(knee(&[1.0, 1.0, 1.0]), None);
    }

    #[test]
    fn too_short() {
        assert_eq!(knee(&[3.0, 1.0]), None);
    }

    #[test]
    fn shoulder_then_drop() {
        let d = ValueDistribution::from_values(vec![10.0, 9.0, 8.0, 2.0, 1.0, 0.5]).with_knee(1.0);
        assert_eq!(d.knee_index, Some(2));
        assert_eq!(d.cap_value, Some(8.0));
    }

    #[test]
    fn spike_then_tail() {
        assert_eq!(knee(&[0.5, 0.2, 0.1, 0.1, 0.1]), Some(0.2));
    }

    #[test]
    fn high_sensitivity_suppresses_knee() {
        let d = ValueDistribution::from_values(vec![10.0, 9.0, 8.0, 2.0, 1.0, 0.5]);
        assert_eq!(find_knee(&d, 10.0), None);
    }

    #[test]
    fn smoothing_caps_and_renormalizes() {
        let raw = SparseMatrix::from_triplets(
            1,
            5,
            [(0, 0, 0.5), (0, 1, 0.2), (0, 2, 0.1), (0, 3, 0.1), (0, 4, 0.1)],
        )
        .unwrap();
        let m = ExplanationMatrix::try_new(raw, default_row_meta(1), default_col_meta(5)).unwrap();
        let s: ExplanationMatrix<f64> = smooth(&m, 1.0).unwrap();
        let expected = [0.2 / 0.7, 0.2 / 0.7, 0.1 / 0.7, 0.1 / 0.7, 0.1 / 0.7];
        for (j, want) in expected.iter().enumerate() {
            assert!((s.get(0, j) - want).abs() < 1e-12, "col {j}");
        }
    }

    #[test]
    fn uniform_matrix_is_unchanged() {
        let raw = SparseMatrix::from_triplets(2, 3, (0..3).map(|j| (0, j, 1.0)).chain([(1, 1, 1.0)])).unwrap();
        let m: ExplanationMatrix<f64> = normalize(&raw, NormalizeOptions::default()).unwrap();
        assert_eq!(smooth(&m, 1.0).unwrap(), m);
    }
}
