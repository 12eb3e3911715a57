//! Small reference matrices shared by tests, examples and the CLI.

use crate::matrix::{normalize, ColMeta, ExplanationMatrix, NormalizeOptions, RowMeta, SparseMatrix};
use crate::scalar::Scalar;

/// The 4x4 two-block matrix: rows 1-2 spread evenly over columns 1-2,
/// rows 3-4 over columns 3-4 with one empty cell.
pub fn worked_example_raw<F: Scalar>() -> SparseMatrix<F> {
    let t = |r: usize, c: usize, v: f64| (r, c, F::of(v));
    SparseMatrix::from_triplets(
        4,
        4,
        [
            t(0, 0, 0.1),
            t(0, 1, 0.1),
            t(1, 0, 0.1),
            t(1, 1, 0.1),
            t(2, 2, 0.2),
            t(2, 3, 0.2),
            t(3, 3, 0.2),
        ],
    )
    .expect("valid fixture")
}

/// Normalized worked example with two classes; the last instance is misclassified.
pub fn worked_example<F: Scalar>() -> ExplanationMatrix<F> {
    let rows = [("r1", "A", "A"), ("r2", "A", "A"), ("r3", "B", "B"), ("r4", "B", "A")]
        .iter()
        .map(|(id, class, pred)| RowMeta {
            id: id.to_string(),
            class: class.to_string(),
            pred: pred.to_string(),
        })
        .collect();
    let cols = (1..=4)
        .map(|j| ColMeta {
            id: format!("c{j}"),
            name: format!("feature {j}"),
            group: None,
        })
        .collect();
    normalize(&worked_example_raw(), NormalizeOptions::default())
        .and_then(|m| m.with_meta(rows, cols))
        .expect("valid fixture")
}
