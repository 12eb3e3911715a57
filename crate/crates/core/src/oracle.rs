//! Exhaustive search for the cost-minimizing clustering of tiny matrices.
//!
//! Used as a verification oracle for the merge engine. It evaluates the
//! marginalized objective with its own dense arithmetic so that it shares
//! no code with [`crate::cost`] or [`crate::stats`].

use crate::cost::Clustering;
use crate::error::{Error, Result};
use crate::matrix::ExplanationMatrix;
use crate::scalar::Scalar;

pub const MAX_SIDE: usize = 7;

/// All set partitions of `0..n` as restricted growth strings, in
/// lexicographic order.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for label in 0..=next {
            prefix.push(label);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::with_capacity(n), n, &mut out);
    out
}

/// Dense evaluation of `β_R·|R̂| + β_C·|Ĉ| + D` for label vectors in
/// restricted-growth form.
pub fn dense_total_cost(p: &[Vec<f64>], rows: &[usize], cols: &[usize], beta_rows: f64, beta_cols: f64) -> f64 {
    let nr = rows.iter().max().map_or(0, |m| m + 1);
    let nc = cols.iter().max().map_or(0, |m| m + 1);
    let mut block = vec![vec![0.0; nc]; nr];
    let mut pr = vec![0.0; p.len()];
    let mut pc = vec![0.0; cols.len()];
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            block[rows[i]][cols[j]] += v;
            pr[i] += v;
            pc[j] += v;
        }
    }
    let mut rmass = vec![0.0; nr];
    let mut cmass = vec![0.0; nc];
    for (i, &a) in rows.iter().enumerate() {
        rmass[a] += pr[i];
    }
    for (j, &b) in cols.iter().enumerate() {
        cmass[b] += pc[j];
    }
    let mut rloss = vec![0.0; nr];
    let mut closs = vec![0.0; nc];
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let (a, b) = (rows[i], cols[j]);
            let q = block[a][b] * pr[i] / rmass[a] * pc[j] / cmass[b];
            rloss[a] += (v / rmass[a]) * ((v / rmass[a]) / (q / rmass[a])).log2();
            closs[b] += (v / cmass[b]) * ((v / cmass[b]) / (q / cmass[b])).log2();
        }
    }
    beta_rows * nr as f64 + beta_cols * nc as f64 + rloss.iter().sum::<f64>() + closs.iter().sum::<f64>()
}

/// Enumerates every pair of row and column partitions and returns the one
/// with minimal total cost, together with that cost. Ties within `1e-12`
/// go to the lexicographically smallest label vectors.
pub fn brute_force_optimal<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    beta_rows: f64,
    beta_cols: f64,
) -> Result<(Clustering, f64)> {
    let (m, n) = (matrix.n_rows(), matrix.n_cols());
    if m > MAX_SIDE || n > MAX_SIDE {
        return Err(Error::TooLarge { rows: m, cols: n });
    }
    if beta_rows < 0.0 || beta_cols < 0.0 {
        return Err(Error::Config("cluster penalties must be nonnegative".into()));
    }
    let p: Vec<Vec<f64>> = matrix
        .data()
        .to_dense()
        .into_iter()
        .map(|r| r.into_iter().map(Scalar::as_f64).collect())
        .collect();
    let row_parts = set_partitions(m);
    let col_parts = set_partitions(n);
    let mut best: Option<(f64, usize, usize)> = None;
    for (ri, rows) in row_parts.iter().enumerate() {
        for (ci, cols) in col_parts.iter().enumerate() {
            let t = dense_total_cost(&p, rows, cols, beta_rows, beta_cols);
            if best.is_none_or(|(bt, _, _)| t < bt - 1e-12) {
                best = Some((t, ri, ci));
            }
        }
    }
    let (t, ri, ci) = best.expect("at least one partition");
    Ok((Clustering::from_labels(&row_parts[ri], &col_parts[ci]), t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_example;
    use crate::matrix::{normalize, NormalizeOptions, SparseMatrix};

    #[test]
    fn bell_numbers() {
        let bell: Vec<usize> = (0..=7).map(|n| set_partitions(n).len()).collect();
        assert_eq!(bell, vec![1, 1, 2, 5, 15, 52, 203, 877]);
    }

    #[test]
    fn one_by_one() {
        let raw = SparseMatrix::from_triplets(1, 1, [(0, 0, 3.0)]).unwrap();
        let e = normalize(&raw, NormalizeOptions::default()).unwrap();
        let (c, t) = brute_force_optimal(&e, 0.05, 0.05).unwrap();
        assert_eq!(c, Clustering::singletons(1, 1));
        assert!((t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identity_without_penalty_stays_singleton() {
        let raw = SparseMatrix::from_triplets(3, 3, (0..3).map(|i| (i, i, 1.0))).unwrap();
        let e = normalize(&raw, NormalizeOptions::default()).unwrap();
        let (c, t) = brute_force_optimal(&e, 0.0, 0.0).unwrap();
        assert_eq!(c, Clustering::singletons(3, 3));
        assert!(t.abs() < 1e-12);
    }

    #[test]
    fn worked_example_optimum_depends_on_penalty() {
        let e = worked_example::<f64>();
        // At 0.05 bits per cluster keeping rows 3 and 4 (and columns 3 and 4)
        // apart is cheaper than paying the 0.503-bit loss of the 2+2 split.
        let (c, t) = brute_force_optimal(&e, 0.05, 0.05).unwrap();
        assert_eq!(c, Clustering::from_labels(&[0, 0, 1, 2], &[0, 0, 1, 2]));
        assert!((t - 0.3).abs() < 1e-9);
        let (c, _) = brute_force_optimal(&e, 0.5, 0.5).unwrap();
        assert_eq!(c, Clustering::from_labels(&[0, 0, 1, 1], &[0, 0, 1, 1]));
    }

    #[test]
    fn too_large() {
        let raw = SparseMatrix::from_triplets(8, 1, [(0, 0, 1.0)]).unwrap();
        let e = normalize(&raw, NormalizeOptions::default()).unwrap();
        assert!(matches!(brute_force_optimal(&e, 0.1, 0.1), Err(Error::TooLarge { .. })));
    }
}
