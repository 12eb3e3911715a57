//! Planted co-cluster generator and partition agreement scores.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{Clustering, Side};
use crate::error::{Error, Result};
use crate::matrix::{default_col_meta, ExplanationMatrix, NormalizeOptions, RowMeta, SparseMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row block `k` is supported on column block `k`.
    pub n_blocks: usize,
    /// Probability that an in-block cell is nonzero. The default 1.0 gives
    /// block-constant support.
    pub density: f64,
    /// Fraction of the final nonzeros that are placed uniformly at random.
    pub noise: f64,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(n_rows: usize, n_cols: usize, n_blocks: usize, seed: u64) -> Self {
        Self {
            n_rows,
            n_cols,
            n_blocks,
            density: 1.0,
            noise: 0.05,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted<F> {
    pub matrix: ExplanationMatrix<F>,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

fn balanced_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    labels.shuffle(rng);
    labels
}

/// Block-diagonal signal with values in `[0.5, 1)` plus uniform noise with
/// values in `(0, 0.5)`, normalized. Row classes are the planted labels; a
/// tenth of the rows carry a wrong prediction.
pub fn planted_blocks<F: Scalar>(config: &PlantedConfig) -> Result<Planted<F>> {
    let PlantedConfig {
        n_rows,
        n_cols,
        n_blocks,
        density,
        noise,
        seed,
    } = *config;
    if n_blocks == 0 || n_blocks > n_rows.min(n_cols) {
        return Err(Error::Config(format!(
            "block count {n_blocks} must be within 1..={}",
            n_rows.min(n_cols)
        )));
    }
    if !(density > 0.0 && density <= 1.0) || !(0.0..1.0).contains(&noise) {
        return Err(Error::Config("density must be in (0, 1] and noise in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row_labels = balanced_labels(n_rows, n_blocks, &mut rng);
    let col_labels = balanced_labels(n_cols, n_blocks, &mut rng);
    let mut block_cols: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
    for (j, &l) in col_labels.iter().enumerate() {
        block_cols[l].push(j);
    }

    let mut triplets = Vec::new();
    for (i, &l) in row_labels.iter().enumerate() {
        let cols = &block_cols[l];
        let before = triplets.len();
        for &j in cols {
            if rng.gen_bool(density) {
                triplets.push((i, j, rng.gen_range(0.5..1.0)));
            }
        }
        if triplets.len() == before {
            let j = cols[rng.gen_range(0..cols.len())];
            triplets.push((i, j, rng.gen_range(0.5..1.0)));
        }
    }
    let n_noise = (triplets.len() as f64 * noise / (1.0 - noise)).round() as usize;
    for _ in 0..n_noise {
        triplets.push((
            rng.gen_range(0..n_rows),
            rng.gen_range(0..n_cols),
            rng.gen_range(0.0..0.5),
        ));
    }
    let raw = SparseMatrix::from_triplets(n_rows, n_cols, triplets.into_iter().map(|(i, j, v)| (i, j, F::of(v))))?;
    let rows = row_labels
        .iter()
        .enumerate()
        .map(|(i, &l)| RowMeta {
            id: format!("r{}", i + 1),
            class: format!("k{l}"),
            pred: if rng.gen_bool(0.1) {
                format!("k{}", (l + 1) % n_blocks)
            } else {
                format!("k{l}")
            },
        })
        .collect();
    let matrix = crate::matrix::normalize(&raw, NormalizeOptions::default())?.with_meta(rows, default_col_meta(n_cols))?;
    Ok(Planted {
        matrix,
        row_labels,
        col_labels,
    })
}

/// Cluster position of every index on `side`.
pub fn labels_of(clustering: &Clustering, side: Side, len: usize) -> Vec<usize> {
    clustering.positions(side, len)
}

/// Hubert-Arabie adjusted Rand index. Two single-cluster labelings score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label vectors differ in length");
    let n = a.len();
    let pairs = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: std::collections::HashMap<(usize, usize), u64> = Default::default();
    let mut ra: std::collections::HashMap<usize, u64> = Default::default();
    let mut rb: std::collections::HashMap<usize, u64> = Default::default();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sa: f64 = ra.values().map(|&c| pairs(c)).sum();
    let sb: f64 = rb.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_identical_and_relabelled() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
    }

    #[test]
    fn ari_reference_value() {
        // Worked by hand from the contingency table [[2,0],[1,1]].
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]);
        assert!((v - 0.0).abs() < 1e-12, "{v}");
        let w = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((w - 0.24242424242424243).abs() < 1e-12, "{w}");
    }

    #[test]
    fn generator_is_seeded_and_normalized() {
        let c = PlantedConfig::new(40, 20, 4, 9);
        let a = planted_blocks::<f64>(&c).unwrap();
        let b = planted_blocks::<f64>(&c).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert!(a.matrix.is_normalized());
        assert_eq!(a.row_labels.iter().filter(|&&l| l == 0).count(), 10);
    }

    #[test]
    fn noiseless_support_is_block_diagonal() {
        let c = PlantedConfig {
            noise: 0.0,
            ..PlantedConfig::new(30, 12, 3, 1)
        };
        let p = planted_blocks::<f64>(&c).unwrap();
        for e in p.matrix.entries() {
            assert_eq!(p.row_labels[e.row], p.col_labels[e.col]);
        }
    }
}
