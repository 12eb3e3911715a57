#![allow(dead_code)]

use explsum::matrix::{normalize, NormalizeOptions};
use explsum::{Clustering, ExplanationMatrix, SparseMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense `m x n` cells, each nonzero with probability `density`, at least one
/// nonzero overall.
pub fn random_dense(m: usize, n: usize, density: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; m];
    for row in d.iter_mut() {
        for v in row.iter_mut() {
            if rng.gen_bool(density) {
                *v = rng.gen_range(0.01..1.0);
            }
        }
    }
    if d.iter().flatten().all(|&v| v == 0.0) {
        d[rng.gen_range(0..m)][rng.gen_range(0..n)] = 1.0;
    }
    d
}

pub fn to_matrix(d: &[Vec<f64>]) -> ExplanationMatrix<f64> {
    let n = d[0].len();
    let raw = SparseMatrix::from_triplets(
        d.len(),
        n,
        d.iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, &v)| v > 0.0).map(move |(j, &v)| (i, j, v))),
    )
    .unwrap();
    normalize(&raw, NormalizeOptions::default()).unwrap()
}

pub fn seeded_matrix(m: usize, n: usize, density: f64, seed: u64) -> ExplanationMatrix<f64> {
    to_matrix(&random_dense(m, n, density, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// A sparse 8x8-or-smaller matrix together with random labels on both sides.
pub fn matrix_and_labels(max_side: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, Vec<usize>)> {
    (1..=max_side, 1..=max_side)
        .prop_flat_map(|(m, n)| {
            (
                prop::collection::vec(prop::collection::vec(prop_oneof![2 => Just(0.0), 3 => 0.01f64..1.0], n), m),
                prop::collection::vec(0..4usize, m),
                prop::collection::vec(0..4usize, n),
            )
        })
        .prop_map(|(mut d, r, c)| {
            if d.iter().flatten().all(|&v| v == 0.0) {
                d[0][0] = 1.0;
            }
            (d, r, c)
        })
}

pub fn dense_of(m: &ExplanationMatrix<f64>) -> Vec<Vec<f64>> {
    m.data().to_dense()
}

/// Approximation matrix written out from the definition, independent of the
/// library's marginals.
pub fn oracle_q(p: &[Vec<f64>], rl: &[usize], cl: &[usize]) -> Vec<Vec<f64>> {
    let (m, n) = (p.len(), p[0].len());
    let pr: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let pc: Vec<f64> = (0..n).map(|j| p.iter().map(|r| r[j]).sum()).collect();
    let mut q = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            let mut block = 0.0;
            let mut pa = 0.0;
            let mut pb = 0.0;
            for a in 0..m {
                if rl[a] == rl[i] {
                    pa += pr[a];
                    for b in 0..n {
                        if cl[b] == cl[j] {
                            block += p[a][b];
                        }
                    }
                }
            }
            for b in 0..n {
                if cl[b] == cl[j] {
                    pb += pc[b];
                }
            }
            if pa > 0.0 && pb > 0.0 {
                q[i][j] = block * pr[i] / pa * pc[j] / pb;
            }
        }
    }
    q
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&x, _)| x > 0.0).map(|(&x, &y)| x * (x / y).log2()).sum()
}

/// Sum over row and column clusters of the KL divergence between the
/// conditional slice distributions.
pub fn oracle_d(p: &[Vec<f64>], rl: &[usize], cl: &[usize]) -> f64 {
    let q = oracle_q(p, rl, cl);
    let (m, n) = (p.len(), p[0].len());
    let mut d = 0.0;
    let mut labels: Vec<usize> = rl.to_vec();
    labels.sort_unstable();
    labels.dedup();
    for &a in &labels {
        let (mut ps, mut qs) = (Vec::new(), Vec::new());
        for i in (0..m).filter(|&i| rl[i] == a) {
            ps.extend_from_slice(&p[i]);
            qs.extend_from_slice(&q[i]);
        }
        let mass: f64 = ps.iter().sum();
        if mass > 0.0 {
            d += kl(
                &ps.iter().map(|x| x / mass).collect::<Vec<_>>(),
                &qs.iter().map(|x| x / mass).collect::<Vec<_>>(),
            );
        }
    }
    let mut labels: Vec<usize> = cl.to_vec();
    labels.sort_unstable();
    labels.dedup();
    for &b in &labels {
        let (mut ps, mut qs) = (Vec::new(), Vec::new());
        for j in (0..n).filter(|&j| cl[j] == b) {
            for i in 0..m {
                ps.push(p[i][j]);
                qs.push(q[i][j]);
            }
        }
        let mass: f64 = ps.iter().sum();
        if mass > 0.0 {
            d += kl(
                &ps.iter().map(|x| x / mass).collect::<Vec<_>>(),
                &qs.iter().map(|x| x / mass).collect::<Vec<_>>(),
            );
        }
    }
    d
}

pub fn clustering(rl: &[usize], cl: &[usize]) -> Clustering {
    Clustering::from_labels(rl, cl)
}
