//! Spectral pre-clustering.
//!
//! The matrix is treated as a bipartite graph between rows and columns.
//! After degree normalization `A = D1^-1/2 · E · D2^-1/2`, the leading
//! singular vectors, rescaled by the inverse square-root degrees, embed rows
//! and columns in a low-dimensional space where k-means finds a coarse
//! partition for the merge engine to refine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cost::Clustering;
use crate::error::{Error, Result};
use crate::matrix::{ExplanationMatrix, SparseMatrix};
use crate::scalar::Scalar;

pub const DEFAULT_POWER_ITERATIONS: usize = 30;
pub const KMEANS_MAX_ITER: usize = 50;
pub const MAX_DEFAULT_K: usize = 200;

const OVERSAMPLE: usize = 10;
const RESIDUAL_TOL: f64 = 1e-8;
const RESIDUAL_FAIL: f64 = 1e-6;

/// Degree-normalizes a matrix whose rows and columns all have positive sums.
pub fn degree_normalize<F: Scalar>(matrix: &SparseMatrix<F>) -> Result<SparseMatrix<F>> {
    let d1 = matrix.row_sums();
    let d2 = matrix.col_sums();
    if let Some(i) = d1.iter().position(|&d| d <= F::zero()) {
        return Err(Error::ZeroDegree { side: "row", index: i });
    }
    if let Some(j) = d2.iter().position(|&d| d <= F::zero()) {
        return Err(Error::ZeroDegree { side: "column", index: j });
    }
    Ok(matrix.map_values(|e| e.value / (d1[e.row] * d2[e.col]).sqrt()))
}

/// Leading singular triplets. `u[i]` and `v[i]` are the i-th left and right
/// singular vectors.
#[derive(Debug, Clone)]
pub struct Svd<F> {
    pub u: Vec<Vec<F>>,
    pub s: Vec<F>,
    pub v: Vec<Vec<F>>,
    /// `max_i ‖A v_i − s_i u_i‖ / s_1`.
    pub residual: f64,
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

fn matvec<F: Scalar>(a: &SparseMatrix<F>, x: &[F]) -> Vec<F> {
    let mut y = vec![F::zero(); a.n_rows()];
    for e in a.entries() {
        y[e.row] = y[e.row] + e.value * x[e.col];
    }
    y
}

fn rmatvec<F: Scalar>(a: &SparseMatrix<F>, x: &[F]) -> Vec<F> {
    let mut y = vec![F::zero(); a.n_cols()];
    for e in a.entries() {
        y[e.col] = y[e.col] + e.value * x[e.row];
    }
    y
}

fn gaussian<F: Scalar>(len: usize, rng: &mut ChaCha8Rng) -> Vec<F> {
    (0..len).map(|_| F::of(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns that
/// collapse are replaced by fresh random directions.
fn orthonormalize<F: Scalar>(cols: &mut [Vec<F>], rng: &mut ChaCha8Rng) {
    let len = cols.first().map_or(0, Vec::len);
    for k in 0..cols.len() {
        let mut attempts = 0;
        loop {
            let scale = norm(&cols[k]);
            for _ in 0..2 {
                for j in 0..k {
                    let (head, tail) = cols.split_at_mut(k);
                    let proj = dot(&head[j], &tail[0]);
                    for (x, &q) in tail[0].iter_mut().zip(&head[j]) {
                        *x = *x - proj * q;
                    }
                }
            }
            let nrm = norm(&cols[k]);
            if nrm > F::of(1e-10) * scale.max(F::of(1e-300)) && nrm > F::zero() {
                for x in cols[k].iter_mut() {
                    *x = *x / nrm;
                }
                break;
            }
            attempts += 1;
            if attempts > 5 || k >= len {
                cols[k] = vec![F::zero(); len];
                break;
            }
            cols[k] = gaussian(len, rng);
        }
    }
}

/// One-sided Jacobi SVD of a tall matrix given by columns `x` (each of
/// length `n`). Returns singular values, the right rotation (`b x b`, by
/// columns) and the normalized rotated columns.
fn one_sided_jacobi<F: Scalar>(mut x: Vec<Vec<F>>) -> (Vec<F>, Vec<Vec<F>>, Vec<Vec<F>>) {
    let b = x.len();
    let mut rot: Vec<Vec<F>> = (0..b)
        .map(|i| (0..b).map(|j| if i == j { F::one() } else { F::zero() }).collect())
        .collect();
    let eps = F::epsilon();
    for _sweep in 0..60 {
        let mut off = false;
        for p in 0..b {
            for q in p + 1..b {
                let alpha = dot(&x[p], &x[p]);
                let beta = dot(&x[q], &x[q]);
                let gamma = dot(&x[p], &x[q]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == F::zero() {
                    continue;
                }
                off = true;
                let zeta = (beta - alpha) / (F::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = c * t;
                for cols in [&mut x, &mut rot] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (a, bq) = (*xp, *xq);
                        *xp = c * a - s * bq;
                        *xq = s * a + c * bq;
                    }
                }
            }
        }
        if !off {
            break;
        }
    }
    let sigma: Vec<F> = x.iter().map(|c| norm(c)).collect();
    let normalized = x
        .into_iter()
        .zip(&sigma)
        .map(|(c, &s)| {
            if s > F::zero() {
                c.into_iter().map(|v| v / s).collect()
            } else {
                c
            }
        })
        .collect();
    (sigma, rot, normalized)
}

fn svd_attempt<F: Scalar>(a: &SparseMatrix<F>, rank: usize, power_iterations: usize, seed: u64) -> Result<Svd<F>> {
    let (m, n) = (a.n_rows(), a.n_cols());
    if rank == 0 || rank > m.min(n) {
        return Err(Error::Config(format!(
            "rank {rank} outside 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    let block = (rank + OVERSAMPLE).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<F>> = (0..block).map(|_| matvec(a, &gaussian::<F>(n, &mut rng))).collect();
    orthonormalize(&mut q, &mut rng);

    let mut result: Option<Svd<F>> = None;
    for it in 0..=power_iterations {
        if it > 0 {
            let mut z: Vec<Vec<F>> = q.iter().map(|c| rmatvec(a, c)).collect();
            orthonormalize(&mut z, &mut rng);
            q = z.iter().map(|c| matvec(a, c)).collect();
            orthonormalize(&mut q, &mut rng);
        }
        // Rayleigh-Ritz on the current basis: Aᵀ Q = V Σ Wᵀ gives A ≈ (Q W) Σ Vᵀ.
        let bt: Vec<Vec<F>> = q.iter().map(|c| rmatvec(a, c)).collect();
        let (sigma, rot, vcols) = one_sided_jacobi(bt);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).expect("finite"));
        let mut u = Vec::with_capacity(rank);
        let mut v = Vec::with_capacity(rank);
        let mut s = Vec::with_capacity(rank);
        for &k in order.iter().take(rank) {
            let mut uk = vec![F::zero(); m];
            for (j, qj) in q.iter().enumerate() {
                let w = rot[k][j];
                for (x, &y) in uk.iter_mut().zip(qj) {
                    *x = *x + w * y;
                }
            }
            let mut vk = vcols[k].clone();
            let big = uk
                .iter()
                .copied()
                .fold(F::zero(), |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if big < F::zero() {
                uk.iter_mut().for_each(|x| *x = -*x);
                vk.iter_mut().for_each(|x| *x = -*x);
            }
            u.push(uk);
            v.push(vk);
            s.push(sigma[k]);
        }
        let top = s[0].as_f64().max(f64::MIN_POSITIVE);
        let residual = u
            .iter()
            .zip(&v)
            .zip(&s)
            .map(|((uk, vk), &sk)| {
                let av = matvec(a, vk);
                let diff: Vec<F> = av.iter().zip(uk).map(|(&x, &y)| x - sk * y).collect();
                norm(&diff).as_f64() / top
            })
            .fold(0.0, f64::max);
        let done = residual <= RESIDUAL_TOL;
        result = Some(Svd { u, s, v, residual });
        if done {
            break;
        }
    }
    Ok(result.expect("at least one Rayleigh-Ritz pass"))
}

/// Top-`rank` singular triplets by randomized subspace iteration.
///
/// The largest-magnitude component of every left singular vector is made
/// positive (the right vector flips with it). Fails with
/// [`Error::Convergence`] when the relative residual stays above `1e-6`
/// after `power_iterations` rounds.
pub fn truncated_svd<F: Scalar>(a: &SparseMatrix<F>, rank: usize, power_iterations: usize, seed: u64) -> Result<Svd<F>> {
    let svd = svd_attempt(a, rank, power_iterations, seed)?;
    if svd.residual > RESIDUAL_FAIL {
        return Err(Error::Convergence { residual: svd.residual });
    }
    Ok(svd)
}

/// Seeded k-means with k-means++ seeding. Returns a label per point.
pub fn kmeans<F: Scalar>(points: &[Vec<F>], k: usize, max_iter: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let k = k.min(n);
    let dist2 = |a: &[F], b: &[F]| -> F { a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<F>> = vec![points[rng.gen_range(0..n)].clone()];
    let mut nearest: Vec<F> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().map(|d| d.as_f64()).sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                target -= d.as_f64();
                if target < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[pick].clone());
        let c = centers.last().expect("just pushed");
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(dist2(p, c));
        }
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        let mut dists = vec![F::zero(); n];
        for (i, p) in points.iter().enumerate() {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, dist2(p, ctr)))
                .fold((0, F::infinity()), |acc, x| if x.1 < acc.1 { x } else { acc });
            dists[i] = d;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(p) {
                *s = *s + x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed from the point farthest from its current center.
                let far = (0..n)
                    .fold(0, |best, i| if dists[i] > dists[best] { i } else { best });
                centers[c] = points[far].clone();
                dists[far] = F::zero();
                changed = true;
            } else {
                let cnt = F::of_usize(counts[c]);
                centers[c] = sums[c].iter().map(|&s| s / cnt).collect();
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub k_rows: usize,
    pub k_cols: usize,
    /// Number of singular vectors; `None` uses `⌈log2 max(k)⌉ + 1`.
    pub n_singular_vectors: Option<usize>,
    pub power_iterations: usize,
    pub seed: u64,
}

impl SpectralConfig {
    /// `⌈√m⌉` row clusters and `⌈√n⌉` column clusters, each capped at 200.
    pub fn for_shape(n_rows: usize, n_cols: usize, seed: u64) -> Self {
        let k = |len: usize| ((len as f64).sqrt().ceil() as usize).clamp(1, MAX_DEFAULT_K);
        Self {
            k_rows: k(n_rows),
            k_cols: k(n_cols),
            n_singular_vectors: None,
            power_iterations: DEFAULT_POWER_ITERATIONS,
            seed,
        }
    }

    pub fn singular_vectors(&self) -> usize {
        self.n_singular_vectors.unwrap_or_else(|| {
            let k = self.k_rows.max(self.k_cols).max(1);
            (k as f64).log2().ceil() as usize + 1
        })
    }
}

/// Row and column embeddings: the leading singular vectors of the
/// degree-normalized matrix divided by the square-root degrees. The first
/// vector is constant on every connected component, so it only separates
/// disconnected blocks.
pub fn spectral_embedding<F: Scalar>(
    matrix: &SparseMatrix<F>,
    n_vectors: usize,
    power_iterations: usize,
    seed: u64,
) -> Result<(Vec<Vec<F>>, Vec<Vec<F>>)> {
    let an = degree_normalize(matrix)?;
    let rank = n_vectors.clamp(1, matrix.n_rows().min(matrix.n_cols()));
    let svd = svd_attempt(&an, rank, power_iterations, seed)?;
    if svd.residual > RESIDUAL_FAIL {
        log::warn!(
            "spectral embedding used an unconverged SVD (relative residual {:e})",
            svd.residual
        );
    }
    let d1 = matrix.row_sums();
    let d2 = matrix.col_sums();
    let embed = |vecs: &[Vec<F>], deg: &[F]| -> Vec<Vec<F>> {
        (0..deg.len())
            .map(|i| vecs.iter().map(|v| v[i] / deg[i].sqrt()).collect())
            .collect()
    };
    Ok((embed(&svd.u, &d1), embed(&svd.v, &d2)))
}

/// Coarse clustering from spectral embeddings and k-means. Rows and
/// columns without any mass become singleton clusters.
pub fn precluster<F: Scalar>(matrix: &ExplanationMatrix<F>, config: &SpectralConfig) -> Result<Clustering> {
    let data = matrix.data();
    let live_rows: Vec<usize> = data
        .row_sums()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > F::zero())
        .map(|(i, _)| i)
        .collect();
    let live_cols: Vec<usize> = data
        .col_sums()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > F::zero())
        .map(|(j, _)| j)
        .collect();
    for (k, live, side) in [
        (config.k_rows, live_rows.len(), "row"),
        (config.k_cols, live_cols.len(), "column"),
    ] {
        if k == 0 || k > live {
            return Err(Error::Config(format!(
                "{side} cluster count {k} must be within 1..={live} (nonzero {side}s)"
            )));
        }
    }
    let mut row_pos = vec![usize::MAX; data.n_rows()];
    for (k, &i) in live_rows.iter().enumerate() {
        row_pos[i] = k;
    }
    let mut col_pos = vec![usize::MAX; data.n_cols()];
    for (k, &j) in live_cols.iter().enumerate() {
        col_pos[j] = k;
    }
    let compact = SparseMatrix::from_triplets(
        live_rows.len(),
        live_cols.len(),
        data.entries()
            .iter()
            .map(|e| (row_pos[e.row], col_pos[e.col], e.value)),
    )?;
    let (row_emb, col_emb) =
        spectral_embedding(&compact, config.singular_vectors(), config.power_iterations, config.seed)?;
    let row_labels = kmeans(&row_emb, config.k_rows, KMEANS_MAX_ITER, config.seed);
    let col_labels = kmeans(
        &col_emb,
        config.k_cols,
        KMEANS_MAX_ITER,
        config.seed.wrapping_add(1),
    );

    let full = |len: usize, pos: &[usize], labels: &[usize], k: usize| -> Vec<usize> {
        let mut next = k;
        (0..len)
            .map(|i| {
                if pos[i] == usize::MAX {
                    next += 1;
                    next - 1
                } else {
                    labels[pos[i]]
                }
            })
            .collect()
    };
    Ok(Clustering::from_labels(
        &full(data.n_rows(), &row_pos, &row_labels, config.k_rows),
        &full(data.n_cols(), &col_pos, &col_labels, config.k_cols),
    ))
}
