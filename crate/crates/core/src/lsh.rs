//! Locality-sensitive hash tables over sparse vectors and the top-k
//! nearest-cluster query built on them.
//!
//! Hashes are p-stable Gaussian projections quantized by a bucket width, so
//! two vectors collide with a probability that decreases with their
//! Euclidean distance. Each table key concatenates several such hashes.
//! Hashing is per entry; clusters are tracked in a separate registry that
//! merges update without touching the buckets.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_TABLES: usize = 8;
pub const DEFAULT_HASHES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshConfig<F> {
    pub n_tables: usize,
    pub hashes_per_table: usize,
    pub bucket_width: F,
    pub seed: u64,
}

impl<F: Scalar> LshConfig<F> {
    /// Default table shape with the bucket width set to the mean Euclidean
    /// norm of the nonzero vectors.
    pub fn for_vectors(vectors: &SparseMatrix<F>, seed: u64) -> Self {
        Self {
            n_tables: DEFAULT_TABLES,
            hashes_per_table: DEFAULT_HASHES,
            bucket_width: default_width(vectors),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tables == 0 || self.hashes_per_table == 0 {
            return Err(Error::Config("LSH needs at least one table and one hash per table".into()));
        }
        if !(self.bucket_width > F::zero()) || !self.bucket_width.is_finite() {
            return Err(Error::Config(format!(
                "LSH bucket width must be positive, got {}",
                self.bucket_width
            )));
        }
        Ok(())
    }
}

/// Mean Euclidean norm over vectors with at least one nonzero.
pub fn default_width<F: Scalar>(vectors: &SparseMatrix<F>) -> F {
    let mut total = F::zero();
    let mut count = 0usize;
    for i in 0..vectors.n_rows() {
        let row = vectors.row(i);
        if row.is_empty() {
            continue;
        }
        total = total + row.iter().map(|e| e.value * e.value).sum::<F>().sqrt();
        count += 1;
    }
    if count == 0 || total <= F::zero() {
        F::one()
    } else {
        total / F::of_usize(count)
    }
}

#[derive(Debug, Clone)]
pub struct LshTable<F> {
    config: LshConfig<F>,
    dim: usize,
    /// `buckets[table][bucket]` lists entry indices.
    buckets: Vec<Vec<Vec<usize>>>,
    /// `entry_bucket[entry * n_tables + table]`.
    entry_bucket: Vec<usize>,
    registry: Vec<u32>,
    clusters: BTreeMap<u32, Vec<usize>>,
}

/// Hashes every row of `vectors` into `config.n_tables` tables. Each entry
/// starts in its own cluster, with id equal to its index.
pub fn build_lsh_table<F: Scalar>(vectors: &SparseMatrix<F>, config: LshConfig<F>) -> Result<LshTable<F>> {
    config.validate()?;
    if vectors.n_rows() == 0 {
        return Err(Error::Shape("cannot index zero vectors".into()));
    }
    let dim = vectors.n_cols();
    let (nt, nh) = (config.n_tables, config.hashes_per_table);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let projections: Vec<F> = (0..nt * nh * dim)
        .map(|_| F::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let width = config.bucket_width.as_f64();
    let offsets: Vec<F> = (0..nt * nh).map(|_| F::of(rng.gen_range(0.0..width))).collect();

    let n = vectors.n_rows();
    let mut buckets: Vec<Vec<Vec<usize>>> = vec![Vec::new(); nt];
    let mut entry_bucket = vec![0usize; n * nt];
    for t in 0..nt {
        let mut keys: HashMap<Vec<i64>, usize> = HashMap::new();
        for i in 0..n {
            let key: Vec<i64> = (0..nh)
                .map(|h| {
                    let base = (t * nh + h) * dim;
                    let dot: F = vectors
                        .row(i)
                        .iter()
                        .map(|e| projections[base + e.col] * e.value)
                        .sum();
                    ((dot + offsets[t * nh + h]) / config.bucket_width).floor().as_f64() as i64
                })
                .collect();
            let next = buckets[t].len();
            let b = *keys.entry(key).or_insert(next);
            if b == next {
                buckets[t].push(Vec::new());
            }
            buckets[t][b].push(i);
            entry_bucket[i * nt + t] = b;
        }
    }
    Ok(LshTable {
        config,
        dim,
        buckets,
        entry_bucket,
        registry: (0..n as u32).collect(),
        clusters: (0..n as u32).map(|i| (i, vec![i as usize])).collect(),
    })
}

impl<F: Scalar> LshTable<F> {
    pub fn config(&self) -> &LshConfig<F> {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_entries(&self) -> usize {
        self.registry.len()
    }

    pub fn cluster_of(&self, entry: usize) -> Option<u32> {
        self.registry.get(entry).copied()
    }

    pub fn cluster_members(&self, id: u32) -> Option<&[usize]> {
        self.clusters.get(&id).map(Vec::as_slice)
    }

    pub fn cluster_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.clusters.keys().copied()
    }

    /// Replaces the registry with an explicit assignment of entries to clusters.
    pub fn assign(&mut self, cluster_of: &[u32]) -> Result<()> {
        if cluster_of.len() != self.registry.len() {
            return Err(Error::Shape(format!(
                "assignment covers {} entries, table has {}",
                cluster_of.len(),
                self.registry.len()
            )));
        }
        self.registry = cluster_of.to_vec();
        self.clusters.clear();
        for (i, &c) in cluster_of.iter().enumerate() {
            self.clusters.entry(c).or_default().push(i);
        }
        Ok(())
    }

    /// Entries sharing at least one bucket with some member, excluding the
    /// members themselves. Sorted ascending.
    pub fn query(&self, members: &[usize]) -> Result<Vec<usize>> {
        let nt = self.config.n_tables;
        let mut missing = Vec::new();
        let mut touched: HashSet<(usize, usize)> = HashSet::new();
        for &m in members {
            if m >= self.registry.len() {
                missing.push(format!("entry {m}"));
                continue;
            }
            for t in 0..nt {
                touched.insert((t, self.entry_bucket[m * nt + t]));
            }
        }
        if !missing.is_empty() {
            return Err(Error::NotFound(missing));
        }
        let own: HashSet<usize> = members.iter().copied().collect();
        let mut out: Vec<usize> = touched
            .into_iter()
            .flat_map(|(t, b)| self.buckets[t][b].iter().copied())
            .filter(|e| !own.contains(e))
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Moves every entry of `absorbed` to `survivor`.
    pub fn on_merge(&mut self, absorbed: u32, survivor: u32) -> Result<()> {
        let missing: Vec<String> = [absorbed, survivor]
            .iter()
            .filter(|id| !self.clusters.contains_key(id))
            .map(|id| format!("cluster {id}"))
            .collect();
        if !missing.is_empty() {
            return Err(Error::NotFound(missing));
        }
        if absorbed == survivor {
            return Ok(());
        }
        let moved = self.clusters.remove(&absorbed).expect("checked above");
        for &e in &moved {
            self.registry[e] = survivor;
        }
        self.clusters
            .get_mut(&survivor)
            .expect("checked above")
            .extend(moved);
        Ok(())
    }
}

/// Entries colliding with any member of `cluster`.
pub fn query_lsh_table<F: Scalar>(cluster: &[usize], table: &LshTable<F>) -> Result<Vec<usize>> {
    table.query(cluster)
}

/// Ranks candidate clusters by size-normalized collision counts with the
/// query cluster: each collided entry adds `1/|cluster|` to its cluster's
/// tally. Clusters containing a query member are never returned. Ties go to
/// the lower id; fewer than `k` clusters may come back.
pub fn topk_neighbors<F: Scalar>(
    cluster: &[usize],
    is_candidate: impl Fn(u32) -> bool,
    table: &LshTable<F>,
    k: usize,
) -> Result<Vec<(u32, f64)>> {
    let own: HashSet<u32> = cluster.iter().filter_map(|&m| table.cluster_of(m)).collect();
    let collided = table.query(cluster)?;
    let mut tally: BTreeMap<u32, f64> = BTreeMap::new();
    for n in collided {
        let v = table.registry[n];
        if own.contains(&v) || !is_candidate(v) {
            continue;
        }
        let size = table.clusters.get(&v).map_or(1, Vec::len) as f64;
        *tally.entry(v).or_insert(0.0) += 1.0 / size;
    }
    let mut ranked: Vec<(u32, f64)> = tally.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors(rows: &[&[(usize, f64)]], dim: usize) -> SparseMatrix<f64> {
        SparseMatrix::from_triplets(
            rows.len(),
            dim,
            rows.iter()
                .enumerate()
                .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v))),
        )
        .unwrap()
    }

    fn config(seed: u64, w: f64) -> LshConfig<f64> {
        LshConfig {
            n_tables: 8,
            hashes_per_table: 4,
            bucket_width: w,
            seed,
        }
    }

    #[test]
    fn identical_vectors_collide_everywhere() {
        let v = vectors(&[&[(0, 1.0), (3, 2.0)], &[(0, 1.0), (3, 2.0)], &[(1, 5.0)]], 4);
        let t = build_lsh_table(&v, config(1, 0.5)).unwrap();
        for tb in 0..8 {
            assert_eq!(t.entry_bucket[tb], t.entry_bucket[8 + tb]);
        }
        assert!(t.query(&[0]).unwrap().contains(&1));
    }

    #[test]
    fn singleton_without_neighbours() {
        let v = vectors(&[&[(0, 1.0)], &[(1, 1000.0)]], 2);
        let t = build_lsh_table(&v, config(3, 0.01)).unwrap();
        assert!(t.query(&[0]).unwrap().is_empty());
    }

    #[test]
    fn duplicates_in_different_clusters_find_each_other() {
        let v = vectors(&[&[(0, 1.0)], &[(0, 1.0)], &[(1, 50.0)]], 2);
        let t = build_lsh_table(&v, config(5, 0.1)).unwrap();
        assert_eq!(topk_neighbors(&[0], |_| true, &t, 1).unwrap()[0].0, 1);
        assert_eq!(topk_neighbors(&[1], |_| true, &t, 1).unwrap()[0].0, 0);
    }

    #[test]
    fn tally_is_size_normalized() {
        // Entry 0 is the query. Cluster 10 holds four entries of which two
        // collide with it; cluster 20 holds one colliding entry.
        let q = &[(0usize, 1.0)][..];
        let far = &[(1usize, 1e6)][..];
        let far2 = &[(2usize, 1e6)][..];
        let v = vectors(&[q, q, q, far, far2, q], 3);
        let mut t = build_lsh_table(&v, config(7, 0.5)).unwrap();
        t.assign(&[0, 10, 10, 10, 10, 20]).unwrap();
        let ranked = topk_neighbors(&[0], |_| true, &t, 2).unwrap();
        assert_eq!(ranked[0], (20, 1.0));
        assert_eq!(ranked[1], (10, 0.5));
    }

    #[test]
    fn own_cluster_excluded() {
        let q = &[(0usize, 1.0)][..];
        let v = vectors(&[q, q, q], 1);
        let mut t = build_lsh_table(&v, config(9, 1.0)).unwrap();
        t.assign(&[4, 4, 5]).unwrap();
        let ranked = topk_neighbors(&[0, 1], |_| true, &t, 5).unwrap();
        assert_eq!(ranked, vec![(5, 1.0)]);
    }

    #[test]
    fn merges_redirect_tallies() {
        let q = &[(0usize, 1.0)][..];
        let v = vectors(&[q, q, q], 1);
        let mut t = build_lsh_table(&v, config(11, 1.0)).unwrap();
        t.on_merge(1, 2).unwrap();
        assert_eq!(topk_neighbors(&[0], |_| true, &t, 3).unwrap(), vec![(2, 1.0)]);
        t.on_merge(0, 2).unwrap();
        assert_eq!(t.cluster_of(0), Some(2));
        assert!(matches!(t.on_merge(0, 2), Err(Error::NotFound(_))));
    }

    #[test]
    fn merge_chain() {
        let v = vectors(&[&[(0, 1.0)], &[(0, 2.0)], &[(0, 3.0)]], 1);
        let mut t = build_lsh_table(&v, config(2, 1.0)).unwrap();
        t.on_merge(0, 1).unwrap();
        t.on_merge(1, 2).unwrap();
        assert_eq!(t.cluster_of(0), Some(2));
        assert_eq!(t.cluster_members(2).unwrap().len(), 3);
    }

    #[test]
    fn unknown_entry() {
        let v = vectors(&[&[(0, 1.0)]], 1);
        let t = build_lsh_table(&v, config(2, 1.0)).unwrap();
        assert!(matches!(t.query(&[4]), Err(Error::NotFound(_))));
    }

    #[test]
    fn bad_config() {
        let v = vectors(&[&[(0, 1.0)]], 1);
        assert!(build_lsh_table(&v, config(2, 0.0)).is_err());
        let mut c = config(2, 1.0);
        c.n_tables = 0;
        assert!(build_lsh_table(&v, c).is_err());
    }
}
