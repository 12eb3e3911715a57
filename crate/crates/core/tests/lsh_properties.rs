use explsum::lsh::{build_lsh_table, topk_neighbors, LshConfig};
use explsum::SparseMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const DIM: usize = 16;
const PAIRS: usize = 1000;

/// `PAIRS` vector pairs, each pair exactly `dist` apart.
fn pairs_at(dist: f64, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..PAIRS)
        .map(|_| {
            let x: Vec<f64> = (0..DIM).map(|_| rng.gen_range(0.0..4.0)).collect();
            let u: Vec<f64> = (0..DIM).map(|_| rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let y = x.iter().zip(&u).map(|(a, b)| a + dist * b / norm).collect();
            (x, y)
        })
        .collect()
}

fn collision_rate(pairs: &[(Vec<f64>, Vec<f64>)], seed: u64) -> f64 {
    let triplets = pairs.iter().enumerate().flat_map(|(k, (x, y))| {
        let a = x.iter().enumerate().map(move |(j, &v)| (2 * k, j, v));
        let b = y.iter().enumerate().map(move |(j, &v)| (2 * k + 1, j, v));
        a.chain(b).collect::<Vec<_>>()
    });
    let vectors = SparseMatrix::from_triplets(2 * pairs.len(), DIM, triplets).unwrap();
    let config = LshConfig {
        n_tables: 1,
        hashes_per_table: 2,
        bucket_width: 1.0,
        seed,
    };
    let table = build_lsh_table(&vectors, config).unwrap();
    let hits = (0..pairs.len())
        .filter(|&k| table.query(&[2 * k]).unwrap().contains(&(2 * k + 1)))
        .count();
    hits as f64 / pairs.len() as f64
}

#[test]
fn nearer_pairs_collide_more_often() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d1, d2) in [(0.25, 1.0), (0.5, 2.0), (1.0, 3.0)] {
        let near = collision_rate(&pairs_at(d1, &mut rng), 5);
        let far = collision_rate(&pairs_at(d2, &mut rng), 5);
        // One-sided two-proportion z-test at the 5% level.
        let pooled = (near + far) / 2.0;
        let se = (pooled * (1.0 - pooled) * 2.0 / PAIRS as f64).sqrt();
        let z = (near - far) / se.max(1e-12);
        assert!(z > 1.645, "d {d1} vs {d2}: {near} vs {far}, z = {z}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn own_cluster_never_returned(
        points in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 2..30),
        labels in prop::collection::vec(0..5u32, 30),
        seed in any::<u64>(),
        k in 1usize..8,
    ) {
        let n = points.len();
        let triplets = points.iter().enumerate().flat_map(|(i, p)| p.iter().enumerate().map(move |(j, &v)| (i, j, v)));
        let vectors = SparseMatrix::from_triplets(n, 4, triplets).unwrap();
        let mut table = build_lsh_table(&vectors, LshConfig { n_tables: 4, hashes_per_table: 2, bucket_width: 0.5, seed }).unwrap();
        table.assign(&labels[..n]).unwrap();
        let ids: Vec<u32> = table.cluster_ids().collect();
        for id in ids {
            let members = table.cluster_members(id).unwrap().to_vec();
            let top = topk_neighbors(&members, |_| true, &table, k).unwrap();
            prop_assert!(top.len() <= k);
            prop_assert!(top.iter().all(|&(c, _)| c != id));
            let again = topk_neighbors(&members, |_| true, &table, k).unwrap();
            prop_assert_eq!(top, again);
        }
    }
}
