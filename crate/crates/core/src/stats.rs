//! Incremental co-cluster statistics.
//!
//! For a block `(a, b)` the slice loss decomposes as
//! `S(a, b) = W(a, b) − M(a, b) · log2(M(a, b) / (P(a) · P(b)))`
//! where `M` is the block mass, `P` are cluster masses and
//! `W = Σ p · log2(p / (p(r) · p(c)))` over the block's entries. `M` and `W`
//! are additive under merges, so a merge only touches the two merged
//! clusters and the opposite-side clusters they share blocks with.

use std::collections::BTreeMap;

use crate::cost::{Clustering, LossKind, Side};
use crate::matrix::ExplanationMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Block<F> {
    pub mass: F,
    pub w: F,
}

impl<F: Scalar> Block<F> {
    fn add(&mut self, other: &Block<F>) {
        self.mass = self.mass + other.mass;
        self.w = self.w + other.w;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ClusterStat<F> {
    pub members: Vec<usize>,
    pub mass: F,
    /// Blocks keyed by the opposite-side cluster slot.
    pub blocks: BTreeMap<usize, Block<F>>,
}

/// Block statistics for both sides, indexed by dense cluster slot.
/// Merged-away slots become `None`.
#[derive(Debug, Clone)]
pub struct CoClusterStats<F> {
    kind: LossKind,
    sides: [Vec<Option<ClusterStat<F>>>; 2],
}

impl<F: Scalar> CoClusterStats<F> {
    /// `row_slot[i]` / `col_slot[j]` give the slot of every index; slots must
    /// be dense in `0..n_row_slots` / `0..n_col_slots`.
    pub fn new(
        matrix: &ExplanationMatrix<F>,
        row_slot: &[usize],
        col_slot: &[usize],
        n_row_slots: usize,
        n_col_slots: usize,
        kind: LossKind,
    ) -> Self {
        let p_r = matrix.data().row_sums();
        let p_c = matrix.data().col_sums();
        let empty = |n: usize| -> Vec<ClusterStat<F>> {
            (0..n)
                .map(|_| ClusterStat {
                    members: Vec::new(),
                    mass: F::zero(),
                    blocks: BTreeMap::new(),
                })
                .collect()
        };
        let mut rows = empty(n_row_slots);
        let mut cols = empty(n_col_slots);
        for (i, &s) in row_slot.iter().enumerate() {
            rows[s].members.push(i);
            rows[s].mass = rows[s].mass + p_r[i];
        }
        for (j, &s) in col_slot.iter().enumerate() {
            cols[s].members.push(j);
            cols[s].mass = cols[s].mass + p_c[j];
        }
        for e in matrix.entries() {
            let (a, b) = (row_slot[e.row], col_slot[e.col]);
            let block = Block {
                mass: e.value,
                w: e.value * (e.value / (p_r[e.row] * p_c[e.col])).log2(),
            };
            accumulate(&mut rows[a].blocks, b, &block);
            accumulate(&mut cols[b].blocks, a, &block);
        }
        Self {
            kind,
            sides: [
                rows.into_iter().map(Some).collect(),
                cols.into_iter().map(Some).collect(),
            ],
        }
    }

    /// Slots follow the clustering's cluster order.
    pub fn from_clustering(matrix: &ExplanationMatrix<F>, clustering: &Clustering, kind: LossKind) -> Self {
        let row_slot = clustering.positions(Side::Rows, matrix.n_rows());
        let col_slot = clustering.positions(Side::Cols, matrix.n_cols());
        Self::new(
            matrix,
            &row_slot,
            &col_slot,
            clustering.rows.len(),
            clustering.cols.len(),
            kind,
        )
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub(crate) fn stat(&self, side: Side, slot: usize) -> Option<&ClusterStat<F>> {
        self.sides[side.index()].get(slot).and_then(Option::as_ref)
    }

    pub fn members(&self, side: Side, slot: usize) -> Option<&[usize]> {
        self.stat(side, slot).map(|s| s.members.as_slice())
    }

    pub fn mass(&self, side: Side, slot: usize) -> F {
        self.stat(side, slot).map_or(F::zero(), |s| s.mass)
    }

    pub fn is_live(&self, side: Side, slot: usize) -> bool {
        self.stat(side, slot).is_some()
    }

    pub fn live_slots(&self, side: Side) -> impl Iterator<Item = usize> + '_ {
        self.sides[side.index()]
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.as_ref().map(|_| k))
    }

    pub fn n_live(&self, side: Side) -> usize {
        self.live_slots(side).count()
    }

    /// Weight applied to a slice's summed block losses.
    fn slice_weight(&self, side: Side, mass: F) -> F {
        match self.kind {
            LossKind::Marginalized => {
                if mass > F::zero() {
                    F::one() / mass
                } else {
                    F::zero()
                }
            }
            LossKind::Raw => F::one(),
            LossKind::WholeMatrix => match side {
                Side::Rows => F::one(),
                Side::Cols => F::zero(),
            },
        }
    }

    fn block_loss(block: &Block<F>, own_mass: F, other_mass: F) -> F {
        block.w - block.mass * (block.mass / (own_mass * other_mass)).log2()
    }

    pub fn slice_loss(&self, side: Side, slot: usize) -> F {
        let Some(stat) = self.stat(side, slot) else {
            return F::zero();
        };
        let other = &self.sides[side.other().index()];
        let sum: F = stat
            .blocks
            .iter()
            .map(|(&x, blk)| {
                let other_mass = other[x].as_ref().expect("block keys are live").mass;
                Self::block_loss(blk, stat.mass, other_mass)
            })
            .sum();
        self.slice_weight(side, stat.mass) * sum
    }

    pub fn total_loss(&self) -> F {
        let rows: F = self.live_slots(Side::Rows).map(|k| self.slice_loss(Side::Rows, k)).sum();
        let cols: F = self.live_slots(Side::Cols).map(|k| self.slice_loss(Side::Cols, k)).sum();
        rows + cols
    }

    /// `D_after − D_before` for merging slots `a` and `b` on `side`.
    /// Cost is linear in the two clusters' block counts.
    pub fn merge_loss_increase(&self, side: Side, a: usize, b: usize) -> F {
        let sa = self.stat(side, a).expect("live slot");
        let sb = self.stat(side, b).expect("live slot");
        let other = &self.sides[side.other().index()];
        let other_side = side.other();
        let mu = sa.mass + sb.mass;

        let (mut own_a, mut own_b, mut own_u, mut cross) = (F::zero(), F::zero(), F::zero(), F::zero());
        let mut visit = |x: usize, ba: Option<&Block<F>>, bb: Option<&Block<F>>| {
            let ox = other[x].as_ref().expect("block keys are live").mass;
            let la = ba.map_or(F::zero(), |blk| Self::block_loss(blk, sa.mass, ox));
            let lb = bb.map_or(F::zero(), |blk| Self::block_loss(blk, sb.mass, ox));
            let mut merged = Block {
                mass: F::zero(),
                w: F::zero(),
            };
            if let Some(blk) = ba {
                merged.add(blk);
            }
            if let Some(blk) = bb {
                merged.add(blk);
            }
            let lu = Self::block_loss(&merged, mu, ox);
            own_a = own_a + la;
            own_b = own_b + lb;
            own_u = own_u + lu;
            cross = cross + self.slice_weight(other_side, ox) * (lu - la - lb);
        };

        let mut ia = sa.blocks.iter().peekable();
        let mut ib = sb.blocks.iter().peekable();
        loop {
            match (ia.peek(), ib.peek()) {
                (Some(&(&xa, blk_a)), Some(&(&xb, blk_b))) => {
                    if xa == xb {
                        visit(xa, Some(blk_a), Some(blk_b));
                        ia.next();
                        ib.next();
                    } else if xa < xb {
                        visit(xa, Some(blk_a), None);
                        ia.next();
                    } else {
                        visit(xb, None, Some(blk_b));
                        ib.next();
                    }
                }
                (Some(&(&xa, blk_a)), None) => {
                    visit(xa, Some(blk_a), None);
                    ia.next();
                }
                (None, Some(&(&xb, blk_b))) => {
                    visit(xb, None, Some(blk_b));
                    ib.next();
                }
                (None, None) => break,
            }
        }
        self.slice_weight(side, mu) * own_u
            - self.slice_weight(side, sa.mass) * own_a
            - self.slice_weight(side, sb.mass) * own_b
            + cross
    }

    /// Folds `absorbed` into `survivor` on `side`.
    pub fn merge(&mut self, side: Side, survivor: usize, absorbed: usize) {
        assert_ne!(survivor, absorbed, "cannot merge a slot with itself");
        let gone = self.sides[side.index()][absorbed]
            .take()
            .expect("absorbed slot is live");
        {
            let other = &mut self.sides[side.other().index()];
            for (&x, blk) in &gone.blocks {
                let ostat = other[x].as_mut().expect("block keys are live");
                ostat.blocks.remove(&absorbed);
                accumulate(&mut ostat.blocks, survivor, blk);
            }
        }
        let keep = self.sides[side.index()][survivor]
            .as_mut()
            .expect("survivor slot is live");
        keep.mass = keep.mass + gone.mass;
        keep.members.extend_from_slice(&gone.members);
        for (&x, blk) in &gone.blocks {
            accumulate(&mut keep.blocks, x, blk);
        }
    }

    /// Current partition as a canonical clustering.
    pub fn clustering(&self) -> Clustering {
        let collect = |side: Side| {
            self.sides[side.index()]
                .iter()
                .flatten()
                .map(|s| crate::cost::Cluster {
                    id: 0,
                    members: s.members.clone(),
                })
                .collect()
        };
        Clustering {
            rows: collect(Side::Rows),
            cols: collect(Side::Cols),
        }
        .canonical()
    }
}

fn accumulate<F: Scalar>(map: &mut BTreeMap<usize, Block<F>>, key: usize, block: &Block<F>) {
    map.entry(key)
        .and_modify(|b| b.add(block))
        .or_insert(*block);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{loss_with, Clustering};
    use crate::fixtures::worked_example;

    #[test]
    fn incremental_total_matches_direct_route() {
        let e = worked_example::<f64>();
        for kind in [LossKind::Marginalized, LossKind::Raw, LossKind::WholeMatrix] {
            for (rl, cl) in [
                (vec![0, 0, 1, 1], vec![0, 0, 1, 1]),
                (vec![0, 1, 2, 3], vec![0, 1, 2, 3]),
                (vec![0, 0, 0, 1], vec![1, 0, 1, 0]),
            ] {
                let c = Clustering::from_labels(&rl, &cl);
                let s = CoClusterStats::from_clustering(&e, &c, kind);
                let direct = loss_with(&e, &c, kind).unwrap().total;
                assert!((s.total_loss() - direct).abs() < 1e-12, "{kind:?} {rl:?} {cl:?}");
            }
        }
    }

    #[test]
    fn merge_updates_both_sides() {
        let e = worked_example::<f64>();
        let c = Clustering::singletons(4, 4);
        let mut s = CoClusterStats::from_clustering(&e, &c, LossKind::Marginalized);
        let before = s.total_loss();
        let delta = s.merge_loss_increase(Side::Rows, 2, 3);
        s.merge(Side::Rows, 2, 3);
        assert!((s.total_loss() - before - delta).abs() < 1e-12);
        let expect = Clustering::from_labels(&[0, 1, 2, 2], &[0, 1, 2, 3]);
        assert_eq!(s.clustering(), expect);
        let direct = loss_with(&e, &expect, LossKind::Marginalized).unwrap().total;
        assert!((s.total_loss() - direct).abs() < 1e-12);
    }
}
