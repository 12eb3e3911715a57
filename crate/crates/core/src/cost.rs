//! Information-theoretic objective of a co-clustering.
//!
//! A clustering compresses the joint distribution `p(r, c)` into the
//! co-cluster table `p(r̂, ĉ)`. The approximation
//! `q(r, c) = p(r̂, ĉ) · p(r)/p(r̂) · p(c)/p(ĉ)` is compared with `p` slice by
//! slice: every row cluster and every column cluster contributes the KL
//! divergence between the conditional distributions of `p` and `q` inside
//! it. The total cost adds `β` bits per cluster on each side. All logarithms
//! are base 2.
//!
//! The functions here take the direct route (materialize `q` entry by
//! entry). [`merge_delta`] uses the incremental co-cluster statistics in
//! [`crate::stats`] instead.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExplanationMatrix;
use crate::scalar::Scalar;
use crate::stats::CoClusterStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Rows,
    Cols,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Rows => Side::Cols,
            Side::Cols => Side::Rows,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Rows => "row",
            Side::Cols => "column",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Side::Rows => 0,
            Side::Cols => 1,
        }
    }
}

/// Which reading of the slice loss to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Sum over row and column clusters of the KL divergence between the
    /// slice-conditional distributions.
    #[default]
    Marginalized,
    /// Same slices, but restricted rather than conditioned: each slice keeps
    /// its raw mass. Equals twice the whole-matrix divergence.
    Raw,
    /// Plain KL divergence of `p` from `q` over the whole matrix.
    WholeMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u32,
    pub members: Vec<usize>,
}

/// A partition of row indices and a partition of column indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub rows: Vec<Cluster>,
    pub cols: Vec<Cluster>,
}

impl Clustering {
    pub fn singletons(n_rows: usize, n_cols: usize) -> Self {
        let one = |n: usize| {
            (0..n)
                .map(|i| Cluster {
                    id: i as u32 + 1,
                    members: vec![i],
                })
                .collect()
        };
        Self {
            rows: one(n_rows),
            cols: one(n_cols),
        }
    }

    /// Builds a canonical clustering from per-index labels.
    pub fn from_labels(row_labels: &[usize], col_labels: &[usize]) -> Self {
        Self {
            rows: clusters_from_labels(row_labels),
            cols: clusters_from_labels(col_labels),
        }
        .canonical()
    }

    pub fn side(&self, side: Side) -> &[Cluster] {
        match side {
            Side::Rows => &self.rows,
            Side::Cols => &self.cols,
        }
    }

    pub fn n_clusters(&self, side: Side) -> usize {
        self.side(side).len()
    }

    pub fn find(&self, side: Side, id: u32) -> Option<&Cluster> {
        self.side(side).iter().find(|c| c.id == id)
    }

    /// Checks that both sides partition their index sets with nonempty
    /// clusters and unique ids.
    pub fn validate(&self, n_rows: usize, n_cols: usize) -> Result<()> {
        check_partition(&self.rows, n_rows, Side::Rows)?;
        check_partition(&self.cols, n_cols, Side::Cols)
    }

    /// Position of the containing cluster for every index on `side`.
    pub fn positions(&self, side: Side, len: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; len];
        for (k, c) in self.side(side).iter().enumerate() {
            for &i in &c.members {
                if i < len {
                    out[i] = k;
                }
            }
        }
        out
    }

    /// Sorted members, clusters ordered by smallest member, ids renumbered from 1.
    pub fn canonical(&self) -> Self {
        let canon = |clusters: &[Cluster]| {
            let mut v: Vec<Vec<usize>> = clusters
                .iter()
                .map(|c| {
                    let mut m = c.members.clone();
                    m.sort_unstable();
                    m
                })
                .collect();
            v.sort();
            v.into_iter()
                .enumerate()
                .map(|(k, members)| Cluster {
                    id: k as u32 + 1,
                    members,
                })
                .collect()
        };
        Self {
            rows: canon(&self.rows),
            cols: canon(&self.cols),
        }
    }
}

fn clusters_from_labels(labels: &[usize]) -> Vec<Cluster> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
        .into_values()
        .enumerate()
        .map(|(k, members)| Cluster {
            id: k as u32 + 1,
            members,
        })
        .collect()
}

fn check_partition(clusters: &[Cluster], len: usize, side: Side) -> Result<()> {
    let mut seen = vec![false; len];
    let mut ids = BTreeSet::new();
    for c in clusters {
        if !ids.insert(c.id) {
            return Err(Error::Shape(format!("duplicate {} cluster id {}", side.name(), c.id)));
        }
        if c.members.is_empty() {
            return Err(Error::Shape(format!("{} cluster {} is empty", side.name(), c.id)));
        }
        for &i in &c.members {
            if i >= len {
                return Err(Error::Shape(format!(
                    "{} cluster {} references index {i} of {len}",
                    side.name(),
                    c.id
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Shape(format!("{} {i} appears in two clusters", side.name())));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Shape(format!("{} {i} is not in any cluster", side.name())));
    }
    Ok(())
}

/// Singleton and cluster-level marginal masses of a clustered matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals<F> {
    pub p_r: Vec<F>,
    pub p_c: Vec<F>,
    /// Mass per row cluster, in clustering order.
    pub p_rhat: Vec<F>,
    pub p_chat: Vec<F>,
    /// Co-cluster mass `p_hat[row cluster][col cluster]`.
    pub p_hat: Vec<Vec<F>>,
    pub row_ids: Vec<u32>,
    pub col_ids: Vec<u32>,
    pub row_of: Vec<usize>,
    pub col_of: Vec<usize>,
}

impl<F: Scalar> Marginals<F> {
    /// Co-cluster mass looked up by cluster ids.
    pub fn block_mass(&self, row_id: u32, col_id: u32) -> Option<F> {
        let a = self.row_ids.iter().position(|&i| i == row_id)?;
        let b = self.col_ids.iter().position(|&i| i == col_id)?;
        Some(self.p_hat[a][b])
    }
}

pub fn marginals<F: Scalar>(matrix: &ExplanationMatrix<F>, clustering: &Clustering) -> Result<Marginals<F>> {
    clustering.validate(matrix.n_rows(), matrix.n_cols())?;
    let row_of = clustering.positions(Side::Rows, matrix.n_rows());
    let col_of = clustering.positions(Side::Cols, matrix.n_cols());
    let p_r = matrix.data().row_sums();
    let p_c = matrix.data().col_sums();
    let nr = clustering.rows.len();
    let nc = clustering.cols.len();
    let mut p_hat = vec![vec![F::zero(); nc]; nr];
    for e in matrix.entries() {
        let cell = &mut p_hat[row_of[e.row]][col_of[e.col]];
        *cell = *cell + e.value;
    }
    let mut p_rhat = vec![F::zero(); nr];
    let mut p_chat = vec![F::zero(); nc];
    for (i, &k) in row_of.iter().enumerate() {
        p_rhat[k] = p_rhat[k] + p_r[i];
    }
    for (j, &k) in col_of.iter().enumerate() {
        p_chat[k] = p_chat[k] + p_c[j];
    }
    Ok(Marginals {
        p_r,
        p_c,
        p_rhat,
        p_chat,
        p_hat,
        row_ids: clustering.rows.iter().map(|c| c.id).collect(),
        col_ids: clustering.cols.iter().map(|c| c.id).collect(),
        row_of,
        col_of,
    })
}

/// Entry of the approximation matrix implied by the clustering.
pub fn approx_entry<F: Scalar>(m: &Marginals<F>, row: usize, col: usize) -> Result<F> {
    if row >= m.p_r.len() || col >= m.p_c.len() {
        return Err(Error::Shape(format!(
            "({row}, {col}) outside a {}x{} matrix",
            m.p_r.len(),
            m.p_c.len()
        )));
    }
    let a = m.row_of[row];
    let b = m.col_of[col];
    if m.p_rhat[a] <= F::zero() {
        return Err(Error::ZeroMass {
            side: Side::Rows.name(),
            id: m.row_ids[a],
        });
    }
    if m.p_chat[b] <= F::zero() {
        return Err(Error::ZeroMass {
            side: Side::Cols.name(),
            id: m.col_ids[b],
        });
    }
    Ok(m.p_hat[a][b] * (m.p_r[row] / m.p_rhat[a]) * (m.p_c[col] / m.p_chat[b]))
}

/// `Σ p log2(p/q)` over aligned distributions, skipping positions where `p = 0`.
pub fn kl_divergence<F: Scalar>(p: &[F], q: &[F]) -> Result<F> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    let mut acc = F::zero();
    for (k, (&px, &qx)) in p.iter().zip(q).enumerate() {
        if px <= F::zero() {
            continue;
        }
        if qx <= F::zero() {
            return Err(Error::InfiniteDivergence(k));
        }
        acc = acc + px * (px / qx).log2();
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<F> {
    pub total: F,
    pub row_slices: BTreeMap<u32, F>,
    pub col_slices: BTreeMap<u32, F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown<F> {
    pub model_cost: F,
    pub loss: F,
    pub total: F,
    pub row_slices: BTreeMap<u32, F>,
    pub col_slices: BTreeMap<u32, F>,
}

/// Marginalized loss with per-slice detail.
pub fn marginal_loss<F: Scalar>(matrix: &ExplanationMatrix<F>, clustering: &Clustering) -> Result<LossBreakdown<F>> {
    loss_with(matrix, clustering, LossKind::Marginalized)
}

pub fn loss_with<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    clustering: &Clustering,
    kind: LossKind,
) -> Result<LossBreakdown<F>> {
    let m = marginals(matrix, clustering)?;
    let nr = clustering.rows.len();
    let nc = clustering.cols.len();
    let mut row_p: Vec<Vec<F>> = vec![Vec::new(); nr];
    let mut row_q: Vec<Vec<F>> = vec![Vec::new(); nr];
    let mut col_p: Vec<Vec<F>> = vec![Vec::new(); nc];
    let mut col_q: Vec<Vec<F>> = vec![Vec::new(); nc];
    for e in matrix.entries() {
        let q = approx_entry(&m, e.row, e.col)?;
        let (a, b) = (m.row_of[e.row], m.col_of[e.col]);
        row_p[a].push(e.value);
        row_q[a].push(q);
        col_p[b].push(e.value);
        col_q[b].push(q);
    }

    let slice = |p: &[F], q: &[F], mass: F, conditional: bool| -> Result<F> {
        if p.is_empty() || mass <= F::zero() {
            return Ok(F::zero());
        }
        if conditional {
            let pc: Vec<F> = p.iter().map(|&x| x / mass).collect();
            let qc: Vec<F> = q.iter().map(|&x| x / mass).collect();
            kl_divergence(&pc, &qc)
        } else {
            kl_divergence(p, q)
        }
    };

    let conditional = kind == LossKind::Marginalized;
    let mut row_slices = BTreeMap::new();
    let mut col_slices = BTreeMap::new();
    let mut total = F::zero();
    for a in 0..nr {
        let v = slice(&row_p[a], &row_q[a], m.p_rhat[a], conditional)?;
        total = total + v;
        row_slices.insert(m.row_ids[a], v);
    }
    if kind != LossKind::WholeMatrix {
        for b in 0..nc {
            let v = slice(&col_p[b], &col_q[b], m.p_chat[b], conditional)?;
            total = total + v;
            col_slices.insert(m.col_ids[b], v);
        }
    }
    Ok(LossBreakdown {
        total,
        row_slices,
        col_slices,
    })
}

/// Model cost plus marginalized loss.
pub fn total_cost<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    clustering: &Clustering,
    beta_rows: F,
    beta_cols: F,
) -> Result<CostBreakdown<F>> {
    total_cost_with(matrix, clustering, beta_rows, beta_cols, LossKind::Marginalized)
}

pub fn total_cost_with<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    clustering: &Clustering,
    beta_rows: F,
    beta_cols: F,
    kind: LossKind,
) -> Result<CostBreakdown<F>> {
    check_betas(beta_rows, beta_cols)?;
    let loss = loss_with(matrix, clustering, kind)?;
    let model_cost = model_cost(
        clustering.rows.len(),
        clustering.cols.len(),
        beta_rows,
        beta_cols,
    );
    Ok(CostBreakdown {
        model_cost,
        loss: loss.total,
        total: model_cost + loss.total,
        row_slices: loss.row_slices,
        col_slices: loss.col_slices,
    })
}

pub(crate) fn model_cost<F: Scalar>(n_rows: usize, n_cols: usize, beta_rows: F, beta_cols: F) -> F {
    beta_rows * F::of_usize(n_rows) + beta_cols * F::of_usize(n_cols)
}

pub(crate) fn check_betas<F: Scalar>(beta_rows: F, beta_cols: F) -> Result<()> {
    if !(beta_rows >= F::zero()) || !(beta_cols >= F::zero()) {
        return Err(Error::Config(format!(
            "cluster penalties must be nonnegative, got {beta_rows} and {beta_cols}"
        )));
    }
    Ok(())
}

/// Cost reduction of merging clusters `a` and `b` on `side`:
/// `β − (D_after − D_before)`. Positive means the merge lowers the total cost.
pub fn merge_delta<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    clustering: &Clustering,
    side: Side,
    a: u32,
    b: u32,
    beta: F,
) -> Result<F> {
    merge_delta_with(matrix, clustering, side, a, b, beta, LossKind::Marginalized)
}

pub fn merge_delta_with<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    clustering: &Clustering,
    side: Side,
    a: u32,
    b: u32,
    beta: F,
    kind: LossKind,
) -> Result<F> {
    check_betas(beta, F::zero())?;
    clustering.validate(matrix.n_rows(), matrix.n_cols())?;
    let missing: Vec<String> = [a, b]
        .iter()
        .filter(|&&id| clustering.find(side, id).is_none())
        .map(|id| format!("{} cluster {id}", side.name()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::NotFound(missing));
    }
    if a == b {
        return Err(Error::Config(format!("cannot merge {} cluster {a} with itself", side.name())));
    }
    let pos = |id: u32| {
        clustering
            .side(side)
            .iter()
            .position(|c| c.id == id)
            .expect("checked above")
    };
    let stats = CoClusterStats::from_clustering(matrix, clustering, kind);
    Ok(beta - stats.merge_loss_increase(side, pos(a), pos(b)))
}
