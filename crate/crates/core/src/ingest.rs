//! Transforms that turn raw explanation exports into explanation matrices.
//!
//! Tabular data is discretized into one-hot logic ranges (quantile bins for
//! numeric attributes, one column per level for categorical ones). Word-level
//! text explanations are folded into topics by taking the maximum.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{default_row_meta, ColMeta, ExplanationMatrix, RowMeta, SparseMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Numeric,
    Ordinal,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttrKind,
    /// Level order for ordinal attributes with non-numeric values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    /// Column holding this attribute's attribution; its magnitude replaces
    /// the 1 of the active logic column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
}

/// Sidecar schema for a tabular CSV export.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSchema {
    pub attributes: Vec<AttributeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(|v| v.trim().to_string()).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::NotFound(vec![format!("column {name}")]))
    }
}

/// Bins learned for one attribute, kept so new data can reuse them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BinSpec {
    /// `edges.len() - 1` bins; a value lands in the last bin whose lower edge
    /// it reaches, and the top bin is closed.
    Quantile { attr: String, edges: Vec<f64> },
    Levels { attr: String, levels: Vec<String> },
}

impl BinSpec {
    pub fn attr(&self) -> &str {
        match self {
            BinSpec::Quantile { attr, .. } | BinSpec::Levels { attr, .. } => attr,
        }
    }

    pub fn n_bins(&self) -> usize {
        match self {
            BinSpec::Quantile { edges, .. } => edges.len().saturating_sub(1).max(1),
            BinSpec::Levels { levels, .. } => levels.len(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            BinSpec::Quantile { attr, edges } if edges.len() < 2 || edges[0] == edges[edges.len() - 1] => {
                let v = edges.first().copied().unwrap_or(0.0);
                vec![format!("{attr} ∈ [{v},{v}]")]
            }
            BinSpec::Quantile { attr, edges } => (0..edges.len() - 1)
                .map(|k| {
                    let close = if k + 2 == edges.len() { ']' } else { ')' };
                    format!("{attr} ∈ [{},{}{close}", edges[k], edges[k + 1])
                })
                .collect(),
            BinSpec::Levels { attr, levels } => levels.iter().map(|l| format!("{attr} = {l}")).collect(),
        }
    }

    fn bin_numeric(edges: &[f64], x: f64) -> usize {
        if edges.len() < 2 {
            return 0;
        }
        let inner = &edges[1..edges.len() - 1];
        inner.partition_point(|&e| e <= x)
    }
}

/// Sturges' rule: `⌈1 + log2 n⌉` bins.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    (1.0 + (n as f64).log2()).ceil() as usize
}

/// Linear-interpolation quantile of ascending `sorted` at `q ∈ [0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretized<F> {
    pub matrix: SparseMatrix<F>,
    pub rows: Vec<RowMeta>,
    pub cols: Vec<ColMeta>,
    pub bins: Vec<BinSpec>,
}

fn ordinal_rank(spec: &AttributeSpec, raw: &str) -> Result<f64> {
    if let Some(levels) = &spec.levels {
        return levels
            .iter()
            .position(|l| l == raw)
            .map(|p| p as f64)
            .ok_or_else(|| Error::InvalidValue(format!("{}: unknown level {raw:?}", spec.name)));
    }
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidValue(format!("{}: {raw:?} is not a number", spec.name)))
}

fn learn_bins(spec: &AttributeSpec, values: &[&str]) -> Result<BinSpec> {
    match spec.kind {
        AttrKind::Categorical => {
            let levels: BTreeSet<&str> = values.iter().copied().collect();
            Ok(BinSpec::Levels {
                attr: spec.name.clone(),
                levels: levels.into_iter().map(str::to_string).collect(),
            })
        }
        AttrKind::Numeric | AttrKind::Ordinal => {
            let mut xs = values
                .iter()
                .map(|v| ordinal_rank(spec, v))
                .collect::<Result<Vec<f64>>>()?;
            xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            if xs[0] == xs[xs.len() - 1] {
                warn!("attribute {} is constant; using a single bin", spec.name);
                return Ok(BinSpec::Quantile {
                    attr: spec.name.clone(),
                    edges: vec![xs[0], xs[0]],
                });
            }
            let k = sturges_bins(xs.len());
            Ok(BinSpec::Quantile {
                attr: spec.name.clone(),
                edges: (0..=k).map(|i| quantile(&xs, i as f64 / k as f64)).collect(),
            })
        }
    }
}

/// One-hot encodes every attribute in `schema`. With `bins = None` the bins
/// are learned from `table`; otherwise the given bins are reused.
pub fn discretize_tabular<F: Scalar>(
    table: &Table,
    schema: &TabularSchema,
    bins: Option<&[BinSpec]>,
) -> Result<Discretized<F>> {
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    if let Some((i, r)) = table.rows.iter().enumerate().find(|(_, r)| r.len() != table.headers.len()) {
        return Err(Error::Parse(format!(
            "row {} has {} fields, header has {}",
            i + 1,
            r.len(),
            table.headers.len()
        )));
    }
    if let Some(b) = bins {
        if b.len() != schema.attributes.len() || b.iter().zip(&schema.attributes).any(|(b, a)| b.attr() != a.name) {
            return Err(Error::Config("stored bins do not match the schema attributes".into()));
        }
    }

    let mut learned = Vec::with_capacity(schema.attributes.len());
    let mut cols = Vec::new();
    let mut triplets = Vec::new();
    for (a, spec) in schema.attributes.iter().enumerate() {
        let idx = table.column(&spec.name)?;
        let weight_idx = spec.weight.as_deref().map(|w| table.column(w)).transpose()?;
        let values: Vec<&str> = table.rows.iter().map(|r| r[idx].as_str()).collect();
        let bin = match bins {
            Some(b) => b[a].clone(),
            None => learn_bins(spec, &values)?,
        };
        let offset = cols.len();
        for name in bin.names() {
            cols.push(ColMeta {
                id: format!("c{}", cols.len() + 1),
                name,
                group: Some(spec.name.clone()),
            });
        }
        for (i, raw) in values.iter().enumerate() {
            let k = match &bin {
                BinSpec::Levels { levels, .. } => levels
                    .iter()
                    .position(|l| l == raw)
                    .ok_or_else(|| Error::InvalidValue(format!("{}: unseen level {raw:?}", spec.name)))?,
                BinSpec::Quantile { edges, .. } => BinSpec::bin_numeric(edges, ordinal_rank(spec, raw)?),
            };
            let value = match weight_idx {
                Some(w) => table.rows[i][w]
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidValue(format!("row {}: bad weight {:?}", i + 1, table.rows[i][w])))?
                    .abs(),
                None => 1.0,
            };
            triplets.push((i, offset + k, F::of(value)));
        }
        learned.push(bin);
    }

    let mut rows = default_row_meta(n);
    for (field, column) in [
        (0, &schema.id_column),
        (1, &schema.class_column),
        (2, &schema.pred_column),
    ] {
        if let Some(name) = column {
            let idx = table.column(name)?;
            for (meta, r) in rows.iter_mut().zip(&table.rows) {
                let v = r[idx].clone();
                match field {
                    0 => meta.id = v,
                    1 => meta.class = v,
                    _ => meta.pred = v,
                }
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(n, cols.len(), triplets)?;
    Ok(Discretized {
        matrix,
        rows,
        cols,
        bins: learned,
    })
}

/// Folds word columns into topic columns by taking, per instance, the
/// maximum value among each topic's words, then renormalizes. Words are
/// matched by column id; topics are ordered by name.
pub fn aggregate_topics<F: Scalar>(
    words: &ExplanationMatrix<F>,
    word_to_topic: &BTreeMap<String, String>,
) -> Result<ExplanationMatrix<F>> {
    let unmapped: Vec<String> = words
        .col_meta()
        .iter()
        .filter(|c| !word_to_topic.contains_key(&c.id))
        .map(|c| c.id.clone())
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::UnmappedFeature(unmapped));
    }
    let topics: BTreeSet<&String> = words.col_meta().iter().map(|c| &word_to_topic[&c.id]).collect();
    let topic_index: BTreeMap<&String, usize> = topics.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let col_topic: Vec<usize> = words.col_meta().iter().map(|c| topic_index[&word_to_topic[&c.id]]).collect();

    let mut best: BTreeMap<(usize, usize), F> = BTreeMap::new();
    for e in words.entries() {
        let slot = best.entry((e.row, col_topic[e.col])).or_insert(F::zero());
        *slot = slot.max(e.value);
    }
    let data = SparseMatrix::from_triplets(
        words.n_rows(),
        topics.len(),
        best.into_iter().map(|((r, t), v)| (r, t, v)),
    )?;
    let cols = topics
        .into_iter()
        .map(|t| ColMeta {
            id: t.clone(),
            name: t.clone(),
            group: None,
        })
        .collect();
    ExplanationMatrix::try_new(data, words.row_meta().to_vec(), cols)?.renormalized()
}
