//! Serialized co-cluster summary, filtering and subset extraction.
//!
//! Floats are written at 9 significant digits, so a parsed artifact
//! serializes back to the same bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize, Serializer};

use crate::cost::{Clustering, CostBreakdown, Side};
use crate::error::{Error, Result};
use crate::matrix::{ExplanationMatrix, SparseMatrix};
use crate::scalar::Scalar;

pub const FORMAT: &str = "summary-json v1";
pub const HIST_BINS: usize = 20;

/// Rounds to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn ser_sig9<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(sig9(*x))
}

fn ser_sig9_vec<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|&x| sig9(x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    #[serde(serialize_with = "ser_sig9")]
    pub model: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub loss: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub total: f64,
}

impl<F: Scalar> From<&CostBreakdown<F>> for CostSummary {
    fn from(c: &CostBreakdown<F>) -> Self {
        Self {
            model: c.model_cost.as_f64(),
            loss: c.loss.as_f64(),
            total: c.total.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub format: String,
    pub shape: [usize; 2],
    pub config: serde_json::Value,
    pub seed: u64,
    pub cost: CostSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub index: usize,
    pub id: String,
    pub class: String,
    pub pred: String,
    /// Indices of the features with a nonzero value for this instance.
    pub features: Vec<usize>,
}

impl Instance {
    pub fn correct(&self) -> bool {
        self.class == self.pred
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCluster {
    pub cluster: u32,
    #[serde(serialize_with = "ser_sig9")]
    pub mass: f64,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub index: usize,
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColCluster {
    pub cluster: u32,
    #[serde(serialize_with = "ser_sig9")]
    pub mass: f64,
    pub features: Vec<Feature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub r: u32,
    pub c: u32,
    #[serde(serialize_with = "ser_sig9")]
    pub mass: f64,
    pub nnz: usize,
    #[serde(serialize_with = "ser_sig9")]
    pub mean: f64,
    /// Means of 20 equal-count bins over the descending-sorted values.
    #[serde(serialize_with = "ser_sig9_vec")]
    pub hist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub class: String,
    pub cluster: u32,
    pub correct: usize,
    pub incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendFeature {
    pub index: usize,
    pub id: String,
    pub name: String,
    #[serde(serialize_with = "ser_sig9")]
    pub mass: f64,
    pub nnz: usize,
    /// Upper edge of the histogram range; bins split `[0, max]` evenly.
    #[serde(serialize_with = "ser_sig9")]
    pub max: f64,
    pub hist: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Legend {
    pub cluster: u32,
    /// Ordered by descending mass.
    pub features: Vec<LegendFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryArtifact {
    pub meta: Meta,
    pub rows: Vec<RowCluster>,
    pub cols: Vec<ColCluster>,
    pub blocks: Vec<BlockSummary>,
    pub flows: Vec<Flow>,
    pub legends: Vec<Legend>,
}

impl SummaryArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn n_instances(&self) -> usize {
        self.meta.shape[0]
    }

    pub fn n_features(&self) -> usize {
        self.meta.shape[1]
    }

    pub fn row_cluster(&self, id: u32) -> Option<&RowCluster> {
        self.rows.iter().find(|r| r.cluster == id)
    }

    pub fn col_cluster(&self, id: u32) -> Option<&ColCluster> {
        self.cols.iter().find(|c| c.cluster == id)
    }

    fn instances(&self) -> impl Iterator<Item = (u32, &Instance)> {
        self.rows
            .iter()
            .flat_map(|r| r.instances.iter().map(move |i| (r.cluster, i)))
    }
}

/// Values sorted high to low, averaged over `HIST_BINS` contiguous bins of
/// near-equal count. A bin with no values repeats the value at its start.
pub fn equal_count_bins(sorted_desc: &[f64]) -> Vec<f64> {
    let n = sorted_desc.len();
    if n == 0 {
        return vec![0.0; HIST_BINS];
    }
    (0..HIST_BINS)
        .map(|k| {
            let lo = k * n / HIST_BINS;
            let hi = (k + 1) * n / HIST_BINS;
            if hi > lo {
                sorted_desc[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            } else {
                sorted_desc[lo.min(n - 1)]
            }
        })
        .collect()
}

/// Counts of `values` in `HIST_BINS` equal-width bins over `[0, max]`.
pub fn value_histogram(values: &[f64], max: f64) -> Vec<usize> {
    let mut out = vec![0; HIST_BINS];
    for &v in values {
        let k = if max > 0.0 {
            ((v / max) * HIST_BINS as f64).floor() as usize
        } else {
            0
        };
        out[k.min(HIST_BINS - 1)] += 1;
    }
    out
}

fn compute_flows<'a>(instances: impl Iterator<Item = (u32, &'a Instance)>) -> Vec<Flow> {
    let mut counts: BTreeMap<(String, u32), (usize, usize)> = BTreeMap::new();
    for (cluster, inst) in instances {
        let slot = counts.entry((inst.class.clone(), cluster)).or_default();
        if inst.correct() {
            slot.0 += 1;
        } else {
            slot.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|((class, cluster), (correct, incorrect))| Flow {
            class,
            cluster,
            correct,
            incorrect,
        })
        .collect()
}

/// Builds the artifact for `matrix` under `clustering`. Cluster ids follow
/// the canonical order, so the cluster holding the first instance is 1.
pub fn build_summary<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    clustering: &Clustering,
    cost: &CostBreakdown<F>,
    config: serde_json::Value,
    seed: u64,
) -> Result<SummaryArtifact> {
    let (m, n) = (matrix.n_rows(), matrix.n_cols());
    clustering.validate(m, n)?;
    let clustering = clustering.canonical();
    let row_pos = clustering.positions(Side::Rows, m);
    let col_pos = clustering.positions(Side::Cols, n);
    let data = matrix.data();
    let p_r = data.row_sums();
    let p_c = data.col_sums();

    let mut support: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut block_values: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut feature_values: Vec<Vec<f64>> = vec![Vec::new(); n];
    for e in data.entries() {
        support[e.row].push(e.col);
        let v = e.value.as_f64();
        block_values
            .entry((row_pos[e.row], col_pos[e.col]))
            .or_default()
            .push(v);
        feature_values[e.col].push(v);
    }

    let rows: Vec<RowCluster> = clustering
        .rows
        .iter()
        .map(|c| RowCluster {
            cluster: c.id,
            mass: c.members.iter().map(|&i| p_r[i].as_f64()).sum(),
            instances: c
                .members
                .iter()
                .map(|&i| {
                    let meta = &matrix.row_meta()[i];
                    Instance {
                        index: i,
                        id: meta.id.clone(),
                        class: meta.class.clone(),
                        pred: meta.pred.clone(),
                        features: std::mem::take(&mut support[i]),
                    }
                })
                .collect(),
        })
        .collect();

    let feature = |j: usize| {
        let meta = &matrix.col_meta()[j];
        Feature {
            index: j,
            id: meta.id.clone(),
            name: meta.name.clone(),
            group: meta.group.clone(),
        }
    };
    let cols: Vec<ColCluster> = clustering
        .cols
        .iter()
        .map(|c| ColCluster {
            cluster: c.id,
            mass: c.members.iter().map(|&j| p_c[j].as_f64()).sum(),
            features: c.members.iter().map(|&j| feature(j)).collect(),
        })
        .collect();

    let mut blocks: Vec<BlockSummary> = block_values
        .into_iter()
        .map(|((a, b), mut values)| {
            values.sort_by(|x, y| y.partial_cmp(x).expect("finite values"));
            let mass: f64 = values.iter().sum();
            BlockSummary {
                r: clustering.rows[a].id,
                c: clustering.cols[b].id,
                mass,
                nnz: values.len(),
                mean: mass / values.len() as f64,
                hist: equal_count_bins(&values),
            }
        })
        .collect();
    blocks.sort_by(|x, y| {
        x.r.cmp(&y.r)
            .then(y.mass.partial_cmp(&x.mass).expect("finite masses"))
            .then(x.c.cmp(&y.c))
    });

    let legends = clustering
        .cols
        .iter()
        .map(|c| {
            let mut features: Vec<LegendFeature> = c
                .members
                .iter()
                .map(|&j| {
                    let vals = &feature_values[j];
                    let max = vals.iter().copied().fold(0.0, f64::max);
                    let meta = &matrix.col_meta()[j];
                    LegendFeature {
                        index: j,
                        id: meta.id.clone(),
                        name: meta.name.clone(),
                        mass: vals.iter().sum(),
                        nnz: vals.len(),
                        max,
                        hist: value_histogram(vals, max),
                    }
                })
                .collect();
            features.sort_by(|x, y| {
                y.mass
                    .partial_cmp(&x.mass)
                    .expect("finite masses")
                    .then(x.index.cmp(&y.index))
            });
            Legend {
                cluster: c.id,
                features,
            }
        })
        .collect();

    let flows = compute_flows(rows.iter().flat_map(|r| r.instances.iter().map(move |i| (r.cluster, i))));
    Ok(SummaryArtifact {
        meta: Meta {
            format: FORMAT.to_string(),
            shape: [m, n],
            config,
            seed,
            cost: cost.into(),
        },
        rows,
        cols,
        blocks,
        flows,
        legends,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    #[default]
    Any,
    Correct,
    Incorrect,
}

impl Outcome {
    fn admits(self, inst: &Instance) -> bool {
        match self {
            Outcome::Any => true,
            Outcome::Correct => inst.correct(),
            Outcome::Incorrect => !inst.correct(),
        }
    }
}

/// Instance predicates (all must hold) followed by cluster thresholds.
/// Feature names refer to feature ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub classes: Option<BTreeSet<String>>,
    pub features: Option<BTreeSet<String>>,
    pub outcome: Outcome,
    pub min_cluster_size: usize,
    pub min_mean_value: f64,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_mean_value >= 0.0) || !self.min_mean_value.is_finite() {
            return Err(Error::Config(format!(
                "min_mean_value must be a nonnegative number, got {}",
                self.min_mean_value
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFill {
    pub class: String,
    pub total: usize,
    pub retained: usize,
    #[serde(serialize_with = "ser_sig9")]
    pub fill: f64,
}

/// Result of [`apply_filter`]: a reduced artifact plus per-class retained
/// fractions measured against the input artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredView {
    pub spec: FilterSpec,
    pub classes: Vec<ClassFill>,
    pub summary: SummaryArtifact,
}

pub fn apply_filter(artifact: &SummaryArtifact, spec: &FilterSpec) -> Result<FilteredView> {
    spec.validate()?;
    let known_classes: BTreeSet<&str> = artifact.instances().map(|(_, i)| i.class.as_str()).collect();
    let mut feature_index: BTreeMap<&str, usize> = BTreeMap::new();
    for f in artifact.cols.iter().flat_map(|c| &c.features) {
        feature_index.insert(f.id.as_str(), f.index);
    }
    let mut missing = Vec::new();
    if let Some(classes) = &spec.classes {
        missing.extend(
            classes
                .iter()
                .filter(|c| !known_classes.contains(c.as_str()))
                .map(|c| format!("class {c}")),
        );
    }
    let selected: Option<BTreeSet<usize>> = spec.features.as_ref().map(|fs| {
        fs.iter()
            .filter_map(|f| match feature_index.get(f.as_str()) {
                Some(&j) => Some(j),
                None => {
                    missing.push(format!("feature {f}"));
                    None
                }
            })
            .collect()
    });
    if !missing.is_empty() {
        return Err(Error::NotFound(missing));
    }

    let keep = |inst: &Instance| {
        spec.classes.as_ref().is_none_or(|cs| cs.contains(&inst.class))
            && spec.outcome.admits(inst)
            && selected
                .as_ref()
                .is_none_or(|sel| inst.features.iter().any(|j| sel.contains(j)))
    };

    let rows: Vec<RowCluster> = artifact
        .rows
        .iter()
        .filter_map(|r| {
            let instances: Vec<Instance> = r.instances.iter().filter(|i| keep(i)).cloned().collect();
            (!instances.is_empty() && instances.len() >= spec.min_cluster_size).then_some(RowCluster {
                cluster: r.cluster,
                mass: r.mass,
                instances,
            })
        })
        .collect();
    let visible: BTreeSet<u32> = rows.iter().map(|r| r.cluster).collect();
    let blocks = artifact
        .blocks
        .iter()
        .filter(|b| visible.contains(&b.r) && b.mean >= spec.min_mean_value)
        .cloned()
        .collect();
    let flows = compute_flows(rows.iter().flat_map(|r| r.instances.iter().map(move |i| (r.cluster, i))));

    let mut totals: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (_, inst) in artifact.instances() {
        totals.entry(inst.class.as_str()).or_default().0 += 1;
    }
    for inst in rows.iter().flat_map(|r| &r.instances) {
        totals.entry(inst.class.as_str()).or_default().1 += 1;
    }
    let classes = totals
        .into_iter()
        .map(|(class, (total, retained))| ClassFill {
            class: class.to_string(),
            total,
            retained,
            fill: retained as f64 / total as f64,
        })
        .collect();

    Ok(FilteredView {
        spec: spec.clone(),
        classes,
        summary: SummaryArtifact {
            meta: artifact.meta.clone(),
            rows,
            cols: artifact.cols.clone(),
            blocks,
            flows,
            legends: artifact.legends.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub row_cluster: u32,
    pub col_cluster: Option<u32>,
    pub threshold: f64,
    /// Instances with at least one retained entry, in index order.
    pub instances: Vec<Instance>,
    /// Features with at least one retained entry, in index order.
    pub features: Vec<Feature>,
    pub entries: Vec<SubsetEntry>,
}

/// Entries of `matrix` inside the selected row cluster (and column cluster,
/// if given) whose value is at least `threshold`. Values are copied as is.
pub fn extract_subset<F: Scalar>(
    artifact: &SummaryArtifact,
    matrix: &SparseMatrix<F>,
    row_cluster: u32,
    col_cluster: Option<u32>,
    threshold: f64,
) -> Result<Subset> {
    if matrix.n_rows() != artifact.n_instances() || matrix.n_cols() != artifact.n_features() {
        return Err(Error::Shape(format!(
            "matrix is {}x{} but the summary describes {}x{}",
            matrix.n_rows(),
            matrix.n_cols(),
            artifact.n_instances(),
            artifact.n_features()
        )));
    }
    let rows = artifact.row_cluster(row_cluster);
    let cols = col_cluster.map(|id| artifact.col_cluster(id));
    let mut missing = Vec::new();
    if rows.is_none() {
        missing.push(format!("row cluster {row_cluster}"));
    }
    if let (Some(id), Some(None)) = (col_cluster, cols) {
        missing.push(format!("column cluster {id}"));
    }
    let Some(rows) = rows.filter(|_| missing.is_empty()) else {
        return Err(Error::NotFound(missing));
    };
    let cols = cols.flatten();

    let col_filter: Option<BTreeSet<usize>> = cols.map(|c| c.features.iter().map(|f| f.index).collect());
    let mut entries = Vec::new();
    let mut used_rows = BTreeSet::new();
    let mut used_cols = BTreeSet::new();
    let mut members: Vec<&Instance> = rows.instances.iter().collect();
    members.sort_by_key(|i| i.index);
    for inst in &members {
        for e in matrix.row(inst.index) {
            let v = e.value.as_f64();
            if v >= threshold && col_filter.as_ref().is_none_or(|cf| cf.contains(&e.col)) {
                entries.push(SubsetEntry {
                    row: e.row,
                    col: e.col,
                    value: v,
                });
                used_rows.insert(e.row);
                used_cols.insert(e.col);
            }
        }
    }
    let features: BTreeMap<usize, &Feature> = artifact
        .cols
        .iter()
        .flat_map(|c| &c.features)
        .map(|f| (f.index, f))
        .collect();
    Ok(Subset {
        row_cluster,
        col_cluster,
        threshold,
        instances: members
            .into_iter()
            .filter(|i| used_rows.contains(&i.index))
            .cloned()
            .collect(),
        features: used_cols.iter().map(|j| features[j].clone()).collect(),
        entries,
    })
}
