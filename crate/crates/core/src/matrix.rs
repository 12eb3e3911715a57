//! Sparse explanation matrices and their normalization.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Values below this after normalization are treated as numeric noise.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry<F> {
    pub row: usize,
    pub col: usize,
    pub value: F,
}

/// Coordinate-list matrix kept sorted in row-major order with no duplicate
/// coordinates and no explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<F> {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<Entry<F>>,
    row_ptr: Vec<usize>,
}

impl<F: Scalar> SparseMatrix<F> {
    /// Builds a matrix from triplets. Repeated coordinates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, F)>,
    {
        let mut raw: Vec<Entry<F>> = Vec::new();
        for (row, col, value) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(Error::Shape(format!(
                    "entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "non-finite value at ({row}, {col})"
                )));
            }
            raw.push(Entry { row, col, value });
        }
        raw.sort_by_key(|e| (e.row, e.col));
        let mut entries: Vec<Entry<F>> = Vec::with_capacity(raw.len());
        for e in raw {
            match entries.last_mut() {
                Some(last) if last.row == e.row && last.col == e.col => last.value = last.value + e.value,
                _ => entries.push(e),
            }
        }
        entries.retain(|e| e.value != F::zero());
        Ok(Self::from_sorted(n_rows, n_cols, entries))
    }

    fn from_sorted(n_rows: usize, n_cols: usize, entries: Vec<Entry<F>>) -> Self {
        let mut row_ptr = vec![0usize; n_rows + 1];
        for e in &entries {
            row_ptr[e.row + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows,
            n_cols,
            entries,
            row_ptr,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Entry<F>] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Entry<F>] {
        &self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        let r = self.row(row);
        match r.binary_search_by_key(&col, |e| e.col) {
            Ok(k) => r[k].value,
            Err(_) => F::zero(),
        }
    }

    pub fn total(&self) -> F {
        self.entries.iter().map(|e| e.value).sum()
    }

    pub fn row_sums(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.n_rows];
        for e in &self.entries {
            out[e.row] = out[e.row] + e.value;
        }
        out
    }

    pub fn col_sums(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.n_cols];
        for e in &self.entries {
            out[e.col] = out[e.col] + e.value;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut entries: Vec<Entry<F>> = self
            .entries
            .iter()
            .map(|e| Entry {
                row: e.col,
                col: e.row,
                value: e.value,
            })
            .collect();
        entries.sort_by_key(|e| (e.row, e.col));
        Self::from_sorted(self.n_cols, self.n_rows, entries)
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_rows as f64 * self.n_cols as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.nnz() as f64 / cells
        }
    }

    /// Returns a copy with every value passed through `f`; zeros are dropped.
    pub fn map_values(&self, mut f: impl FnMut(&Entry<F>) -> F) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Entry {
                row: e.row,
                col: e.col,
                value: f(e),
            })
            .filter(|e| e.value != F::zero())
            .collect();
        Self::from_sorted(self.n_rows, self.n_cols, entries)
    }

    pub fn to_dense(&self) -> Vec<Vec<F>> {
        let mut out = vec![vec![F::zero(); self.n_cols]; self.n_rows];
        for e in &self.entries {
            out[e.row][e.col] = e.value;
        }
        out
    }

    pub fn cast<G: Scalar>(&self) -> SparseMatrix<G> {
        let entries = self
            .entries
            .iter()
            .map(|e| Entry {
                row: e.row,
                col: e.col,
                value: G::of(e.value.as_f64()),
            })
            .collect();
        SparseMatrix::from_sorted(self.n_rows, self.n_cols, entries)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub id: String,
    pub class: String,
    pub pred: String,
}

impl RowMeta {
    pub fn correct(&self) -> bool {
        self.class == self.pred
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColMeta {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

pub fn default_row_meta(n: usize) -> Vec<RowMeta> {
    (0..n)
        .map(|i| RowMeta {
            id: format!("r{}", i + 1),
            class: String::new(),
            pred: String::new(),
        })
        .collect()
}

pub fn default_col_meta(n: usize) -> Vec<ColMeta> {
    (0..n)
        .map(|j| ColMeta {
            id: format!("c{}", j + 1),
            name: format!("c{}", j + 1),
            group: None,
        })
        .collect()
}

/// Nonnegative instance x feature matrix of attribution values plus
/// per-instance and per-feature metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMatrix<F> {
    data: SparseMatrix<F>,
    rows: Vec<RowMeta>,
    cols: Vec<ColMeta>,
}

impl<F: Scalar> ExplanationMatrix<F> {
    /// Wraps already nonnegative data. Values must be strictly positive.
    pub fn try_new(data: SparseMatrix<F>, rows: Vec<RowMeta>, cols: Vec<ColMeta>) -> Result<Self> {
        if rows.len() != data.n_rows() || cols.len() != data.n_cols() {
            return Err(Error::Shape(format!(
                "metadata for {}x{} does not match a {}x{} matrix",
                rows.len(),
                cols.len(),
                data.n_rows(),
                data.n_cols()
            )));
        }
        if let Some(e) = data.entries().iter().find(|e| e.value <= F::zero()) {
            return Err(Error::InvalidValue(format!(
                "value {} at ({}, {}) is not strictly positive",
                e.value, e.row, e.col
            )));
        }
        if data.density() > 0.5 {
            warn!(
                "explanation matrix density {:.3} exceeds 0.5; summaries assume sparse input",
                data.density()
            );
        }
        Ok(Self { data, rows, cols })
    }

    pub fn with_meta(self, rows: Vec<RowMeta>, cols: Vec<ColMeta>) -> Result<Self> {
        Self::try_new(self.data, rows, cols)
    }

    pub fn data(&self) -> &SparseMatrix<F> {
        &self.data
    }

    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.n_cols()
    }

    pub fn nnz(&self) -> usize {
        self.data.nnz()
    }

    pub fn entries(&self) -> &[Entry<F>] {
        self.data.entries()
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        self.data.get(row, col)
    }

    pub fn row_meta(&self) -> &[RowMeta] {
        &self.rows
    }

    pub fn col_meta(&self) -> &[ColMeta] {
        &self.cols
    }

    pub fn is_normalized(&self) -> bool {
        (self.data.total().as_f64() - 1.0).abs() <= 1e-9
    }

    /// Rescales so that the values sum to one, dropping values under the noise floor.
    pub fn renormalized(&self) -> Result<Self> {
        let data = rescale_to_unit_mass(&self.data)?;
        Ok(Self {
            data,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
        })
    }

    pub fn cast<G: Scalar>(&self) -> ExplanationMatrix<G> {
        ExplanationMatrix {
            data: self.data.cast(),
            rows: self.rows.clone(),
            cols: self.cols.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// One min-max scaler over the whole matrix.
    #[default]
    Global,
    /// Independent min-max scaler per feature column.
    PerFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeOptions {
    /// Take absolute values first (attribution sign is ignored).
    pub signed: bool,
    pub scaling: Scaling,
}

/// Min-max scales the raw attribution values and divides by the grand total.
///
/// The scaler's minimum includes the implicit zeros of the sparse matrix, so
/// for any matrix that is not fully dense the transform is a division by the
/// maximum. Negative values are rejected unless `signed` is set.
pub fn normalize<F: Scalar>(raw: &SparseMatrix<F>, opts: NormalizeOptions) -> Result<ExplanationMatrix<F>> {
    if raw.nnz() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let magnitude = |v: F| if opts.signed { v.abs() } else { v };
    if !opts.signed {
        if let Some(e) = raw.entries().iter().find(|e| e.value < F::zero()) {
            return Err(Error::InvalidValue(format!(
                "negative value {} at ({}, {}); pass signed to use magnitudes",
                e.value, e.row, e.col
            )));
        }
    }
    let scaled = match opts.scaling {
        Scaling::Global => {
            let dense = raw.nnz() == raw.n_rows() * raw.n_cols();
            let (lo, hi) = min_max(raw.entries().iter().map(|e| magnitude(e.value)), dense);
            raw.map_values(|e| min_max_scale(magnitude(e.value), lo, hi))
        }
        Scaling::PerFeature => {
            let mut vals: Vec<Vec<F>> = vec![Vec::new(); raw.n_cols()];
            for e in raw.entries() {
                vals[e.col].push(magnitude(e.value));
            }
            let bounds: Vec<(F, F)> = vals
                .iter()
                .map(|v| min_max(v.iter().copied(), v.len() == raw.n_rows()))
                .collect();
            raw.map_values(|e| {
                let (lo, hi) = bounds[e.col];
                min_max_scale(magnitude(e.value), lo, hi)
            })
        }
    };
    let data = rescale_to_unit_mass(&scaled)?;
    ExplanationMatrix::try_new(data, default_row_meta(raw.n_rows()), default_col_meta(raw.n_cols()))
}

fn min_max<F: Scalar>(values: impl Iterator<Item = F>, dense: bool) -> (F, F) {
    let mut lo = F::infinity();
    let mut hi = F::neg_infinity();
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !dense {
        lo = lo.min(F::zero());
    }
    (lo, hi)
}

fn min_max_scale<F: Scalar>(v: F, lo: F, hi: F) -> F {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else if hi > F::zero() {
        F::one()
    } else {
        F::zero()
    }
}

fn rescale_to_unit_mass<F: Scalar>(m: &SparseMatrix<F>) -> Result<SparseMatrix<F>> {
    let total = m.total();
    if m.nnz() == 0 || total <= F::zero() {
        return Err(Error::EmptyMatrix);
    }
    let floor = F::of(NOISE_FLOOR);
    let once = m.map_values(|e| {
        let v = e.value / total;
        if v < floor {
            F::zero()
        } else {
            v
        }
    });
    let total = once.total();
    if once.nnz() == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(once.map_values(|e| e.value / total))
}
