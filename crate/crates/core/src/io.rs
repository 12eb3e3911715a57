//! The `explmat-json v1` matrix format.
//!
//! ```json
//! {"shape":[2,3],"entries":[[0,1,0.5]],"rows":[{"id":"a","class":"x","pred":"x"}],"cols":[{"id":"f","name":"f"}]}
//! ```
//!
//! `rows` and `cols` may be omitted, in which case ids are generated.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    default_col_meta, default_row_meta, normalize, ColMeta, ExplanationMatrix, NormalizeOptions, RowMeta,
    SparseMatrix,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplMatDoc {
    pub shape: [usize; 2],
    pub entries: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub rows: Vec<RowMeta>,
    #[serde(default)]
    pub cols: Vec<ColMeta>,
}

/// A matrix as stored on disk: values are not yet normalized and may be
/// negative.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExplanation<F> {
    pub data: SparseMatrix<F>,
    pub rows: Vec<RowMeta>,
    pub cols: Vec<ColMeta>,
}

impl<F: Scalar> RawExplanation<F> {
    pub fn normalized(&self, opts: NormalizeOptions) -> Result<ExplanationMatrix<F>> {
        normalize(&self.data, opts)?.with_meta(self.rows.clone(), self.cols.clone())
    }

    pub fn to_doc(&self) -> ExplMatDoc {
        ExplMatDoc {
            shape: [self.data.n_rows(), self.data.n_cols()],
            entries: self
                .data
                .entries()
                .iter()
                .map(|e| (e.row, e.col, e.value.as_f64()))
                .collect(),
            rows: self.rows.clone(),
            cols: self.cols.clone(),
        }
    }
}

impl<F: Scalar> From<&ExplanationMatrix<F>> for RawExplanation<F> {
    fn from(m: &ExplanationMatrix<F>) -> Self {
        Self {
            data: m.data().clone(),
            rows: m.row_meta().to_vec(),
            cols: m.col_meta().to_vec(),
        }
    }
}

impl ExplMatDoc {
    pub fn into_raw<F: Scalar>(self) -> Result<RawExplanation<F>> {
        let [m, n] = self.shape;
        let rows = if self.rows.is_empty() { default_row_meta(m) } else { self.rows };
        let cols = if self.cols.is_empty() { default_col_meta(n) } else { self.cols };
        if rows.len() != m || cols.len() != n {
            return Err(Error::Shape(format!(
                "shape [{m}, {n}] but {} row and {} column records",
                rows.len(),
                cols.len()
            )));
        }
        let data = SparseMatrix::from_triplets(m, n, self.entries.into_iter().map(|(r, c, v)| (r, c, F::of(v))))?;
        Ok(RawExplanation { data, rows, cols })
    }
}

pub fn parse_explmat<F: Scalar>(text: &str) -> Result<RawExplanation<F>> {
    serde_json::from_str::<ExplMatDoc>(text)?.into_raw()
}

pub fn read_explmat<F: Scalar>(path: impl AsRef<Path>) -> Result<RawExplanation<F>> {
    parse_explmat(&fs::read_to_string(path)?)
}

pub fn write_explmat<F: Scalar>(path: impl AsRef<Path>, raw: &RawExplanation<F>) -> Result<()> {
    fs::write(path, serde_json::to_string(&raw.to_doc())?)?;
    Ok(())
}
