//! Feature construction for context variables.
//!
//! Continuous columns contribute basis values of their normalized position,
//! discrete columns one indicator per level, and mixed columns both: basis
//! values on the continuous part (zero on special rows) plus one indicator
//! that is `1` exactly on rows holding the special value.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, ColumnSpec, Dataset, Value};
use crate::normalize::RankMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Basis { degree: usize },
    OneHot { levels: Vec<Value> },
    Mixed { degree: usize, special: Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub source_column: String,
    pub encoding: Encoding,
    pub feature_names: Vec<String>,
}

impl FeatureBlock {
    pub fn width(&self) -> usize {
        self.feature_names.len()
    }
}

/// Fitted encoder for one context column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoder {
    /// Index of the source column in the dataset schema.
    pub column: usize,
    pub block: FeatureBlock,
    /// Rank map of the continuous part (basis and mixed encodings).
    pub rank_map: Option<RankMap>,
}

impl ColumnEncoder {
    /// Fit on the training cells of column `column` described by `spec`.
    pub fn fit(column: usize, spec: &ColumnSpec, cells: &[&Value], basis: BasisSpec) -> Result<Self> {
        let degree = basis.degree();
        let name = &spec.name;
        let basis_names = || (1..=degree).map(move |j| format!("{name}:f{j}"));
        let (encoding, feature_names, rank_map) = match spec.kind {
            ColumnKind::Continuous => {
                let nums: Vec<f64> = cells.iter().filter_map(|v| v.as_f64()).collect();
                let map = if nums.is_empty() {
                    None
                } else {
                    Some(RankMap::fit_numeric(&nums)?)
                };
                (Encoding::Basis { degree }, basis_names().collect(), map)
            }
            ColumnKind::Mixed => {
                let special = spec
                    .special()
                    .cloned()
                    .ok_or_else(|| Error::SchemaMismatch(format!("mixed column `{name}` has no special value")))?;
                let nums: Vec<f64> = cells
                    .iter()
                    .filter(|v| **v != &special)
                    .filter_map(|v| v.as_f64())
                    .collect();
                let map = if nums.is_empty() {
                    None
                } else {
                    Some(RankMap::fit_numeric(&nums)?)
                };
                let mut names: Vec<String> = basis_names().collect();
                names.push(format!("{name}={special}"));
                (Encoding::Mixed { degree, special }, names, map)
            }
            ColumnKind::Discrete => {
                let levels: Vec<Value> = cells
                    .iter()
                    .map(|v| (*v).clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let names = levels.iter().map(|l| format!("{name}={l}")).collect();
                (Encoding::OneHot { levels }, names, None)
            }
        };
        Ok(ColumnEncoder {
            column,
            block: FeatureBlock {
                source_column: name.clone(),
                encoding,
                feature_names,
            },
            rank_map,
        })
    }

    pub fn width(&self) -> usize {
        self.block.width()
    }

    pub fn has_basis(&self) -> bool {
        !matches!(self.block.encoding, Encoding::OneHot { .. })
    }

    fn basis_part(&self, cell: &Value, out: &mut [f64]) -> Result<()> {
        let (Some(map), Some(x)) = (&self.rank_map, cell.as_f64()) else {
            out.fill(0.0);
            return Ok(());
        };
        let u = map.to_uniform(x)?;
        BasisSpec::new(out.len())?.eval_into(u, out)
    }

    /// Encode one cell into `out` (length `width()`). Unseen discrete levels
    /// and unexpected missing cells encode as zeros.
    pub fn encode_into(&self, cell: &Value, out: &mut [f64]) -> Result<()> {
        if out.len() != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                found: out.len(),
            });
        }
        match &self.block.encoding {
            Encoding::Basis { .. } => self.basis_part(cell, out),
            Encoding::Mixed { degree, special } => {
                let (basis, indicator) = out.split_at_mut(*degree);
                if cell == special {
                    basis.fill(0.0);
                    indicator[0] = 1.0;
                    Ok(())
                } else {
                    indicator[0] = 0.0;
                    self.basis_part(cell, basis)
                }
            }
            Encoding::OneHot { levels } => {
                out.fill(0.0);
                if let Ok(k) = levels.binary_search(cell) {
                    out[k] = 1.0;
                }
                Ok(())
            }
        }
    }

    pub fn encode(&self, cell: &Value) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(cell, &mut out)?;
        Ok(out)
    }
}

/// Encode a whole column: the block description plus one feature row per cell.
pub fn encode_column(
    column: usize,
    spec: &ColumnSpec,
    cells: &[&Value],
    basis: BasisSpec,
) -> Result<(ColumnEncoder, Vec<Vec<f64>>)> {
    let enc = ColumnEncoder::fit(column, spec, cells, basis)?;
    let rows = cells
        .iter()
        .map(|c| enc.encode(c))
        .collect::<Result<Vec<_>>>()?;
    Ok((enc, rows))
}

/// Fitted encoder for a set of context columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub columns: Vec<ColumnEncoder>,
    pub pair_products: bool,
    /// Pairs of encoder indices whose first basis features are multiplied.
    pairs: Vec<(usize, usize)>,
    /// Schema width the encoded rows must have.
    schema_width: usize,
}

impl FeatureEncoder {
    pub fn fit(d: &Dataset, context: &[usize], basis: BasisSpec, pair_products: bool) -> Result<Self> {
        let mut columns = Vec::with_capacity(context.len());
        for &j in context {
            if j >= d.n_cols() {
                return Err(Error::DimensionMismatch {
                    expected: d.n_cols(),
                    found: j + 1,
                });
            }
            let cells: Vec<&Value> = d.column(j).collect();
            columns.push(ColumnEncoder::fit(j, &d.columns[j], &cells, basis)?);
        }
        let mut pairs = Vec::new();
        if pair_products {
            let with_basis: Vec<usize> = (0..columns.len()).filter(|&i| columns[i].has_basis()).collect();
            for (a, &i) in with_basis.iter().enumerate() {
                for &k in &with_basis[a + 1..] {
                    pairs.push((i, k));
                }
            }
        }
        Ok(FeatureEncoder {
            columns,
            pair_products,
            pairs,
            schema_width: d.n_cols(),
        })
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.width()).sum::<usize>() + self.pairs.len()
    }

    pub fn blocks(&self) -> Vec<FeatureBlock> {
        let mut blocks: Vec<FeatureBlock> = self.columns.iter().map(|c| c.block.clone()).collect();
        if !self.pairs.is_empty() {
            let names = self
                .pairs
                .iter()
                .map(|&(i, k)| {
                    format!(
                        "{}:f1*{}:f1",
                        self.columns[i].block.source_column, self.columns[k].block.source_column
                    )
                })
                .collect();
            blocks.push(FeatureBlock {
                source_column: "pair_products".into(),
                encoding: Encoding::Basis { degree: 1 },
                feature_names: names,
            });
        }
        blocks
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.blocks().into_iter().flat_map(|b| b.feature_names).collect()
    }

    /// Encode one full-schema row into `out` (length `width()`).
    pub fn encode_row_into(&self, row: &[Value], out: &mut [f64]) -> Result<()> {
        if row.len() != self.schema_width {
            return Err(Error::DimensionMismatch {
                expected: self.schema_width,
                found: row.len(),
            });
        }
        let mut offsets = Vec::with_capacity(self.columns.len());
        let mut at = 0;
        for enc in &self.columns {
            offsets.push(at);
            let w = enc.width();
            enc.encode_into(&row[enc.column], &mut out[at..at + w])?;
            at += w;
        }
        for (q, &(i, k)) in self.pairs.iter().enumerate() {
            out[at + q] = out[offsets[i]] * out[offsets[k]];
        }
        Ok(())
    }

    pub fn encode_row(&self, row: &[Value]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.encode_row_into(row, &mut out)?;
        Ok(out)
    }

    /// Encode every row of `d` into an `n x p` matrix.
    pub fn encode(&self, d: &Dataset) -> Result<DMatrix<f64>> {
        let p = self.width();
        let mut m = DMatrix::zeros(d.n_rows(), p);
        let mut buf = vec![0.0; p];
        for (i, row) in d.rows.iter().enumerate() {
            self.encode_row_into(row, &mut buf)?;
            for (k, &v) in buf.iter().enumerate() {
                m[(i, k)] = v;
            }
        }
        Ok(m)
    }
}

/// Per-column affine standardization with population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Columns whose cells are all identical get `mean = value, scale = 1`,
    /// so they standardize to exact zeros.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::NotEnoughSamples { needed: 2, got: n });
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                means.push(first);
                scales.push(1.0);
                continue;
            }
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            means.push(mean);
            scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Standardizer { means, scales })
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.scales) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                found: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[k], self.scales[k]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }
}

/// Encoded feature table with its block layout and, once fitted, standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: DMatrix<f64>,
    pub blocks: Vec<FeatureBlock>,
    pub standardization: Option<Standardizer>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Concatenate the per-column blocks of all `context` columns of `d`.
pub fn assemble_features(d: &Dataset, encoder: &FeatureEncoder) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix {
        values: encoder.encode(d)?,
        blocks: encoder.blocks(),
        standardization: None,
    })
}

/// Fit standardization on `fm` and return the standardized matrix.
pub fn standardize(fm: &FeatureMatrix) -> Result<FeatureMatrix> {
    let s = Standardizer::fit(&fm.values)?;
    Ok(FeatureMatrix {
        values: s.apply(&fm.values)?,
        blocks: fm.blocks.clone(),
        standardization: Some(s),
    })
}

/// Apply the fitted standardization of `fm` to new rows.
pub fn apply_standardize(fm: &FeatureMatrix, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = fm
        .standardization
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("feature matrix is not standardized".into()))?;
    s.apply(rows)
}
