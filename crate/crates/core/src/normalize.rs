//! Copula-style normalization of a variable to a nearly uniform distribution
//! on [0,1] through its empirical distribution function.
//!
//! The value at sorted rank `i` (1-based) of `n` is placed at `(i - 0.5) / n`.
//! A group of tied values spanning ranks `i_min..=i_max` shares the central
//! position `(i_max + i_min - 1) / (2n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Empirical,
    /// `y = z / (1 + z)`, for nonnegative variables such as redshift.
    RedshiftAnalytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Support {
    Numeric(Vec<f64>),
    Text(Vec<String>),
    Analytic,
}

/// A fitted normalizer with its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMap {
    kind: MapKind,
    n: usize,
    /// Distinct training values in ascending order.
    support: Support,
    /// Multiplicity of each distinct value.
    counts: Vec<usize>,
    /// Assigned position of each distinct value.
    positions: Vec<f64>,
}

/// Ascending positions for groups of the given sizes.
fn tie_positions(counts: &[usize], n: usize) -> Vec<f64> {
    let mut positions = Vec::with_capacity(counts.len());
    let mut i_min = 1usize;
    for &c in counts {
        let i_max = i_min + c - 1;
        positions.push((i_max + i_min - 1) as f64 / (2 * n) as f64);
        i_min = i_max + 1;
    }
    positions
}

fn group<T: PartialEq + Clone>(sorted: &[T]) -> (Vec<T>, Vec<usize>) {
    let mut distinct: Vec<T> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for v in sorted {
        match distinct.last() {
            Some(last) if last == v => *counts.last_mut().unwrap() += 1,
            _ => {
                distinct.push(v.clone());
                counts.push(1);
            }
        }
    }
    (distinct, counts)
}

impl RankMap {
    /// Fit on numeric samples.
    pub fn fit_numeric(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (distinct, counts) = group(&sorted);
        let n = values.len();
        Ok(RankMap {
            kind: MapKind::Empirical,
            n,
            positions: tie_positions(&counts, n),
            support: Support::Numeric(distinct),
            counts,
        })
    }

    /// Fit on textual samples, ordered lexicographically.
    pub fn fit_text<S: AsRef<str>>(values: &[S]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
        }
        let mut sorted: Vec<String> = values.iter().map(|s| s.as_ref().to_string()).collect();
        sorted.sort();
        let (distinct, counts) = group(&sorted);
        let n = values.len();
        Ok(RankMap {
            kind: MapKind::Empirical,
            n,
            positions: tie_positions(&counts, n),
            support: Support::Text(distinct),
            counts,
        })
    }

    /// The analytic `z / (1 + z)` map; needs no training data.
    pub fn redshift() -> Self {
        RankMap {
            kind: MapKind::RedshiftAnalytic,
            n: 0,
            support: Support::Analytic,
            counts: Vec::new(),
            positions: Vec::new(),
        }
    }

    /// Fit on raw cells. Numeric cells are ranked numerically; if any cell is
    /// textual, every cell is ranked by its text. Missing cells are ignored.
    pub fn fit(values: &[Value]) -> Result<Self> {
        let present: Vec<&Value> = values.iter().filter(|v| !v.is_missing()).collect();
        if present.iter().all(|v| matches!(v, Value::Num(_))) {
            let nums: Vec<f64> = present.iter().filter_map(|v| v.as_f64()).collect();
            Self::fit_numeric(&nums)
        } else {
            let texts: Vec<String> = present.iter().map(|v| v.to_string()).collect();
            Self::fit_text(&texts)
        }
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn distinct_numeric(&self) -> Option<&[f64]> {
        match &self.support {
            Support::Numeric(v) => Some(v),
            _ => None,
        }
    }

    /// All `n` training values in ascending order (numeric maps only).
    pub fn sorted_values(&self) -> Option<Vec<f64>> {
        let distinct = self.distinct_numeric()?;
        Some(
            distinct
                .iter()
                .zip(&self.counts)
                .flat_map(|(&v, &c)| std::iter::repeat_n(v, c))
                .collect(),
        )
    }

    /// Normalized position of a number.
    pub fn to_uniform(&self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        match &self.support {
            Support::Analytic => redshift_forward(value),
            Support::Text(_) => Err(Error::Unsupported(
                "numeric lookup in a textual rank map".into(),
            )),
            Support::Numeric(xs) => {
                let pos = &self.positions;
                let k = xs.partition_point(|&x| x < value);
                if k < xs.len() && xs[k] == value {
                    return Ok(pos[k]);
                }
                if k == 0 {
                    return Ok(pos[0]);
                }
                if k == xs.len() {
                    return Ok(pos[xs.len() - 1]);
                }
                let t = (value - xs[k - 1]) / (xs[k] - xs[k - 1]);
                Ok(pos[k - 1] + t * (pos[k] - pos[k - 1]))
            }
        }
    }

    /// Normalized position of a raw cell; unseen text is an unknown category.
    pub fn value_to_uniform(&self, value: &Value) -> Result<f64> {
        match (&self.support, value) {
            (_, Value::Missing) => Err(Error::UnknownCategory("MISSING".into())),
            (Support::Text(levels), v) => {
                let s = v.to_string();
                levels
                    .binary_search(&s)
                    .map(|k| self.positions[k])
                    .map_err(|_| Error::UnknownCategory(s))
            }
            (_, Value::Num(x)) => self.to_uniform(*x),
            (_, Value::Text(s)) => Err(Error::UnknownCategory(s.clone())),
        }
    }

    /// Piecewise-linear inverse of [`RankMap::to_uniform`], clamped to the
    /// extreme training values outside the assigned positions.
    pub fn from_uniform(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfDomain {
                value: u,
                domain: "[0, 1]",
            });
        }
        match &self.support {
            Support::Analytic => redshift_inverse(u),
            Support::Text(_) => Err(Error::Unsupported("inverse of a textual rank map".into())),
            Support::Numeric(xs) => {
                let pos = &self.positions;
                let k = pos.partition_point(|&p| p < u);
                if k < pos.len() && pos[k] == u {
                    return Ok(xs[k]);
                }
                if k == 0 {
                    return Ok(xs[0]);
                }
                if k == pos.len() {
                    return Ok(xs[xs.len() - 1]);
                }
                let t = (u - pos[k - 1]) / (pos[k] - pos[k - 1]);
                Ok(xs[k - 1] + t * (xs[k] - xs[k - 1]))
            }
        }
    }
}

/// `z / (1 + z)` for `z >= 0`.
pub fn redshift_forward(z: f64) -> Result<f64> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::OutOfDomain {
            value: z,
            domain: "[0, inf)",
        });
    }
    Ok(z / (1.0 + z))
}

/// `y / (1 - y)` for `0 <= y < 1`.
pub fn redshift_inverse(y: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&y) {
        return Err(Error::OutOfDomain {
            value: y,
            domain: "[0, 1)",
        });
    }
    Ok(y / (1.0 - y))
}
