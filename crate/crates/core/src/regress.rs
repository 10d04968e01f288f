//! Least squares with an l1 penalty, solved by cyclic coordinate descent.
//!
//! Minimizes `sum_t (y_t - c_0 - sum_k c_k x_tk)^2 + lambda * sum_k |c_k|`
//! with an unpenalized intercept `c_0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default l1 penalty weight.
pub const DEFAULT_LAMBDA: f64 = 50.0;
/// Stop when no coefficient moves more than this in a full sweep.
pub const TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub target_name: String,
}

impl LassoModel {
    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&c| c != 0.0).count()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                found: row.len(),
            });
        }
        Ok(self.intercept + row.iter().zip(&self.coefficients).map(|(x, c)| x * c).sum::<f64>())
    }
}

/// `c_0 + rows * coefficients`.
pub fn predict_linear(model: &LassoModel, rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    if rows.ncols() != model.coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: model.coefficients.len(),
            found: rows.ncols(),
        });
    }
    Ok(rows
        .row_iter()
        .map(|r| model.intercept + r.iter().zip(&model.coefficients).map(|(x, c)| x * c).sum::<f64>())
        .collect())
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Coordinate-descent state; exposes single sweeps so callers can observe
/// the objective along the way.
pub struct LassoSolver<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    lambda: f64,
    intercept: f64,
    coefficients: Vec<f64>,
    residual: Vec<f64>,
    col_sq: Vec<f64>,
    sweeps: usize,
}

impl<'a> LassoSolver<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a [f64], lambda: f64) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if n == 0 {
            return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda must be a finite nonnegative number, got {lambda}")));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let col_sq = x.column_iter().map(|c| c.norm_squared()).collect();
        Ok(LassoSolver {
            x,
            y,
            lambda,
            intercept: 0.0,
            coefficients: vec![0.0; x.ncols()],
            residual: y.to_vec(),
            col_sq,
            sweeps: 0,
        })
    }

    /// One pass over the intercept and every coefficient. Returns the largest
    /// absolute coefficient change.
    pub fn sweep(&mut self) -> f64 {
        let n = self.residual.len() as f64;
        let shift = self.residual.iter().sum::<f64>() / n;
        self.intercept += shift;
        self.residual.iter_mut().for_each(|r| *r -= shift);
        let mut max_change = shift.abs();

        let half_lambda = 0.5 * self.lambda;
        for k in 0..self.coefficients.len() {
            let z = self.col_sq[k];
            if z == 0.0 {
                continue;
            }
            let col = self.x.column(k);
            let old = self.coefficients[k];
            let rho = col.iter().zip(&self.residual).map(|(x, r)| x * r).sum::<f64>() + z * old;
            let new = soft_threshold(rho, half_lambda) / z;
            let delta = new - old;
            if delta != 0.0 {
                for (r, x) in self.residual.iter_mut().zip(col.iter()) {
                    *r -= x * delta;
                }
                self.coefficients[k] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        self.sweeps += 1;
        max_change
    }

    pub fn objective(&self) -> f64 {
        lasso_objective(self.x, self.y, self.intercept, &self.coefficients, self.lambda)
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn into_model(self, target_name: impl Into<String>) -> LassoModel {
        LassoModel {
            intercept: self.intercept,
            coefficients: self.coefficients,
            lambda: self.lambda,
            target_name: target_name.into(),
        }
    }
}

/// Penalized residual sum of squares.
pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], intercept: f64, coefficients: &[f64], lambda: f64) -> f64 {
    let rss: f64 = x
        .row_iter()
        .zip(y)
        .map(|(row, &yt)| {
            let fit = intercept + row.iter().zip(coefficients).map(|(a, c)| a * c).sum::<f64>();
            (yt - fit) * (yt - fit)
        })
        .sum();
    rss + lambda * coefficients.iter().map(|c| c.abs()).sum::<f64>()
}

pub fn lasso_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LassoModel> {
    lasso_fit_named(x, y, lambda, "")
}

pub fn lasso_fit_named(x: &DMatrix<f64>, y: &[f64], lambda: f64, target_name: &str) -> Result<LassoModel> {
    let mut solver = LassoSolver::new(x, y, lambda)?;
    while solver.sweeps() < MAX_SWEEPS {
        if solver.sweep() < TOLERANCE {
            break;
        }
    }
    Ok(solver.into_model(target_name))
}

/// `g_k = -2 sum_t x_tk r_t` at the given solution.
pub fn gradient(x: &DMatrix<f64>, y: &[f64], model: &LassoModel) -> Vec<f64> {
    let fit = predict_linear(model, x).expect("width checked by caller");
    let residual: Vec<f64> = y.iter().zip(fit).map(|(a, b)| a - b).collect();
    x.column_iter()
        .map(|c| -2.0 * c.iter().zip(&residual).map(|(a, r)| a * r).sum::<f64>())
        .collect()
}
