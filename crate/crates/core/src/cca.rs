//! Canonical Correlation Analysis by whitening and SVD.
//!
//! Both sides are whitened with `C^{-1/2}`, the whitened cross-covariance
//! `W_X C_XY W_Y` is decomposed by SVD, and the singular vectors are mapped
//! back through the whitening matrices. The x-directions are then
//! eigenvectors of `C_XX^{-1} C_XY C_YY^{-1} C_YX` with eigenvalues equal to
//! the squared canonical correlations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative ridge used by [`Ridge::Auto`]: `1e-8 * trace(C) / d`.
pub const AUTO_RIDGE_SCALE: f64 = 1e-8;
const RIDGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// `1e-8 * trace(C) / d` per side, floored at `1e-12`.
    Auto,
    Fixed(f64),
}

impl Ridge {
    fn for_cov(self, c: &DMatrix<f64>) -> f64 {
        match self {
            Ridge::Fixed(r) => r,
            Ridge::Auto => {
                let d = c.nrows().max(1) as f64;
                (AUTO_RIDGE_SCALE * c.trace() / d).max(RIDGE_FLOOR)
            }
        }
    }
}

/// Mean vector and population (1/n) covariance of the rows of `x`.
pub fn covariance(x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: n });
    }
    let mean = x.row_mean().transpose();
    let centered = center(x, &mean);
    let mut c = centered.tr_mul(&centered) / n as f64;
    symmetrize(&mut c);
    Ok((mean, c))
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (k, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[k]);
    }
    c
}

fn symmetrize(c: &mut DMatrix<f64>) {
    let d = c.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
}

fn check_symmetric(c: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::NotSymmetric);
    }
    let scale = c.amax().max(1.0);
    let d = c.nrows();
    for i in 0..d {
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// Inverse square root of `C + ridge * I` by symmetric eigendecomposition.
pub fn whiten(c: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    check_symmetric(c)?;
    let eig = SymmetricEigen::new(c.clone());
    let inv_sqrt = eig.eigenvalues.map(|l| {
        let shifted = l.max(0.0) + ridge;
        if shifted > 0.0 {
            1.0 / shifted.sqrt()
        } else {
            f64::NAN
        }
    });
    if inv_sqrt.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let v = &eig.eigenvectors;
    let mut w = v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose();
    symmetrize(&mut w);
    Ok(w)
}

/// Paired canonical directions, ordered by decreasing correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult {
    /// `p x r`, columns `a_1..a_r`.
    pub x_directions: DMatrix<f64>,
    /// `m x r`, columns `b_1..b_r`.
    pub y_directions: DMatrix<f64>,
    pub correlations: Vec<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

/// Fit `r` canonical pairs between the rows of `x` (`n x p`) and `y` (`n x m`).
pub fn cca_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize, ridge: Ridge) -> Result<CcaResult> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.nrows(),
        });
    }
    if n < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: n });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (p, m) = (x.ncols(), y.ncols());
    let max = p.min(m);
    if r > max {
        return Err(Error::RankTooLarge { requested: r, max });
    }

    let (x_mean, cxx) = covariance(x)?;
    let (y_mean, cyy) = covariance(y)?;
    let xc = center(x, &x_mean);
    let yc = center(y, &y_mean);
    let cxy = xc.tr_mul(&yc) / n as f64;

    let wx = whiten(&cxx, ridge.for_cov(&cxx))?;
    let wy = whiten(&cyy, ridge.for_cov(&cyy))?;
    let k = &wx * &cxy * &wy;

    let svd = k.svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut x_dirs = DMatrix::zeros(p, r);
    let mut y_dirs = DMatrix::zeros(m, r);
    let mut correlations = Vec::with_capacity(r);
    for (s, &idx) in order.iter().take(r).enumerate() {
        let mut a = &wx * u.column(idx);
        let mut b = &wy * v_t.row(idx).transpose();
        // Unit projected variance on the fitting sample.
        for (dir, c) in [(&mut a, &cxx), (&mut b, &cyy)] {
            let var = (dir.transpose() * c * &*dir)[(0, 0)];
            if var > f64::EPSILON {
                *dir /= var.sqrt();
            }
        }
        // Deterministic sign: largest-magnitude y component positive.
        let pivot = b.iamax();
        if b[pivot] < 0.0 {
            a.neg_mut();
            b.neg_mut();
        }
        x_dirs.set_column(s, &a);
        y_dirs.set_column(s, &b);
        correlations.push(svd.singular_values[idx].clamp(0.0, 1.0));
    }
    Ok(CcaResult {
        x_directions: x_dirs,
        y_directions: y_dirs,
        correlations,
        x_mean,
        y_mean,
    })
}

impl CcaResult {
    pub fn rank(&self) -> usize {
        self.correlations.len()
    }

    /// Rows times the stored directions of the chosen side.
    pub fn project(&self, side: Side, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let dirs = match side {
            Side::X => &self.x_directions,
            Side::Y => &self.y_directions,
        };
        if rows.ncols() != dirs.nrows() {
            return Err(Error::DimensionMismatch {
                expected: dirs.nrows(),
                found: rows.ncols(),
            });
        }
        Ok(rows * dirs)
    }
}

/// Gram-Schmidt on the columns of `b`, in order. Columns that become
/// numerically dependent are replaced by the next unused coordinate axis
/// orthogonalized against the previous ones.
pub fn orthonormalize_columns(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, r) = b.shape();
    let mut q: DMatrix<f64> = DMatrix::zeros(m, r);
    let mut axis = 0;
    for s in 0..r {
        let mut candidate = b.column(s).into_owned();
        loop {
            // Two passes for numerical orthogonality.
            for _ in 0..2 {
                for t in 0..s {
                    let proj = q.column(t).dot(&candidate);
                    candidate -= q.column(t) * proj;
                }
            }
            let norm = candidate.norm();
            if norm > 1e-10 {
                q.set_column(s, &(candidate / norm));
                break;
            }
            candidate = DVector::zeros(m);
            candidate[axis % m] = 1.0;
            axis += 1;
        }
    }
    q
}
