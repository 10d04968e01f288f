//! Orthonormal shifted Legendre polynomials on [0,1].
//!
//! `f_j(y) = sqrt(2j + 1) * P_j(2y - 1)` for `j = 1..=m`. The constant
//! `f_0 = 1` is implicit and never returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum polynomial degree.
pub const DEFAULT_DEGREE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    degree: usize,
}

impl BasisSpec {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidConfig("basis degree must be at least 1".into()));
        }
        Ok(BasisSpec { degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Write `f_1(y)..f_m(y)` into `out` (length `m`).
    pub fn eval_into(&self, y: f64, out: &mut [f64]) -> Result<()> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain {
                value: y,
                domain: "[0, 1]",
            });
        }
        if out.len() != self.degree {
            return Err(Error::DimensionMismatch {
                expected: self.degree,
                found: out.len(),
            });
        }
        let t = 2.0 * y - 1.0;
        // (j + 1) P_{j+1} = (2j + 1) t P_j - j P_{j-1}
        let mut prev = 1.0;
        let mut cur = t;
        for (j, slot) in (1..=self.degree).zip(out.iter_mut()) {
            *slot = ((2 * j + 1) as f64).sqrt() * cur;
            let jf = j as f64;
            let next = ((2.0 * jf + 1.0) * t * cur - jf * prev) / (jf + 1.0);
            prev = cur;
            cur = next;
        }
        Ok(())
    }

    pub fn eval(&self, y: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.degree];
        self.eval_into(y, &mut out)?;
        Ok(out)
    }

    /// Row `t` is `eval(ys[t])`.
    pub fn matrix(&self, ys: &[f64]) -> Result<Vec<Vec<f64>>> {
        ys.iter().map(|&y| self.eval(y)).collect()
    }
}

pub fn eval_basis(spec: BasisSpec, y: f64) -> Result<Vec<f64>> {
    spec.eval(y)
}

pub fn basis_matrix(spec: BasisSpec, ys: &[f64]) -> Result<Vec<Vec<f64>>> {
    spec.matrix(ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn closed_forms() {
        let b = BasisSpec::new(4).unwrap();
        let mid = b.eval(0.5).unwrap();
        assert_eq!(mid[0], 0.0);
        assert!(close(mid[1], -(5f64.sqrt()) / 2.0, 1e-12));
        assert_eq!(mid[2], 0.0);
        // P_4(0) = 3/8
        assert!(close(mid[3], 3.0 * 3.0 / 8.0, 1e-12));
        assert!(close(b.eval(1.0).unwrap()[0], 3f64.sqrt(), 1e-15));
        for y in [0.0, 0.13, 0.77, 1.0] {
            let v = b.eval(y).unwrap();
            let f2 = 5f64.sqrt() * (6.0 * y * y - 6.0 * y + 1.0);
            assert!(close(v[1], f2, 1e-12));
        }
    }

    #[test]
    fn endpoint_magnitudes() {
        let b = BasisSpec::new(10).unwrap();
        let lo = b.eval(0.0).unwrap();
        let hi = b.eval(1.0).unwrap();
        for j in 1..=10 {
            let bound = ((2 * j + 1) as f64).sqrt();
            assert!(close(hi[j - 1], bound, 1e-12));
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert!(close(lo[j - 1], sign * bound, 1e-12));
        }
        for k in 0..=1000 {
            let y = k as f64 / 1000.0;
            for (j, v) in b.eval(y).unwrap().iter().enumerate() {
                assert!(v.abs() <= ((2 * j + 3) as f64).sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn matrix_shapes_and_domain() {
        let b1 = BasisSpec::new(1).unwrap();
        assert_eq!(b1.matrix(&[0.5]).unwrap(), vec![vec![0.0]]);
        assert!(b1.matrix(&[]).unwrap().is_empty());
        assert!(b1.matrix(&[0.2, 1.2]).is_err());
        assert!(b1.eval(-0.01).is_err());
        assert!(BasisSpec::new(0).is_err());
    }
}
