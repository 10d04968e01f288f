//! Independent oracles and synthetic data shared by the integration tests.
#![allow(dead_code)]

use hcr::ingest::{ColumnOverrides, Dataset};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-Legendre nodes and weights on [0,1] by the Golub-Welsch eigenvalue
/// method (no polynomial evaluation involved).
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k, k - 1)] = beta;
        jacobi[(k - 1, k)] = beta;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            ((t + 1.0) / 2.0, v0 * v0)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.row_mean();
    let mut c = x.clone();
    for (k, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[k]);
    }
    c
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// First canonical correlation by alternating maximization: regress the
/// current y-projection on X, then the x-projection on Y, until the
/// correlation stops changing.
pub fn cca_alternating(x: &DMatrix<f64>, y: &DMatrix<f64>, seed: u64) -> f64 {
    let xc = centered(x);
    let yc = centered(y);
    let gx = (xc.transpose() * &xc).cholesky().expect("X covariance positive definite");
    let gy = (yc.transpose() * &yc).cholesky().expect("Y covariance positive definite");
    let mut r = rng(seed);
    let mut b = DVector::from_fn(y.ncols(), |_, _| r.random::<f64>() - 0.5);
    let mut last = f64::NAN;
    for _ in 0..200_000 {
        let yb = &yc * &b;
        let a = gx.solve(&(xc.transpose() * &yb));
        let xa = &xc * &a;
        b = gy.solve(&(yc.transpose() * &xa));
        b /= b.norm();
        let yb = &yc * &b;
        let rho = pearson(xa.as_slice(), yb.as_slice()).abs();
        if (rho - last).abs() < 1e-15 {
            return rho;
        }
        last = rho;
    }
    last
}

/// Lasso objective minimized by accelerated projected gradient on the split
/// `c = u - v, u, v >= 0`, with the intercept eliminated by centering.
pub fn lasso_projected_gradient(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> f64 {
    let p = x.ncols();
    let xc = centered(x);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ym));
    let gram = xc.transpose() * &xc;
    let q = xc.transpose() * &yc;
    let lmax = SymmetricEigen::new(gram.clone()).eigenvalues.max();
    let step = 1.0 / (4.0 * lmax.max(1e-12));

    let objective = |c: &DVector<f64>| -> f64 {
        let r = &yc - &xc * c;
        r.norm_squared() + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
    };
    let smooth = |u: &DVector<f64>, v: &DVector<f64>| -> f64 {
        let c = u - v;
        let r = &yc - &xc * &c;
        r.norm_squared() + lambda * (u.sum() + v.sum())
    };

    let mut u = DVector::zeros(p);
    let mut v = DVector::zeros(p);
    let (mut su, mut sv) = (u.clone(), v.clone());
    let mut t = 1.0f64;
    let mut f_prev = smooth(&u, &v);
    for _ in 0..200_000 {
        let g = (&gram * (&su - &sv) - &q) * 2.0;
        let nu = (&su - (&g.add_scalar(lambda)) * step).map(|w| w.max(0.0));
        let nv = (&sv - (&(-&g).add_scalar(lambda)) * step).map(|w| w.max(0.0));
        let f_new = smooth(&nu, &nv);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if f_new > f_prev {
            // Restart momentum.
            su = u.clone();
            sv = v.clone();
            t = 1.0;
            continue;
        }
        let beta = (t - 1.0) / t_next;
        su = &nu + (&nu - &u) * beta;
        sv = &nv + (&nv - &v) * beta;
        let moved = (&nu - &u).amax().max((&nv - &v).amax());
        u = nu;
        v = nv;
        t = t_next;
        f_prev = f_new;
        if moved < 1e-13 {
            break;
        }
    }
    objective(&(u - v))
}

/// Build a dataset from columns of numbers (all formatted as numeric text).
pub fn numeric_dataset(names: &[&str], columns: &[Vec<f64>], target: &str) -> Dataset {
    let n = columns[0].len();
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| columns.iter().map(|c| format!("{:?}", c[i])).collect())
        .collect();
    Dataset::from_raw(
        names.iter().map(|s| s.to_string()).collect(),
        rows,
        &ColumnOverrides::new(),
    )
    .unwrap()
    .with_target(target)
    .unwrap()
}

pub fn normal_pdf(y: f64, mu: f64, sd: f64) -> f64 {
    let z = (y - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Bimodal law: with probability `x` the draw comes from N(-1.5, 0.4^2),
/// otherwise from N(1.5, 0.4^2), where `x ~ U(0,1)` selects the component.
pub struct BimodalSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
}

pub const MODE: f64 = 1.5;
pub const MODE_SD: f64 = 0.4;

pub fn bimodal_sample(n: usize, seed: u64, dependent: bool) -> BimodalSample {
    let mut r = rng(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = r.random();
        let selector: f64 = if dependent { xi } else { r.random() };
        let left = r.random::<f64>() < selector;
        let mu = if left { -MODE } else { MODE };
        y.push(mu + MODE_SD * std.sample(&mut r));
        x.push(xi);
        noise.push(std.sample(&mut r));
    }
    BimodalSample { x, y, noise }
}

/// Mean of `ln p(y|x) - ln p(y)`: the true log-density of the normalized
/// target given `x`, averaged over the sample.
pub fn bimodal_oracle(s: &BimodalSample) -> f64 {
    let n = s.x.len() as f64;
    s.x.iter()
        .zip(&s.y)
        .map(|(&x, &y)| {
            let a = normal_pdf(y, -MODE, MODE_SD);
            let b = normal_pdf(y, MODE, MODE_SD);
            let cond = x * a + (1.0 - x) * b;
            let marg = 0.5 * a + 0.5 * b;
            (cond / marg).ln()
        })
        .sum::<f64>()
        / n
}
