mod common;

use common::{gauss_legendre_unit, numeric_dataset, rng};
use hcr::basis::BasisSpec;
use hcr::features::{standardize, assemble_features, FeatureEncoder, Standardizer};
use hcr::ingest::{read_csv, ColumnOverrides};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn basis_is_orthonormal_under_quadrature() {
    let spec = BasisSpec::new(12).unwrap();
    let nodes = gauss_legendre_unit(64);
    for i in 0..12 {
        for j in 0..12 {
            let q: f64 = nodes
                .iter()
                .map(|&(y, w)| {
                    let v = spec.eval(y).unwrap();
                    w * v[i] * v[j]
                })
                .sum();
            assert!((q - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10, "({i},{j}) = {q}");
        }
    }
}

#[test]
fn basis_columns_average_zero_on_uniform_sample() {
    let spec = BasisSpec::new(10).unwrap();
    let mut r = rng(12);
    let n = 200_000;
    let mut sums = [0.0; 10];
    let mut squares = [0.0; 10];
    for _ in 0..n {
        let v = spec.eval(r.random::<f64>()).unwrap();
        for j in 0..10 {
            sums[j] += v[j];
            squares[j] += v[j] * v[j];
        }
    }
    for j in 0..10 {
        assert!((sums[j] / n as f64).abs() < 0.02);
        assert!((squares[j] / n as f64 - 1.0).abs() < 0.03);
    }
}

#[test]
fn basis_endpoints_match_closed_form() {
    let spec = BasisSpec::new(6).unwrap();
    let top = spec.eval(1.0).unwrap();
    let bottom = spec.eval(0.0).unwrap();
    for j in 0..6 {
        let norm = ((2 * j + 3) as f64).sqrt();
        assert!((top[j] - norm).abs() < 1e-12);
        assert!((bottom[j] - if j % 2 == 0 { -norm } else { norm }).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn standardized_columns_have_zero_mean_unit_variance(
        cells in prop::collection::vec(-1e3f64..1e3, 30),
        constant in -5.0f64..5.0,
    ) {
        let x = DMatrix::from_fn(10, 4, |i, j| match j {
            0 => constant,
            _ => cells[i * 3 + j - 1],
        });
        let s = Standardizer::fit(&x).unwrap();
        let z = s.apply(&x).unwrap();
        prop_assert!(z.column(0).iter().all(|&v| v == 0.0));
        for k in 1..4 {
            let col = z.column(k);
            let mean = col.sum() / 10.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 10.0;
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((var - 1.0).abs() < 1e-9 || col.iter().all(|&v| v == col[0]));
        }
    }
}

#[test]
fn feature_width_counts_blocks() {
    let text = "c,d,mix,t\n\
                0.11,a,-9,1\n0.52,b,0.3,2\n0.93,a,-9,3\n0.24,c,0.7,4\n0.35,b,-9,5\n\
                0.46,a,0.8,6\n0.67,c,-9,7\n0.78,b,0.1,8\n0.19,a,-9,9\n0.40,c,0.2,10\n";
    let d = read_csv(text.as_bytes(), &ColumnOverrides::new()).unwrap().with_target("t").unwrap();
    let basis = BasisSpec::new(4).unwrap();
    let ctx = d.context_indices();
    let plain = FeatureEncoder::fit(&d, &ctx, basis, false).unwrap();
    let pairs = FeatureEncoder::fit(&d, &ctx, basis, true).unwrap();
    // continuous 4 + one-hot 3 + mixed (4 + indicator)
    assert_eq!(plain.width(), 4 + 3 + 5);
    assert_eq!(pairs.width(), plain.width() + 1);
    assert_eq!(plain.feature_names().len(), plain.width());
}

#[test]
fn mixed_indicator_and_basis_are_exclusive() {
    let text = "mix,t\n-9,1\n0.3,2\n-9,3\n0.7,4\n-9,5\n0.8,6\n-9,7\n0.1,8\n-9,9\n0.2,10\n0.5,11\n0.6,12\n";
    let d = read_csv(text.as_bytes(), &ColumnOverrides::new()).unwrap().with_target("t").unwrap();
    let enc = FeatureEncoder::fit(&d, &[0], BasisSpec::new(3).unwrap(), false).unwrap();
    let x = enc.encode(&d).unwrap();
    for i in 0..x.nrows() {
        let indicator = x[(i, 3)];
        let basis_norm: f64 = (0..3).map(|k| x[(i, k)].abs()).sum();
        assert!(indicator == 0.0 || indicator == 1.0);
        assert_eq!(indicator == 1.0, basis_norm == 0.0, "row {i}");
    }
}

#[test]
fn standardize_records_fitted_statistics() {
    let mut r = rng(5);
    let a: Vec<f64> = (0..50).map(|_| r.random()).collect();
    let t: Vec<f64> = (0..50).map(|_| r.random()).collect();
    let d = numeric_dataset(&["a", "t"], &[a, t], "t");
    let enc = FeatureEncoder::fit(&d, &[0], BasisSpec::new(5).unwrap(), false).unwrap();
    let fm = standardize(&assemble_features(&d, &enc).unwrap()).unwrap();
    let s = fm.standardization.as_ref().unwrap();
    assert_eq!(s.width(), 5);
    for col in fm.values.column_iter() {
        assert!((col.sum() / 50.0).abs() < 1e-12);
    }
}
