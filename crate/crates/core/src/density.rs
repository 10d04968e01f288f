//! The conditional density model.
//!
//! The target is normalized to nearly uniform on [0,1] and its conditional
//! density is modeled as `rho(y | x) = 1 + sum_i f_i(y) a_i(x)` over the
//! orthonormal basis. The coefficients are predicted by one sparse linear
//! model per direction of a CCA-optimized rotation of the target basis.
//! Predictions are evaluated on a regular lattice of `G` cells, made
//! positive by a calibration function and normalized to average 1.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, DEFAULT_DEGREE};
use crate::cca::{cca_fit, orthonormalize_columns, Ridge};
use crate::error::{Error, Result};
use crate::features::{FeatureEncoder, Standardizer};
use crate::ingest::{ColumnSpec, Dataset, Value};
use crate::normalize::RankMap;
use crate::regress::{lasso_fit_named, LassoModel, DEFAULT_LAMBDA};

pub const MODEL_FORMAT: &str = "hcr-density-model";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_RANK: usize = 4;
pub const DEFAULT_LATTICE: usize = 1000;
pub const MIN_LATTICE: usize = 16;
/// Fewer rows than this cannot be split into meaningful folds.
pub const MIN_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKind {
    /// `ln(1 + exp(a rho) / b) / a`, by default `a = 3, b = 4`.
    SoftplusLike,
    /// `max(rho, floor)`, by default `floor = 0.1`.
    Clip,
}

impl std::str::FromStr for CalibrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softplus_like" | "softplus" => Ok(CalibrationKind::SoftplusLike),
            "clip" => Ok(CalibrationKind::Clip),
            other => Err(Error::InvalidConfig(format!("unknown calibration `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub kind: CalibrationKind,
    pub lattice_size: usize,
    pub sharpness: f64,
    pub offset: f64,
    pub clip_floor: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            kind: CalibrationKind::SoftplusLike,
            lattice_size: DEFAULT_LATTICE,
            sharpness: 3.0,
            offset: 4.0,
            clip_floor: 0.1,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lattice_size < MIN_LATTICE {
            return Err(Error::InvalidConfig(format!(
                "lattice size must be at least {MIN_LATTICE}, got {}",
                self.lattice_size
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sharpness) || !positive(self.offset) || !positive(self.clip_floor) {
            return Err(Error::InvalidConfig("calibration constants must be positive".into()));
        }
        Ok(())
    }

    /// The positive monotone map applied before normalization.
    pub fn phi(&self, rho: f64) -> f64 {
        match self.kind {
            CalibrationKind::SoftplusLike => softplus_like(rho, self.sharpness, self.offset),
            CalibrationKind::Clip => rho.max(self.clip_floor),
        }
    }

    /// Cell centers `(g - 0.5) / G`.
    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        let g = self.lattice_size as f64;
        (1..=self.lattice_size).map(move |k| (k as f64 - 0.5) / g)
    }
}

/// `ln(1 + exp(a rho) / b) / a`, switching to the asymptote
/// `rho - ln(b) / a` once `a rho > 30`.
pub fn softplus_like(rho: f64, sharpness: f64, offset: f64) -> f64 {
    let s = sharpness * rho;
    if s > 30.0 {
        rho - offset.ln() / sharpness
    } else {
        (s.exp() / offset).ln_1p() / sharpness
    }
}

/// Apply the calibration function to raw lattice values and normalize them
/// to average exactly 1.
pub fn calibrate(raw: &[f64], config: &CalibrationConfig) -> Result<Vec<f64>> {
    if raw.len() != config.lattice_size {
        return Err(Error::DimensionMismatch {
            expected: config.lattice_size,
            found: raw.len(),
        });
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let phi: Vec<f64> = raw.iter().map(|&r| config.phi(r)).collect();
    Ok(normalize_lattice(phi))
}

fn normalize_lattice(mut values: Vec<f64>) -> Vec<f64> {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        values.fill(1.0);
        return values;
    }
    let z = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v /= z);
    values
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Empirical,
    Redshift,
}

impl std::str::FromStr for TargetTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(TargetTransform::Empirical),
            "redshift" => Ok(TargetTransform::Redshift),
            other => Err(Error::InvalidConfig(format!("unknown target transform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub degree: usize,
    /// Number of CCA-rotated coefficients predicted; 0 gives the uniform baseline.
    pub rank: usize,
    pub lambda: f64,
    pub calibration: CalibrationConfig,
    pub pair_products: bool,
    pub ridge: Ridge,
    pub target_transform: TargetTransform,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            degree: DEFAULT_DEGREE,
            rank: DEFAULT_RANK,
            lambda: DEFAULT_LAMBDA,
            calibration: CalibrationConfig::default(),
            pair_products: false,
            ridge: Ridge::Auto,
            target_transform: TargetTransform::Empirical,
        }
    }
}

impl DensityConfig {
    pub fn validate(&self) -> Result<()> {
        BasisSpec::new(self.degree)?;
        self.calibration.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.rank > self.degree {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds basis degree {}",
                self.rank, self.degree
            )));
        }
        Ok(())
    }
}

/// Unnormalized prediction: the linear combination before calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDensity {
    /// Predicted coefficients in the rotated basis.
    pub rotated: Vec<f64>,
    /// The same coefficients expressed in `f_1..f_m`.
    pub coefficients: Vec<f64>,
    /// `1 + sum_i coefficients_i f_i(y_g)` at every cell center.
    pub lattice: Vec<f64>,
}

/// A calibrated density on the lattice of cell centers `(g - 0.5) / G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedDensity {
    pub lattice: Vec<f64>,
    pub raw_coefficients: Vec<f64>,
}

/// Probability mass of one lattice cell mapped to original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalCell {
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

impl PredictedDensity {
    /// Normalize arbitrary nonnegative cell weights to average 1.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("weights sum to zero".into()));
        }
        Ok(PredictedDensity {
            lattice: normalize_lattice(weights),
            raw_coefficients: Vec::new(),
        })
    }

    pub fn uniform(lattice_size: usize) -> Self {
        PredictedDensity {
            lattice: vec![1.0; lattice_size],
            raw_coefficients: Vec::new(),
        }
    }

    pub fn lattice_size(&self) -> usize {
        self.lattice.len()
    }

    fn cell(&self, u: f64) -> usize {
        let g = self.lattice.len();
        ((u * g as f64).floor().max(0.0) as usize).min(g - 1)
    }

    /// Density of the cell containing `u` (locally constant).
    pub fn density_at(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfDomain {
                value: u,
                domain: "[0, 1]",
            });
        }
        Ok(self.lattice[self.cell(u)])
    }

    pub fn log_density_at(&self, u: f64) -> Result<f64> {
        Ok(self.density_at(u)?.ln())
    }

    /// `(mean, variance)` in normalized space.
    pub fn moments(&self) -> (f64, f64) {
        let g = self.lattice.len() as f64;
        let center = |k: usize| (k as f64 + 0.5) / g;
        let mean = self.lattice.iter().enumerate().map(|(k, r)| center(k) * r).sum::<f64>() / g;
        let var = self
            .lattice
            .iter()
            .enumerate()
            .map(|(k, r)| (center(k) - mean).powi(2) * r)
            .sum::<f64>()
            / g;
        (mean, var)
    }

    /// Cumulative distribution at the cell upper edges, ending at 1.
    pub fn cdf(&self) -> Vec<f64> {
        let g = self.lattice.len() as f64;
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .lattice
            .iter()
            .map(|r| {
                acc += r / g;
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        cdf
    }

    /// Inverse-CDF samples in normalized space, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let cdf = self.cdf();
        let g = self.lattice.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let u: f64 = rng.random();
                let k = cdf.partition_point(|&c| c <= u).min(g - 1);
                let lo = if k == 0 { 0.0 } else { cdf[k - 1] };
                let width = cdf[k] - lo;
                let frac = if width > 0.0 { ((u - lo) / width).clamp(0.0, 1.0) } else { 0.5 };
                ((k as f64 + frac) / g as f64).min(1.0)
            })
            .collect()
    }

    /// Map every cell through the inverse normalization `map`.
    pub fn to_original_scale(&self, map: &RankMap) -> Result<Vec<OriginalCell>> {
        let g = self.lattice.len() as f64;
        let mut lower = map.from_uniform(0.0)?;
        let mut cells = Vec::with_capacity(self.lattice.len());
        for (k, r) in self.lattice.iter().enumerate() {
            let hi = (k + 1) as f64 / g;
            // The analytic map diverges at 1; the last edge is left open.
            let upper = match map.from_uniform(hi) {
                Ok(v) => v,
                Err(_) if k + 1 == self.lattice.len() => f64::INFINITY,
                Err(e) => return Err(e),
            };
            cells.push(OriginalCell {
                lower,
                upper,
                mass: r / g,
            });
            lower = upper;
        }
        Ok(cells)
    }
}

/// Linear coefficient model for one rotated target coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    /// Column of the rotation this model predicts, in `f_1..f_m` coordinates.
    pub direction: Vec<f64>,
    pub canonical_correlation: f64,
    pub lasso: LassoModel,
}

/// A fully trained conditional density model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub format: String,
    pub version: u32,
    pub schema: Vec<ColumnSpec>,
    pub target_index: usize,
    pub context: Vec<usize>,
    pub degree: usize,
    pub target_map: RankMap,
    pub encoder: FeatureEncoder,
    pub standardizer: Standardizer,
    pub coefficient_models: Vec<CoefficientModel>,
    pub calibration: CalibrationConfig,
}

impl DensityModel {
    /// Fit on every non-target column of `d`.
    pub fn fit(d: &Dataset, config: &DensityConfig) -> Result<Self> {
        Self::fit_with_context(d, &d.context_indices(), config)
    }

    /// Fit using the given context columns.
    pub fn fit_with_context(d: &Dataset, context: &[usize], config: &DensityConfig) -> Result<Self> {
        config.validate()?;
        let target = d.target()?;
        if context.contains(&target) {
            return Err(Error::InvalidConfig("target column used as context".into()));
        }
        let n = d.n_rows();
        if n < MIN_ROWS {
            return Err(Error::NotEnoughSamples { needed: MIN_ROWS, got: n });
        }
        let targets = target_values(d, target)?;
        let target_map = match config.target_transform {
            TargetTransform::Empirical => RankMap::fit_numeric(&targets)?,
            TargetTransform::Redshift => RankMap::redshift(),
        };
        let basis = BasisSpec::new(config.degree)?;
        let m = config.degree;

        // Target basis values, n x m.
        let mut b = DMatrix::zeros(n, m);
        let mut buf = vec![0.0; m];
        for (t, &y) in targets.iter().enumerate() {
            basis.eval_into(target_map.to_uniform(y)?, &mut buf)?;
            for (i, &v) in buf.iter().enumerate() {
                b[(t, i)] = v;
            }
        }

        let encoder = FeatureEncoder::fit(d, context, basis, config.pair_products)?;
        let raw = encoder.encode(d)?;
        let standardizer = Standardizer::fit(&raw)?;
        let x = standardizer.apply(&raw)?;
        let p = x.ncols();

        let rank = config.rank.min(p).min(m);
        let mut coefficient_models = Vec::with_capacity(rank);
        if rank > 0 {
            let cca = cca_fit(&x, &b, rank, config.ridge)?;
            let rotation = orthonormalize_columns(&cca.y_directions);
            let rotated = &b * &rotation;
            for s in 0..rank {
                let y: Vec<f64> = rotated.column(s).iter().copied().collect();
                let lasso = lasso_fit_named(&x, &y, config.lambda, &format!("a{}", s + 1))?;
                coefficient_models.push(CoefficientModel {
                    direction: rotation.column(s).iter().copied().collect(),
                    canonical_correlation: cca.correlations[s],
                    lasso,
                });
            }
        }

        Ok(DensityModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            schema: d.columns.clone(),
            target_index: target,
            context: context.to_vec(),
            degree: m,
            target_map,
            encoder,
            standardizer,
            coefficient_models,
            calibration: config.calibration,
        })
    }

    pub fn target_name(&self) -> &str {
        &self.schema[self.target_index].name
    }

    pub fn rank(&self) -> usize {
        self.coefficient_models.len()
    }

    /// The same model with every coefficient and intercept set to zero.
    pub fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for cm in &mut z.coefficient_models {
            cm.lasso.intercept = 0.0;
            cm.lasso.coefficients.iter_mut().for_each(|c| *c = 0.0);
        }
        z
    }

    /// Encoded, standardized features of a full-schema row.
    pub fn features(&self, row: &[Value]) -> Result<Vec<f64>> {
        if row.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} cells, model schema has {}",
                row.len(),
                self.schema.len()
            )));
        }
        let mut x = self.encoder.encode_row(row)?;
        self.standardizer.apply_row(&mut x);
        Ok(x)
    }

    /// Evaluate `1 + sum_i f_i(y) a_i(x)` on the lattice.
    pub fn predict_raw(&self, row: &[Value]) -> Result<RawDensity> {
        let x = self.features(row)?;
        let rotated = self
            .coefficient_models
            .iter()
            .map(|cm| cm.lasso.predict_row(&x))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.raw_from_rotated(rotated))
    }

    /// Lattice of the linear combination for given rotated coefficients.
    pub fn raw_from_rotated(&self, rotated: Vec<f64>) -> RawDensity {
        let mut coefficients = vec![0.0; self.degree];
        for (cm, a) in self.coefficient_models.iter().zip(&rotated) {
            for (c, d) in coefficients.iter_mut().zip(&cm.direction) {
                *c += d * a;
            }
        }
        let lattice = raw_lattice(&coefficients, &self.calibration);
        RawDensity {
            rotated,
            coefficients,
            lattice,
        }
    }

    pub fn predict(&self, row: &[Value]) -> Result<PredictedDensity> {
        let raw = self.predict_raw(row)?;
        Ok(PredictedDensity {
            lattice: calibrate(&raw.lattice, &self.calibration)?,
            raw_coefficients: raw.rotated,
        })
    }

    /// Normalized position of a raw target value.
    pub fn normalize_target(&self, actual: &Value) -> Result<f64> {
        match actual {
            Value::Num(v) => self.target_map.to_uniform(*v),
            other => Err(Error::UnknownCategory(other.to_string())),
        }
    }

    /// Natural log of the predicted density in the cell containing the
    /// normalized actual value.
    pub fn log_likelihood(&self, row: &[Value], actual: &Value) -> Result<f64> {
        let u = self.normalize_target(actual)?;
        self.predict(row)?.log_density_at(u)
    }

    pub fn to_original_scale(&self, pd: &PredictedDensity) -> Result<Vec<OriginalCell>> {
        pd.to_original_scale(&self.target_map)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: DensityModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::Unsupported(format!(
                "model document `{}` version {}",
                model.format, model.version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// `1 + sum_i c_i f_i(y_g)` at the cell centers.
pub fn raw_lattice(coefficients: &[f64], calibration: &CalibrationConfig) -> Vec<f64> {
    if coefficients.is_empty() {
        return vec![1.0; calibration.lattice_size];
    }
    let basis = BasisSpec::new(coefficients.len()).expect("nonempty basis");
    let mut f = vec![0.0; coefficients.len()];
    calibration
        .centers()
        .map(|y| {
            basis.eval_into(y, &mut f).expect("cell centers lie in (0, 1)");
            1.0 + f.iter().zip(coefficients).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

fn target_values(d: &Dataset, target: usize) -> Result<Vec<f64>> {
    d.column(target)
        .map(|v| match v {
            Value::Num(x) => Ok(*x),
            Value::Missing => Err(Error::SchemaMismatch(format!(
                "missing value in target column `{}`",
                d.columns[target].name
            ))),
            Value::Text(s) => Err(Error::Unsupported(format!("textual target value `{s}`"))),
        })
        .collect()
}
