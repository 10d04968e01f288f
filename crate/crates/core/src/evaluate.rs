//! Cross-validated log-likelihood, per-variable relevance and novelty, and
//! plot-ready tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityConfig, DensityModel};
use crate::error::{Error, Result};
use crate::ingest::Dataset;

pub const DEFAULT_FOLDS: usize = 10;
/// Variables at or below this relevance are dropped by screening.
pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 0.01;

/// Split `0..n` into `k` disjoint folds after a seeded shuffle. Fold sizes
/// differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!("{k} folds for {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub density: DensityConfig,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            density: DensityConfig::default(),
            folds: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

/// Held-out prediction for one data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: usize,
    pub fold: usize,
    /// Target normalized with the training folds' rank map.
    pub actual: f64,
    pub density: f64,
    pub log_density: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    pub context: Vec<String>,
    pub fold_log_likelihoods: Vec<f64>,
    pub mean_log_likelihood: f64,
    pub fraction_below_one: f64,
    pub points: Vec<PointRecord>,
}

/// k-fold cross-validation of the density model over `context` columns.
/// Normalization, encoding and standardization are fitted on training folds only.
pub fn cross_validate(d: &Dataset, context: &[usize], config: &CvConfig) -> Result<CvReport> {
    config.density.validate()?;
    let target = d.target()?;
    let folds = kfold_split(d.n_rows(), config.folds, config.seed)?;

    let per_fold: Vec<Vec<PointRecord>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; d.n_rows()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..d.n_rows()).filter(|&i| !in_test[i]).collect();
            let model = DensityModel::fit_with_context(&d.subset(&train), context, &config.density)?;
            test.iter()
                .map(|&i| {
                    let row = &d.rows[i];
                    let actual = model.normalize_target(&row[target])?;
                    let pd = model.predict(row)?;
                    let density = pd.density_at(actual)?;
                    let (mean, variance) = pd.moments();
                    Ok(PointRecord {
                        id: i,
                        fold: f,
                        actual,
                        density,
                        log_density: density.ln(),
                        mean,
                        variance,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let fold_log_likelihoods = per_fold
        .iter()
        .map(|pts| pts.iter().map(|p| p.log_density).sum::<f64>() / pts.len() as f64)
        .collect();
    let mut points: Vec<PointRecord> = per_fold.into_iter().flatten().collect();
    points.sort_by_key(|p| p.id);
    let n = points.len() as f64;
    let mean_log_likelihood = points.iter().map(|p| p.log_density).sum::<f64>() / n;
    let fraction_below_one = points.iter().filter(|p| p.density < 1.0).count() as f64 / n;

    Ok(CvReport {
        folds: config.folds,
        seed: config.seed,
        context: context.iter().map(|&j| d.columns[j].name.clone()).collect(),
        fold_log_likelihoods,
        mean_log_likelihood,
        fraction_below_one,
        points,
    })
}

/// Cross-validated log-likelihood predicting from column `j` alone.
pub fn relevance(d: &Dataset, j: usize, config: &CvConfig) -> Result<f64> {
    check_context(d, j)?;
    Ok(cross_validate(d, &[j], config)?.mean_log_likelihood)
}

/// Drop in cross-validated log-likelihood when `j` is removed from `context`.
/// Both runs share the same folds.
pub fn novelty(d: &Dataset, context: &[usize], j: usize, config: &CvConfig) -> Result<f64> {
    check_context(d, j)?;
    if !context.contains(&j) {
        return Err(Error::InvalidConfig(format!("column {j} is not in the context")));
    }
    if context.len() < 2 {
        return Err(Error::InvalidConfig("novelty needs at least two context columns".into()));
    }
    let without: Vec<usize> = context.iter().copied().filter(|&c| c != j).collect();
    let full = cross_validate(d, context, config)?.mean_log_likelihood;
    let reduced = cross_validate(d, &without, config)?.mean_log_likelihood;
    Ok(full - reduced)
}

fn check_context(d: &Dataset, j: usize) -> Result<()> {
    if j >= d.n_cols() {
        return Err(Error::UnknownColumn(format!("#{j}")));
    }
    if Some(j) == d.target_index {
        return Err(Error::InvalidConfig("the target is not a context column".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub name: String,
    pub column: usize,
    pub relevance: f64,
    pub novelty: Option<f64>,
    pub selected: bool,
}

/// Relevance of every context column, sorted by decreasing relevance.
/// Columns with relevance above `threshold` are marked selected.
pub fn screen(d: &Dataset, context: &[usize], config: &CvConfig, threshold: f64) -> Result<Vec<VariableReport>> {
    let mut out = context
        .iter()
        .map(|&j| {
            let r = relevance(d, j, config)?;
            Ok(VariableReport {
                name: d.columns[j].name.clone(),
                column: j,
                relevance: r,
                novelty: None,
                selected: r > threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then(a.column.cmp(&b.column)));
    Ok(out)
}

/// Relevance and novelty of every context column, in context order.
pub fn variable_report(d: &Dataset, context: &[usize], config: &CvConfig, threshold: f64) -> Result<Vec<VariableReport>> {
    let full = cross_validate(d, context, config)?.mean_log_likelihood;
    context
        .iter()
        .map(|&j| {
            let r = relevance(d, j, config)?;
            let novelty = if context.len() >= 2 {
                let without: Vec<usize> = context.iter().copied().filter(|&c| c != j).collect();
                Some(full - cross_validate(d, &without, config)?.mean_log_likelihood)
            } else {
                None
            };
            Ok(VariableReport {
                name: d.columns[j].name.clone(),
                column: j,
                relevance: r,
                novelty,
                selected: r > threshold,
            })
        })
        .collect()
}

pub const SORTED_DENSITIES_FILE: &str = "densities_sorted.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const ACTUAL_VS_MEAN_FILE: &str = "actual_vs_mean.tsv";
pub const MEAN_VS_STD_FILE: &str = "mean_vs_std.tsv";
pub const VARIABLES_FILE: &str = "variables.tsv";

/// Write tab-separated plot tables into `dir`:
///
/// * `densities_sorted.tsv`: `rank, quantile, density` with densities at the
///   actual values sorted ascending; `summary.tsv` holds the fraction below 1.
/// * `actual_vs_mean.tsv`: `id, actual, predicted_mean`.
/// * `mean_vs_std.tsv`: `id, predicted_mean, predicted_std[, <color column>]`.
/// * `variables.tsv`: `variable, relevance, novelty`, when `variables` is given.
pub fn emit_plot_data(
    report: &CvReport,
    d: &Dataset,
    dir: &Path,
    variables: Option<&[VariableReport]>,
    color_column: Option<usize>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };

    let n = report.points.len();
    let mut dens: Vec<f64> = report.points.iter().map(|p| p.density).collect();
    dens.sort_by(f64::total_cmp);
    let mut body = String::from("rank\tquantile\tdensity\n");
    for (i, v) in dens.iter().enumerate() {
        let _ = writeln!(body, "{}\t{}\t{}", i + 1, (i as f64 + 0.5) / n as f64, v);
    }
    write(SORTED_DENSITIES_FILE, body)?;

    let mut body = String::from("key\tvalue\n");
    let _ = writeln!(body, "points\t{n}");
    let _ = writeln!(body, "mean_log_likelihood\t{}", report.mean_log_likelihood);
    let _ = writeln!(body, "fraction_below_one\t{}", report.fraction_below_one);
    write(SUMMARY_FILE, body)?;

    let mut body = String::from("id\tactual\tpredicted_mean\n");
    for p in &report.points {
        let _ = writeln!(body, "{}\t{}\t{}", p.id, p.actual, p.mean);
    }
    write(ACTUAL_VS_MEAN_FILE, body)?;

    if let Some(c) = color_column {
        if c >= d.n_cols() {
            return Err(Error::UnknownColumn(format!("#{c}")));
        }
    }
    let mut body = String::from("id\tpredicted_mean\tpredicted_std");
    if let Some(c) = color_column {
        let _ = write!(body, "\t{}", d.columns[c].name);
    }
    body.push('\n');
    for p in &report.points {
        let _ = write!(body, "{}\t{}\t{}", p.id, p.mean, p.variance.sqrt());
        if let Some(c) = color_column {
            let _ = write!(body, "\t{}", d.rows[p.id][c]);
        }
        body.push('\n');
    }
    write(MEAN_VS_STD_FILE, body)?;

    if let Some(vars) = variables {
        let mut body = String::from("variable\trelevance\tnovelty\n");
        for v in vars {
            let novelty = v.novelty.map_or_else(String::new, |x| x.to_string());
            let _ = writeln!(body, "{}\t{}\t{}", v.name, v.relevance, novelty);
        }
        write(VARIABLES_FILE, body)?;
    }
    Ok(written)
}
