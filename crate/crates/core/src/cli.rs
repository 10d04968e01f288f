//! Command-line surface.
//!
//! Settings resolve as: command-line flag, then `--config` file, then default.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::density::{CalibrationKind, DensityConfig, DensityModel, OriginalCell, TargetTransform};
use crate::error::{Error, Result};
use crate::evaluate::{self, CvConfig, VariableReport};
use crate::ingest::{self, ColumnOverrides, Dataset, Value};

/// Every setting of a run, after resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub target: String,
    pub degree: usize,
    pub rank: usize,
    pub lambda: f64,
    pub folds: usize,
    pub lattice: usize,
    pub calibration: CalibrationKind,
    pub threshold: f64,
    pub pair_products: bool,
    pub seed: u64,
    pub target_transform: TargetTransform,
    /// Context columns; empty means every non-target column.
    pub columns: Vec<String>,
    pub tag_column: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DensityConfig::default();
        RunConfig {
            target: String::new(),
            degree: d.degree,
            rank: d.rank,
            lambda: d.lambda,
            folds: evaluate::DEFAULT_FOLDS,
            lattice: d.calibration.lattice_size,
            calibration: d.calibration.kind,
            threshold: evaluate::DEFAULT_RELEVANCE_THRESHOLD,
            pair_products: false,
            seed: 0,
            target_transform: TargetTransform::Empirical,
            columns: Vec::new(),
            tag_column: "source".into(),
        }
    }
}

/// Flat key-value config file; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub target: Option<String>,
    pub degree: Option<usize>,
    pub rank: Option<usize>,
    pub lambda: Option<f64>,
    pub folds: Option<usize>,
    pub lattice: Option<usize>,
    pub calibration: Option<String>,
    pub threshold: Option<f64>,
    pub pair_products: Option<bool>,
    pub seed: Option<u64>,
    pub target_transform: Option<String>,
    pub columns: Option<Vec<String>>,
    pub tag_column: Option<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input CSV files; several files are concatenated with a source tag column.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Maximum basis degree m.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Number of CCA-rotated coefficients predicted (0 = uniform baseline).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub lattice: Option<usize>,
    /// `softplus_like` or `clip`.
    #[arg(long)]
    pub calibration: Option<String>,
    /// Relevance threshold for screening.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub pair_products: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `empirical` or `redshift`.
    #[arg(long)]
    pub target_transform: Option<String>,
    /// Comma-separated context columns.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long)]
    pub tag_column: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; reports go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let mut c = RunConfig::default();
        macro_rules! pick {
            ($field:ident) => {
                if let Some(v) = self.$field.clone().or(file.$field.clone()) {
                    c.$field = v;
                }
            };
        }
        pick!(target);
        pick!(degree);
        pick!(rank);
        pick!(lambda);
        pick!(folds);
        pick!(lattice);
        pick!(threshold);
        pick!(seed);
        pick!(columns);
        pick!(tag_column);
        if let Some(s) = self.calibration.clone().or(file.calibration) {
            c.calibration = s.parse()?;
        }
        if let Some(s) = self.target_transform.clone().or(file.target_transform) {
            c.target_transform = s.parse()?;
        }
        c.pair_products = self.pair_products || file.pair_products.unwrap_or(false);
        if c.target.is_empty() {
            return Err(Error::InvalidConfig("no target column given (--target)".into()));
        }
        Ok(c)
    }
}

impl RunConfig {
    pub fn density(&self) -> DensityConfig {
        let mut d = DensityConfig {
            degree: self.degree,
            rank: self.rank,
            lambda: self.lambda,
            pair_products: self.pair_products,
            target_transform: self.target_transform,
            ..DensityConfig::default()
        };
        d.calibration.kind = self.calibration;
        d.calibration.lattice_size = self.lattice;
        d
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            density: self.density(),
            folds: self.folds,
            seed: self.seed,
        }
    }

    pub fn context(&self, d: &Dataset) -> Result<Vec<usize>> {
        if self.columns.is_empty() {
            return Ok(d.context_indices());
        }
        let target = d.target()?;
        let mut ctx = Vec::with_capacity(self.columns.len());
        for name in &self.columns {
            let j = d.column_index(name.trim())?;
            if j == target {
                return Err(Error::InvalidConfig(format!("`{name}` is the target")));
            }
            if !ctx.contains(&j) {
                ctx.push(j);
            }
        }
        Ok(ctx)
    }
}

/// Load one or more CSV files, merging several by source tag, and keep the
/// rows whose target is present.
pub fn load_inputs(inputs: &[PathBuf], config: &RunConfig) -> Result<Dataset> {
    let overrides = ColumnOverrides::new();
    let tables = inputs
        .iter()
        .map(|p| ingest::load_csv(p, &overrides))
        .collect::<Result<Vec<_>>>()?;
    let d = match tables.len() {
        0 => return Err(Error::EmptyTable),
        1 => tables.into_iter().next().expect("one table"),
        _ => {
            let tags: Vec<String> = inputs.iter().map(|p| stem(p)).collect();
            let parts: Vec<(&Dataset, &str)> = tables.iter().zip(&tags).map(|(d, t)| (d, t.as_str())).collect();
            ingest::merge_tagged(&parts, &config.tag_column)?
        }
    };
    ingest::select_rows_with_target(&d.with_target(&config.target)?)
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Parser)]
#[command(name = "hcr", version, about = "Conditional density prediction with Hierarchical Correlation Reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relevance of each context variable and the selection above the threshold.
    Screen {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-validated log-likelihood report.
    Cv {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit on all rows and write the serialized model.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Predict densities for every row of the inputs with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Input CSV files with the model's context columns.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Include the calibrated lattice and original-scale masses per row.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plot-ready tables from cross-validation.
    Plots {
        #[command(flatten)]
        common: CommonArgs,
        /// Column whose values color the mean/std scatter.
        #[arg(long)]
        color: Option<String>,
        /// Also compute relevance and novelty per variable.
        #[arg(long)]
        variables: bool,
    },
}

#[derive(Debug, Serialize)]
struct ScreenReport {
    threshold: f64,
    variables: Vec<VariableReport>,
    selected: Vec<String>,
}

#[derive(Debug, Serialize)]
struct RowPrediction {
    row: usize,
    mean: f64,
    variance: f64,
    /// Median mapped back to original units, where invertible.
    original_median: Option<f64>,
    log_density: Option<f64>,
    coefficients: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lattice: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    original_cells: Option<Vec<OriginalCell>>,
}

fn emit(out: Option<&Path>, file: &str, body: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(file);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            writeln!(stdout, "wrote {}", path.display()).map_err(|e| Error::io("<stdout>", e))
        }
        None => stdout
            .write_all(body.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Execute a parsed command, writing reports to `stdout` or `--out`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Screen { common } => {
            let cfg = common.resolve()?;
            let d = load_inputs(&common.inputs, &cfg)?;
            let ctx = cfg.context(&d)?;
            let variables = evaluate::screen(&d, &ctx, &cfg.cv(), cfg.threshold)?;
            let selected = variables.iter().filter(|v| v.selected).map(|v| v.name.clone()).collect();
            let report = ScreenReport {
                threshold: cfg.threshold,
                variables,
                selected,
            };
            emit(common.out.as_deref(), "screen.json", &json(&report)?, stdout)
        }
        Command::Cv { common } => {
            let cfg = common.resolve()?;
            let d = load_inputs(&common.inputs, &cfg)?;
            let ctx = cfg.context(&d)?;
            let report = evaluate::cross_validate(&d, &ctx, &cfg.cv())?;
            emit(common.out.as_deref(), "cv_report.json", &json(&report)?, stdout)
        }
        Command::Train { common } => {
            let cfg = common.resolve()?;
            let d = load_inputs(&common.inputs, &cfg)?;
            let ctx = cfg.context(&d)?;
            let model = DensityModel::fit_with_context(&d, &ctx, &cfg.density())?;
            let mut body = model.to_json()?;
            body.push('\n');
            emit(common.out.as_deref(), "model.json", &body, stdout)
        }
        Command::Predict {
            model,
            inputs,
            full,
            out,
        } => {
            let model = DensityModel::load(&model)?;
            let mut preds = Vec::new();
            for path in &inputs {
                let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let rows = rows_in_schema(&model, file)?;
                for row in rows {
                    preds.push(predict_row(&model, preds.len(), &row, full)?);
                }
            }
            emit(out.as_deref(), "predictions.json", &json(&preds)?, stdout)
        }
        Command::Plots {
            common,
            color,
            variables,
        } => {
            let cfg = common.resolve()?;
            let d = load_inputs(&common.inputs, &cfg)?;
            let ctx = cfg.context(&d)?;
            let cv = cfg.cv();
            let report = evaluate::cross_validate(&d, &ctx, &cv)?;
            let vars = if variables {
                Some(evaluate::variable_report(&d, &ctx, &cv, cfg.threshold)?)
            } else {
                None
            };
            let color = color.map(|c| d.column_index(&c)).transpose()?;
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("plots"));
            let written = evaluate::emit_plot_data(&report, &d, &dir, vars.as_deref(), color)?;
            for p in written {
                writeln!(stdout, "wrote {}", p.display()).map_err(|e| Error::io("<stdout>", e))?;
            }
            Ok(())
        }
    }
}

/// Parse a CSV into rows laid out in the model's schema; absent columns
/// (typically the target) are filled with missing cells.
pub fn rows_in_schema<R: std::io::Read>(model: &DensityModel, reader: R) -> Result<Vec<Vec<Value>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let lookup: BTreeMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    for &j in &model.context {
        let name = &model.schema[j].name;
        if !lookup.contains_key(name.as_str()) {
            return Err(Error::SchemaMismatch(format!("input lacks context column `{name}`")));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                row: i + 1,
                found: rec.len(),
                expected: header.len(),
            });
        }
        let row = model
            .schema
            .iter()
            .map(|spec| match lookup.get(spec.name.as_str()) {
                Some(&k) => spec.parse_cell(&rec[k]),
                None => Value::Missing,
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

fn predict_row(model: &DensityModel, index: usize, row: &[Value], full: bool) -> Result<RowPrediction> {
    let pd = model.predict(row)?;
    let (mean, variance) = pd.moments();
    let actual = &row[model.target_index];
    let log_density = match actual {
        Value::Missing => None,
        v => Some(pd.log_density_at(model.normalize_target(v)?)?),
    };
    let cdf = pd.cdf();
    let g = cdf.len();
    let k = cdf.partition_point(|&c| c < 0.5).min(g - 1);
    let original_median = model.target_map.from_uniform((k as f64 + 0.5) / g as f64).ok();
    Ok(RowPrediction {
        row: index,
        mean,
        variance,
        original_median,
        log_density,
        coefficients: pd.raw_coefficients.clone(),
        original_cells: if full { model.to_original_scale(&pd).ok() } else { None },
        lattice: if full { Some(pd.lattice) } else { None },
    })
}
