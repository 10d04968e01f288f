//! CSV ingestion and column-kind inference.
//!
//! Cells are read as raw text, each column is classified as continuous,
//! discrete or mixed (continuous with a single special discrete value), and
//! the cells are then typed according to that kind.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns with at most this many distinct values are candidates for `Discrete`.
pub const DISCRETE_MAX_LEVELS: usize = 20;
/// A special value must cover at least this fraction of rows to make a column `Mixed`.
pub const MIXED_MIN_FRACTION: f64 = 0.01;

/// A typed table cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Missing,
    Num(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Missing => 0,
            Value::Num(_) => 1,
            Value::Text(_) => 2,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Missing < numbers (numeric order) < text (lexicographic order).
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Missing => {}
            Value::Num(v) => v.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Missing => f.write_str("MISSING"),
            Value::Num(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Discrete,
    Mixed,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Discrete => "discrete",
            ColumnKind::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Extra sentinel treated as missing, besides the empty cell and `NaN`.
    pub missing_marker: Option<String>,
    /// Discrete: every observed level in order. Mixed: the single special value.
    pub discrete_levels: Vec<Value>,
    /// Whether non-missing cells are numbers (false only for textual discrete columns).
    pub numeric: bool,
}

impl ColumnSpec {
    /// The special value of a mixed column.
    pub fn special(&self) -> Option<&Value> {
        match self.kind {
            ColumnKind::Mixed => self.discrete_levels.first(),
            _ => None,
        }
    }

    pub fn is_missing_text(&self, raw: &str) -> bool {
        is_missing_marker(raw, self.missing_marker.as_deref())
    }

    /// Type one raw CSV cell according to this column.
    pub fn parse_cell(&self, raw: &str) -> Value {
        let raw = raw.trim();
        if self.is_missing_text(raw) {
            return Value::Missing;
        }
        if self.numeric {
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Value::Num(v),
                _ => Value::Text(raw.to_string()),
            }
        } else {
            Value::Text(raw.to_string())
        }
    }
}

fn is_missing_marker(raw: &str, sentinel: Option<&str>) -> bool {
    let raw = raw.trim();
    raw.is_empty() || raw.eq_ignore_ascii_case("nan") || sentinel.is_some_and(|s| s == raw)
}

/// Per-column overrides applied before inference.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnOverride {
    pub kind: Option<ColumnKind>,
    pub missing_marker: Option<String>,
}

pub type ColumnOverrides = BTreeMap<String, ColumnOverride>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<Value>>,
    pub target_index: Option<usize>,
    overrides: ColumnOverrides,
}

impl Dataset {
    /// Build a dataset from raw text cells, inferring column kinds.
    pub fn from_raw(
        names: Vec<String>,
        raw_rows: Vec<Vec<String>>,
        overrides: &ColumnOverrides,
    ) -> Result<Self> {
        if names.is_empty() || raw_rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        for (i, row) in raw_rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    found: row.len(),
                    expected: names.len(),
                });
            }
        }
        let mut columns = Vec::with_capacity(names.len());
        for (j, name) in names.into_iter().enumerate() {
            let cells: Vec<&str> = raw_rows.iter().map(|r| r[j].as_str()).collect();
            columns.push(infer_column(name, &cells, overrides));
        }
        let rows = raw_rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&columns)
                    .map(|(raw, spec)| spec.parse_cell(raw))
                    .collect()
            })
            .collect();
        Ok(Dataset {
            columns,
            rows,
            target_index: None,
            overrides: overrides.clone(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn with_target(mut self, name: &str) -> Result<Self> {
        self.target_index = Some(self.column_index(name)?);
        Ok(self)
    }

    pub fn target(&self) -> Result<usize> {
        self.target_index.ok_or(Error::NoTarget)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |r| &r[j])
    }

    /// All columns except the target, in order.
    pub fn context_indices(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&j| Some(j) != self.target_index)
            .collect()
    }

    /// Dataset restricted to the given rows (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            target_index: self.target_index,
            overrides: self.overrides.clone(),
        }
    }

    fn raw_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&self.columns)
                    .map(|(v, spec)| match v {
                        Value::Missing => spec.missing_marker.clone().unwrap_or_default(),
                        Value::Num(x) => format!("{x:?}"),
                        Value::Text(s) => s.clone(),
                    })
                    .collect()
            })
            .collect()
    }
}

fn infer_column(name: String, cells: &[&str], overrides: &ColumnOverrides) -> ColumnSpec {
    let ov = overrides.get(&name).cloned().unwrap_or_default();
    let marker = ov.missing_marker.clone();
    let n = cells.len();
    let present: Vec<&str> = cells
        .iter()
        .map(|c| c.trim())
        .filter(|c| !is_missing_marker(c, marker.as_deref()))
        .collect();
    let n_missing = n - present.len();
    let numbers: Option<Vec<f64>> = present
        .iter()
        .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();

    let mut spec = ColumnSpec {
        name,
        kind: ColumnKind::Continuous,
        missing_marker: marker,
        discrete_levels: Vec::new(),
        numeric: numbers.is_some(),
    };

    let Some(numbers) = numbers else {
        spec.kind = ColumnKind::Discrete;
        spec.discrete_levels = observed_levels(&spec, cells);
        return spec;
    };

    let mut counts: BTreeMap<Value, usize> = BTreeMap::new();
    for &v in &numbers {
        *counts.entry(Value::Num(v)).or_default() += 1;
    }
    let distinct = counts.len();
    // A column is discrete when it has few levels that repeat on average.
    let looks_discrete = distinct <= DISCRETE_MAX_LEVELS && distinct * 2 <= numbers.len();
    let min_special = ((MIXED_MIN_FRACTION * n as f64).ceil() as usize).max(2);

    let kind = match ov.kind {
        Some(kind) => kind,
        None if looks_discrete => ColumnKind::Discrete,
        None if n_missing > 0 => ColumnKind::Mixed,
        None if counts.values().any(|&c| c >= min_special) => ColumnKind::Mixed,
        None => ColumnKind::Continuous,
    };
    spec.kind = kind;
    match kind {
        ColumnKind::Discrete => spec.discrete_levels = observed_levels(&spec, cells),
        ColumnKind::Mixed => {
            let special = if n_missing > 0 || numbers.is_empty() {
                Value::Missing
            } else {
                // Most frequent value; the smallest wins ties.
                let best = counts.values().copied().max().unwrap_or(0);
                counts
                    .iter()
                    .find(|(_, &c)| c == best)
                    .map(|(v, _)| v.clone())
                    .unwrap_or(Value::Missing)
            };
            spec.discrete_levels = vec![special];
        }
        ColumnKind::Continuous => {}
    }
    spec
}

fn observed_levels(spec: &ColumnSpec, cells: &[&str]) -> Vec<Value> {
    cells
        .iter()
        .map(|c| spec.parse_cell(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Read a CSV table from any reader.
pub fn read_csv<R: Read>(reader: R, overrides: &ColumnOverrides) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Dataset::from_raw(names, rows, overrides)
}

/// Load a CSV file with a header row, inferring column kinds.
pub fn load_csv(path: impl AsRef<Path>, overrides: &ColumnOverrides) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), overrides)
}

/// Concatenate two datasets with identical headers, appending a discrete
/// column holding `a_tag` / `b_tag` for the file of origin.
pub fn merge_datasets(
    a: &Dataset,
    a_tag: &str,
    b: &Dataset,
    b_tag: &str,
    tag_column_name: &str,
) -> Result<Dataset> {
    merge_tagged(&[(a, a_tag), (b, b_tag)], tag_column_name)
}

/// Concatenate any number of datasets with identical headers, appending a
/// discrete tag column. Column kinds are re-inferred on the merged rows.
pub fn merge_tagged(parts: &[(&Dataset, &str)], tag_column_name: &str) -> Result<Dataset> {
    let (first, _) = parts.first().ok_or(Error::EmptyTable)?;
    let names: Vec<&str> = first.columns.iter().map(|c| c.name.as_str()).collect();
    for (d, _) in &parts[1..] {
        let other: Vec<&str> = d.columns.iter().map(|c| c.name.as_str()).collect();
        if other != names {
            return Err(Error::SchemaMismatch(format!(
                "headers differ: {names:?} vs {other:?}"
            )));
        }
    }
    if names.contains(&tag_column_name) {
        return Err(Error::DuplicateColumn(tag_column_name.to_string()));
    }
    let mut merged_names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    merged_names.push(tag_column_name.to_string());

    let mut overrides = ColumnOverrides::new();
    for (d, _) in parts {
        for (k, v) in &d.overrides {
            overrides.entry(k.clone()).or_insert_with(|| v.clone());
        }
        // Keep sentinels so the re-typed cells stay missing.
        for spec in &d.columns {
            if let Some(m) = &spec.missing_marker {
                overrides
                    .entry(spec.name.clone())
                    .or_default()
                    .missing_marker
                    .get_or_insert_with(|| m.clone());
            }
        }
    }
    overrides.entry(tag_column_name.to_string()).or_default().kind = Some(ColumnKind::Discrete);

    let mut raw = Vec::new();
    for (d, tag) in parts {
        for mut r in d.raw_rows() {
            r.push(tag.to_string());
            raw.push(r);
        }
    }
    let mut merged = Dataset::from_raw(merged_names, raw, &overrides)?;
    merged.target_index = first.target_index;
    Ok(merged)
}

/// Drop rows whose target cell is missing, preserving order.
pub fn select_rows_with_target(d: &Dataset) -> Result<Dataset> {
    let t = d.target()?;
    let keep: Vec<usize> = (0..d.n_rows())
        .filter(|&i| !d.rows[i][t].is_missing())
        .collect();
    if keep.is_empty() {
        return Err(Error::NoRows);
    }
    Ok(d.subset(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Dataset {
        read_csv(text.as_bytes(), &ColumnOverrides::new()).unwrap()
    }

    #[test]
    fn distinct_numbers_are_continuous() {
        let d = table("x\n1.2\n3.4\n5.6\n7.8\n");
        assert_eq!(d.columns[0].kind, ColumnKind::Continuous);
        assert!(d.columns[0].discrete_levels.is_empty());
    }

    #[test]
    fn text_column_is_discrete() {
        let d = table("class\nbll\nfsrq\nbll\nrdg\n");
        let c = &d.columns[0];
        assert_eq!(c.kind, ColumnKind::Discrete);
        assert_eq!(c.discrete_levels.len(), 3);
        assert_eq!(d.rows[1][0], Value::Text("fsrq".into()));
    }

    #[test]
    fn missing_cells_make_column_mixed() {
        let d = table("z,k\n2.5,a\n,b\n3.1,c\nNaN,d\n");
        let c = &d.columns[0];
        assert_eq!(c.kind, ColumnKind::Mixed);
        assert_eq!(c.special(), Some(&Value::Missing));
        assert!(d.rows[1][0].is_missing());
        assert!(d.rows[3][0].is_missing());
    }

    #[test]
    fn repeated_sentinel_makes_column_mixed() {
        let mut text = String::from("e\n");
        for i in 0..100 {
            if i % 10 == 0 {
                text.push_str("0\n");
            } else {
                text.push_str(&format!("{}.5\n", i));
            }
        }
        let d = table(&text);
        assert_eq!(d.columns[0].kind, ColumnKind::Mixed);
        assert_eq!(d.columns[0].special(), Some(&Value::Num(0.0)));
    }

    #[test]
    fn few_repeated_numbers_are_discrete() {
        let d = table("flag\n0\n1\n0\n1\n1\n0\n");
        assert_eq!(d.columns[0].kind, ColumnKind::Discrete);
        assert_eq!(d.columns[0].discrete_levels, vec![Value::Num(0.0), Value::Num(1.0)]);
    }

    #[test]
    fn override_and_sentinel() {
        let mut ov = ColumnOverrides::new();
        ov.insert(
            "x".into(),
            ColumnOverride {
                kind: Some(ColumnKind::Continuous),
                missing_marker: Some("-999".into()),
            },
        );
        let d = read_csv("x\n1\n-999\n2\n".as_bytes(), &ov).unwrap();
        assert_eq!(d.columns[0].kind, ColumnKind::Continuous);
        assert!(d.rows[1][0].is_missing());
    }

    #[test]
    fn ragged_and_empty_tables_fail() {
        let err = read_csv("a,b\n1,2\n3\n".as_bytes(), &ColumnOverrides::new()).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 2, .. } | Error::Csv(_)), "{err:?}");
        let err = read_csv("a,b\n".as_bytes(), &ColumnOverrides::new()).unwrap_err();
        assert!(matches!(err, Error::EmptyTable));
        let err = read_csv("a,a\n1,2\n".as_bytes(), &ColumnOverrides::new()).unwrap_err();
        assert!(matches!(err, Error::DuplicateColumn(_)));
    }

    #[test]
    fn quoted_fields() {
        let d = table("name,v\n\"a, b\",1\n\"c\"\"d\",2\n");
        assert_eq!(d.rows[0][0], Value::Text("a, b".into()));
        assert_eq!(d.rows[1][0], Value::Text("c\"d".into()));
    }

    #[test]
    fn merge_appends_tag_column() {
        let a = table("x,y\n1,2\n3,4\n5,6\n");
        let b = table("x,y\n7,8\n");
        let m = merge_datasets(&a, "low", &b, "high", "latitude").unwrap();
        assert_eq!(m.n_rows(), 4);
        assert_eq!(m.n_cols(), 3);
        assert_eq!(m.columns[2].kind, ColumnKind::Discrete);
        assert_eq!(m.rows[3][2], Value::Text("high".into()));

        let self_merge = merge_datasets(&a, "first", &a, "second", "src").unwrap();
        assert_eq!(self_merge.n_rows(), 6);
        assert!(self_merge.rows[..3].iter().all(|r| r[2] == Value::Text("first".into())));
        assert!(self_merge.rows[3..].iter().all(|r| r[2] == Value::Text("second".into())));

        let c = table("x,z\n1,2\n");
        assert!(matches!(
            merge_datasets(&a, "a", &c, "c", "src"),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn select_rows_drops_missing_targets() {
        let d = table("z,x\n0.1,1\n,2\n0.3,3\n").with_target("z").unwrap();
        let s = select_rows_with_target(&d).unwrap();
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.rows[1][1], Value::Num(3.0));

        let full = table("z,x\n0.1,1\n0.2,2\n").with_target("z").unwrap();
        assert_eq!(select_rows_with_target(&full).unwrap(), full);

        let none = table("z,x\n,1\n,2\n").with_target("z").unwrap();
        assert!(matches!(select_rows_with_target(&none), Err(Error::NoRows)));
    }
}
