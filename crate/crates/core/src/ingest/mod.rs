//! Bilateral-flow and node-attribute ingestion.
//!
//! File formats:
//! - edge CSV: header `reporter_iso3,partner_iso3,year,export_value_kusd`,
//!   weights are nonnegative decimals in thousands of USD
//! - attribute CSV: header `iso3,year,<attribute names...>`, empty field =
//!   missing value
//! - ISO universe: one iso3 code per line
//!
//! Records whose codes fall outside the supplied universe are dropped and
//! reported, not errors: real extracts contain aggregate territories that the
//! recognized-country list excludes.

mod impute;

pub use impute::{knn_impute, select_k_by_cv, CvSelection, DEFAULT_CV_MASK_FRACTION};

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TradeNetwork;
use crate::netstats::sample_sd;

/// Whether a column enters Euclidean distances (numeric) or is imputed by
/// donor majority vote (categorical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// One attribute column; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Option<f64>>,
}

impl AttributeColumn {
    pub fn missing_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let missing = self.values.iter().filter(|v| v.is_none()).count();
        missing as f64 / self.values.len() as f64
    }
}

/// Per-node covariates for a single period: one row per iso3 code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    pub rows: Vec<String>,
    pub columns: Vec<AttributeColumn>,
}

impl AttributeTable {
    pub fn new(rows: Vec<String>, columns: Vec<AttributeColumn>) -> Self {
        debug_assert!(columns.iter().all(|c| c.values.len() == rows.len()));
        AttributeTable { rows, columns }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, name: &str) -> Option<&AttributeColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn value(&self, row: usize, column: &str) -> Option<f64> {
        self.column(column).and_then(|c| c.values[row])
    }

    pub fn is_complete(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.values.iter().all(|v| v.is_some()))
    }

    /// Reorder rows to match the network's node indexing.
    ///
    /// Every network node must have a row; extra rows are dropped.
    pub fn aligned_to(&self, net: &TradeNetwork) -> Result<AttributeTable> {
        let mut order = Vec::with_capacity(net.node_count());
        for code in net.nodes() {
            let at = self
                .rows
                .iter()
                .position(|r| r == code)
                .ok_or_else(|| Error::MissingAttributeRow(code.clone()))?;
            order.push(at);
        }
        let columns = self
            .columns
            .iter()
            .map(|c| AttributeColumn {
                name: c.name.clone(),
                kind: c.kind,
                values: order.iter().map(|&i| c.values[i]).collect(),
            })
            .collect();
        Ok(AttributeTable {
            rows: net.nodes().to_vec(),
            columns,
        })
    }
}

/// Flow records for one year, with the codes that fell outside the universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecords {
    pub records: Vec<(String, String, f64)>,
    /// Unique out-of-universe codes, sorted; rows naming them were dropped.
    pub dropped_codes: Vec<String>,
    pub dropped_rows: usize,
}

/// Descriptive statistics of edge weights (thousands of USD, as stored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Read an ISO-universe file: one code per line, blank lines ignored.
pub fn read_universe(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn malformed(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Read bilateral flows for one year, filtered to the recognized universe.
///
/// Malformed rows and negative weights are hard errors with line numbers;
/// out-of-universe codes only drop their rows. Requesting a year the file
/// does not contain is an error.
pub fn read_flows(path: &Path, year: i32, universe: &[String]) -> Result<FlowRecords> {
    let known: HashSet<&str> = universe.iter().map(String::as_str).collect();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| malformed(path, 1, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    let expected = ["reporter_iso3", "partner_iso3", "year", "export_value_kusd"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(malformed(
            path,
            1,
            format!("expected header {expected:?}, got {got:?}"),
        ));
    }

    let mut records = Vec::new();
    let mut dropped: HashSet<String> = HashSet::new();
    let mut dropped_rows = 0usize;
    let mut year_seen = false;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 4 {
            return Err(malformed(
                path,
                line,
                format!("expected 4 fields, got {}", row.len()),
            ));
        }
        let row_year: i32 = row[2]
            .parse()
            .map_err(|_| malformed(path, line, format!("bad year '{}'", &row[2])))?;
        if row_year != year {
            continue;
        }
        year_seen = true;
        let weight: f64 = row[3]
            .parse()
            .map_err(|_| malformed(path, line, format!("bad export value '{}'", &row[3])))?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(malformed(
                path,
                line,
                format!("negative or non-finite export value {weight}"),
            ));
        }
        let (src, tgt) = (&row[0], &row[1]);
        if !known.contains(src) || !known.contains(tgt) {
            if !known.contains(src) {
                dropped.insert(src.to_string());
            }
            if !known.contains(tgt) {
                dropped.insert(tgt.to_string());
            }
            dropped_rows += 1;
            continue;
        }
        records.push((src.to_string(), tgt.to_string(), weight));
    }
    if !year_seen {
        return Err(Error::YearNotPresent(year));
    }
    let mut dropped_codes: Vec<String> = dropped.into_iter().collect();
    dropped_codes.sort();
    Ok(FlowRecords {
        records,
        dropped_codes,
        dropped_rows,
    })
}

/// Read per-node attributes for one year.
///
/// Columns named in `categorical` must hold whole-number level codes; every
/// other attribute parses as a float. Rows outside the universe are dropped.
pub fn read_attributes(
    path: &Path,
    year: i32,
    universe: &[String],
    categorical: &[String],
) -> Result<AttributeTable> {
    let known: HashSet<&str> = universe.iter().map(String::as_str).collect();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| malformed(path, 1, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    let names: Vec<String> = headers.iter().map(str::to_string).collect();
    if names.len() < 3 || names[0] != "iso3" || names[1] != "year" {
        return Err(malformed(
            path,
            1,
            format!("expected header starting `iso3,year,<attributes>`, got {names:?}"),
        ));
    }
    let attr_names = &names[2..];

    let mut rows: Vec<String> = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); attr_names.len()];
    let mut seen: HashSet<String> = HashSet::new();
    let mut year_seen = false;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != names.len() {
            return Err(malformed(
                path,
                line,
                format!("expected {} fields, got {}", names.len(), row.len()),
            ));
        }
        let row_year: i32 = row[1]
            .parse()
            .map_err(|_| malformed(path, line, format!("bad year '{}'", &row[1])))?;
        if row_year != year {
            continue;
        }
        year_seen = true;
        let code = row[0].to_string();
        if !known.contains(code.as_str()) {
            continue;
        }
        if !seen.insert(code.clone()) {
            return Err(malformed(path, line, format!("duplicate row for '{code}'")));
        }
        rows.push(code);
        for (c, name) in attr_names.iter().enumerate() {
            let field = &row[c + 2];
            if field.is_empty() {
                cells[c].push(None);
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| malformed(path, line, format!("bad value '{field}' in '{name}'")))?;
            if !v.is_finite() {
                return Err(malformed(
                    path,
                    line,
                    format!("non-finite value in '{name}'"),
                ));
            }
            if categorical.contains(name) && v.fract() != 0.0 {
                return Err(malformed(
                    path,
                    line,
                    format!("categorical '{name}' must be a whole-number level, got {v}"),
                ));
            }
            cells[c].push(Some(v));
        }
    }
    if !year_seen {
        return Err(Error::YearNotPresent(year));
    }

    let columns = attr_names
        .iter()
        .zip(cells)
        .map(|(name, values)| AttributeColumn {
            name: name.clone(),
            kind: if categorical.contains(name) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numeric
            },
            values,
        })
        .collect();
    Ok(AttributeTable::new(rows, columns))
}

/// Descriptive statistics of the network's edge weights; a sort-based median.
pub fn describe_flows(net: &TradeNetwork) -> FlowSummary {
    let mut w: Vec<f64> = net.edges().iter().map(|e| e.weight).collect();
    let count = w.len();
    if count == 0 {
        return FlowSummary {
            count: 0,
            mean: None,
            median: None,
            sd: None,
            min: None,
            max: None,
        };
    }
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = w.iter().sum::<f64>() / count as f64;
    let median = if count % 2 == 1 {
        w[count / 2]
    } else {
        (w[count / 2 - 1] + w[count / 2]) / 2.0
    };
    FlowSummary {
        count,
        mean: Some(mean),
        median: Some(median),
        sd: sample_sd(&w),
        min: Some(w[0]),
        max: Some(w[count - 1]),
    }
}

/// Result of the missingness rule: surviving table plus dropped column names.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessOutcome {
    pub table: AttributeTable,
    pub dropped_columns: Vec<String>,
}

/// Drop every column whose missing fraction is `>= max_missing_frac`.
///
/// The boundary is exclusive for retention: a column missing exactly the
/// threshold fraction is dropped (the rule keeps columns with *less* missing
/// data than the cutoff).
pub fn apply_missingness_rule(
    table: &AttributeTable,
    max_missing_frac: f64,
) -> Result<MissingnessOutcome> {
    if !(0.0..=1.0).contains(&max_missing_frac) {
        return Err(Error::InvalidArgument(format!(
            "missingness threshold must be in [0, 1], got {max_missing_frac}"
        )));
    }
    let mut kept = Vec::new();
    let mut dropped_columns = Vec::new();
    for c in &table.columns {
        if c.missing_fraction() >= max_missing_frac {
            dropped_columns.push(c.name.clone());
        } else {
            kept.push(c.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::AllColumnsDropped);
    }
    Ok(MissingnessOutcome {
        table: AttributeTable::new(table.rows.clone(), kept),
        dropped_columns,
    })
}

#[cfg(test)]
pub(crate) fn table_from_cells(
    rows: &[&str],
    columns: &[(&str, ColumnKind, Vec<Option<f64>>)],
) -> AttributeTable {
    AttributeTable::new(
        rows.iter().map(|s| s.to_string()).collect(),
        columns
            .iter()
            .map(|(name, kind, values)| AttributeColumn {
                name: name.to_string(),
                kind: *kind,
                values: values.clone(),
            })
            .collect(),
    )
}
