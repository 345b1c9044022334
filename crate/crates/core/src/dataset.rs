//! Columnar dataset: ingestion, type inference, row masks, summaries and
//! categorical encoding.
//!
//! Every column stores its cells as `Option<f64>`; `None` is the missing
//! marker. Categorical cells hold the index of their level in the column's
//! sorted level list.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Cell strings treated as missing in addition to the empty string.
pub const MISSING_MARKERS: &[&str] = &["", "NA"];

/// Default histogram bin count for continuous columns.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnType {
    Binary,
    Continuous,
    Categorical { levels: Vec<String> },
}

impl ColumnType {
    pub fn name(&self) -> &'static str {
        match self {
            ColumnType::Binary => "binary",
            ColumnType::Continuous => "continuous",
            ColumnType::Categorical { .. } => "categorical",
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, ColumnType::Categorical { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub ctype: ColumnType,
    pub values: Vec<Option<f64>>,
}

impl Column {
    /// Builds a column from raw cell strings, inferring its type.
    pub fn from_raw(name: impl Into<String>, cells: &[&str]) -> Result<Column> {
        let name = name.into();
        let ctype = infer_column_type(cells).map_err(|_| Error::AllMissing(name.clone()))?;
        let values = match &ctype {
            ColumnType::Categorical { levels } => cells
                .iter()
                .map(|c| {
                    let c = c.trim();
                    if is_missing(c) {
                        None
                    } else {
                        levels
                            .binary_search_by(|l| l.as_str().cmp(c))
                            .ok()
                            .map(|i| i as f64)
                    }
                })
                .collect(),
            _ => cells.iter().map(|c| parse_number(c.trim())).collect(),
        };
        Ok(Column {
            name,
            ctype,
            values,
        })
    }

    /// Numeric column from already-parsed values; binary when every value is 0 or 1.
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Column {
        let binary = values.iter().flatten().all(|&v| v == 0.0 || v == 1.0)
            && values.iter().any(Option::is_some);
        Column {
            name: name.into(),
            ctype: if binary {
                ColumnType::Binary
            } else {
                ColumnType::Continuous
            },
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.ctype == ColumnType::Binary
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.ctype {
            ColumnType::Categorical { levels } => Some(levels),
            _ => None,
        }
    }

    pub fn get(&self, row: usize) -> Option<f64> {
        self.values[row]
    }

    /// Display form of a cell, mapping categorical codes back to labels.
    pub fn display_cell(&self, row: usize) -> Option<String> {
        let v = self.values[row]?;
        Some(match &self.ctype {
            ColumnType::Categorical { levels } => levels[v as usize].clone(),
            _ => format_number(v),
        })
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell)
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Formats a number the way labels and split rules print it.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Infers the type of a column from its raw cells.
pub fn infer_column_type(cells: &[&str]) -> Result<ColumnType> {
    let present: Vec<&str> = cells
        .iter()
        .map(|c| c.trim())
        .filter(|c| !is_missing(c))
        .collect();
    if present.is_empty() {
        return Err(Error::AllMissing(String::new()));
    }
    let parsed: Option<Vec<f64>> = present.iter().map(|c| parse_number(c)).collect();
    match parsed {
        Some(nums) if nums.iter().all(|&v| v == 0.0 || v == 1.0) => Ok(ColumnType::Binary),
        Some(_) => Ok(ColumnType::Continuous),
        None => {
            let levels: BTreeSet<&str> = present.into_iter().collect();
            Ok(ColumnType::Categorical {
                levels: levels.into_iter().map(str::to_string).collect(),
            })
        }
    }
}

/// Splits a categorical column into J-1 indicator columns named `col=level`.
///
/// The lexicographically first level is the reference and gets no column.
/// Missing cells stay missing in every indicator.
pub fn encode_categorical(col: &Column) -> Result<Vec<Column>> {
    let levels = match &col.ctype {
        ColumnType::Categorical { levels } => levels,
        _ => {
            return Err(Error::Config(format!(
                "column `{}` is not categorical",
                col.name
            )))
        }
    };
    if levels.len() < 2 {
        return Err(Error::DegenerateEncoding(col.name.clone()));
    }
    Ok(levels
        .iter()
        .enumerate()
        .skip(1)
        .map(|(code, level)| Column {
            name: format!("{}={}", col.name, level),
            ctype: ColumnType::Binary,
            values: col
                .values
                .iter()
                .map(|v| v.map(|c| if c as usize == code { 1.0 } else { 0.0 }))
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            has_header: true,
        }
    }
}

/// Immutable columnar table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
    id: String,
}

impl Dataset {
    /// Assembles a dataset from columns, checking names and lengths.
    pub fn new(id: impl Into<String>, columns: Vec<Column>) -> Result<Dataset> {
        let n_rows = columns.first().map_or(0, Column::len);
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
            if c.len() != n_rows {
                return Err(Error::Config(format!(
                    "column `{}` has {} rows, expected {}",
                    c.name,
                    c.len(),
                    n_rows
                )));
            }
        }
        if n_rows == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            columns,
            n_rows,
            id: id.into(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Resolves a feature name to numeric columns.
    ///
    /// Numeric columns resolve to themselves, categorical columns to their
    /// indicator block, and `col=level` names to a single indicator.
    pub fn numeric_features(&self, name: &str) -> Result<Vec<Column>> {
        if let Ok(col) = self.column(name) {
            return match col.ctype {
                ColumnType::Categorical { .. } => encode_categorical(col),
                _ => Ok(vec![col.clone()]),
            };
        }
        if let Some((base, level)) = name.split_once('=') {
            if let Ok(col) = self.column(base) {
                if let Some(code) = col.levels().and_then(|l| l.iter().position(|x| x == level)) {
                    return Ok(vec![Column {
                        name: name.to_string(),
                        ctype: ColumnType::Binary,
                        values: col
                            .values
                            .iter()
                            .map(|v| v.map(|c| if c as usize == code { 1.0 } else { 0.0 }))
                            .collect(),
                    }]);
                }
            }
        }
        Err(Error::UnknownColumn(name.to_string()))
    }

    /// Returns a copy with one extra column appended.
    pub fn with_column(&self, col: Column) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        columns.push(col);
        Dataset::new(self.id.clone(), columns)
    }
}

/// Content-derived dataset identifier: identical bytes give identical ids.
pub fn dataset_id_for(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    format!("ds-{}", &hex::encode(digest)[..16])
}

/// Parses delimited text into a dataset.
pub fn load_table(bytes: &[u8], options: LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();

    let header: Vec<String> = if options.has_header {
        match records.next() {
            Some(rec) => rec
                .map_err(|e| Error::Parse {
                    row: 0,
                    message: e.to_string(),
                })?
                .iter()
                .map(|s| s.trim().to_string())
                .collect(),
            None => return Err(Error::EmptyDataset),
        }
    } else {
        Vec::new()
    };

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        rows.push(rec);
    }
    let width = if options.has_header {
        header.len()
    } else {
        rows.first().map_or(0, csv::StringRecord::len)
    };
    let header = if options.has_header {
        header
    } else {
        (1..=width).map(|i| format!("col{i}")).collect()
    };
    for (i, rec) in rows.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
    }
    let mut seen = HashSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let columns = header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let cells: Vec<&str> = rows.iter().map(|r| &r[j]).collect();
            Column::from_raw(name.clone(), &cells)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(dataset_id_for(bytes), columns)
}

/// Analysis frame: cause, outcome, candidate covariates and chosen confounders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalConfig {
    pub cause: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    #[serde(default)]
    pub confounders: Vec<String>,
}

impl CausalConfig {
    /// Config whose covariates are every other column of the dataset.
    pub fn with_all_covariates(ds: &Dataset, cause: &str, outcome: &str) -> CausalConfig {
        CausalConfig {
            cause: cause.to_string(),
            outcome: outcome.to_string(),
            covariates: ds
                .column_names()
                .filter(|n| *n != cause && *n != outcome)
                .map(str::to_string)
                .collect(),
            confounders: Vec::new(),
        }
    }

    /// Checks the config against a dataset's columns.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.cause == self.outcome {
            return Err(Error::Config("cause equals outcome".into()));
        }
        let cause = ds.column(&self.cause)?;
        let outcome = ds.column(&self.outcome)?;
        if !cause.ctype.is_numeric() {
            return Err(Error::Config(format!(
                "cause `{}` must be binary or continuous",
                self.cause
            )));
        }
        if !outcome.ctype.is_numeric() {
            return Err(Error::Config(format!(
                "outcome `{}` must be binary or continuous",
                self.outcome
            )));
        }
        let mut seen = HashSet::new();
        for z in &self.covariates {
            if z == &self.cause || z == &self.outcome {
                return Err(Error::Config(format!(
                    "covariate `{z}` is the cause or outcome"
                )));
            }
            if !seen.insert(z.as_str()) {
                return Err(Error::Config(format!("covariate `{z}` listed twice")));
            }
            ds.column(z)?;
        }
        for c in &self.confounders {
            if !seen.contains(c.as_str()) {
                return Err(Error::Config(format!(
                    "confounder `{c}` is not a covariate"
                )));
            }
        }
        Ok(())
    }

    /// Confounders if any were selected, otherwise all covariates.
    pub fn effective_confounders(&self) -> &[String] {
        if self.confounders.is_empty() {
            &self.covariates
        } else {
            &self.confounders
        }
    }
}

/// Row selection over a dataset.
#[derive(Clone, PartialEq, Eq)]
pub struct RowMask {
    bits: BitVec<u64, Lsb0>,
    count: usize,
}

impl fmt::Debug for RowMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RowMask({}/{})", self.count, self.bits.len())
    }
}

impl RowMask {
    pub fn full(n: usize) -> RowMask {
        RowMask {
            bits: bitvec![u64, Lsb0; 1; n],
            count: n,
        }
    }

    pub fn empty(n: usize) -> RowMask {
        RowMask {
            bits: bitvec![u64, Lsb0; 0; n],
            count: 0,
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> bool) -> RowMask {
        let mut m = RowMask::empty(n);
        for i in 0..n {
            if f(i) {
                m.bits.set(i, true);
                m.count += 1;
            }
        }
        m
    }

    pub fn from_indices(n: usize, rows: impl IntoIterator<Item = usize>) -> RowMask {
        let mut m = RowMask::empty(n);
        for i in rows {
            m.insert(i);
        }
        m
    }

    pub fn insert(&mut self, row: usize) {
        if !self.bits[row] {
            self.bits.set(row, true);
            self.count += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, row: usize) -> bool {
        self.bits[row]
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn and(&self, other: &RowMask) -> RowMask {
        let bits = self.bits.clone() & other.bits.clone();
        let count = bits.count_ones();
        RowMask { bits, count }
    }

    pub fn or(&self, other: &RowMask) -> RowMask {
        let bits = self.bits.clone() | other.bits.clone();
        let count = bits.count_ones();
        RowMask { bits, count }
    }

    pub fn not(&self) -> RowMask {
        let bits = !self.bits.clone();
        let count = bits.count_ones();
        RowMask { bits, count }
    }

    pub fn is_disjoint(&self, other: &RowMask) -> bool {
        self.and(other).is_empty()
    }
}

/// Rows inside `within` with no missing value in any of the listed columns.
pub fn complete_within<S: AsRef<str>>(
    ds: &Dataset,
    cols: &[S],
    within: &RowMask,
) -> Result<RowMask> {
    Ok(listwise_complete(ds, cols)?.and(within))
}

/// Rows with no missing value in any of the listed columns.
pub fn listwise_complete<S: AsRef<str>>(ds: &Dataset, cols: &[S]) -> Result<RowMask> {
    let columns = cols
        .iter()
        .map(|c| ds.column(c.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RowMask::from_fn(ds.n_rows(), |i| {
        columns.iter().all(|c| c.values[i].is_some())
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Histogram {
    /// Equal-width bins; `edges` has one more entry than `counts`.
    Bins { edges: Vec<f64>, counts: Vec<usize> },
    Levels {
        levels: Vec<String>,
        counts: Vec<usize>,
    },
}

impl Histogram {
    pub fn counts(&self) -> &[usize] {
        match self {
            Histogram::Bins { counts, .. } | Histogram::Levels { counts, .. } => counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }
}

/// Bin layout shared by histograms that must be drawn on a common axis.
#[derive(Debug, Clone, PartialEq)]
pub enum HistogramGrid {
    Bins(Vec<f64>),
    Levels(Vec<String>),
}

impl HistogramGrid {
    /// Grid for `col` covering the values selected by `mask`.
    pub fn for_column(col: &Column, mask: &RowMask, bins: usize) -> Result<HistogramGrid> {
        match &col.ctype {
            ColumnType::Binary => Ok(HistogramGrid::Levels(vec!["0".into(), "1".into()])),
            ColumnType::Categorical { levels } => Ok(HistogramGrid::Levels(levels.clone())),
            ColumnType::Continuous => {
                let bins = bins.max(1);
                let (lo, hi) = mask
                    .iter()
                    .filter_map(|i| col.values[i])
                    .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                        None => Some((v, v)),
                        Some((a, b)) => Some((a.min(v), b.max(v))),
                    })
                    .ok_or(Error::EmptySelection)?;
                let width = (hi - lo) / bins as f64;
                let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
                edges.push(hi);
                Ok(HistogramGrid::Bins(edges))
            }
        }
    }

    /// Counts the non-missing selected values of `col` on this grid.
    ///
    /// Bins are right-open except the last, which is closed.
    pub fn histogram(&self, col: &Column, mask: &RowMask) -> Histogram {
        match self {
            HistogramGrid::Levels(levels) => {
                let mut counts = vec![0; levels.len()];
                for v in mask.iter().filter_map(|i| col.values[i]) {
                    let idx = v as usize;
                    if idx < counts.len() {
                        counts[idx] += 1;
                    }
                }
                Histogram::Levels {
                    levels: levels.clone(),
                    counts,
                }
            }
            HistogramGrid::Bins(edges) => {
                let bins = edges.len() - 1;
                let mut counts = vec![0; bins];
                let interior = &edges[1..bins];
                for v in mask.iter().filter_map(|i| col.values[i]) {
                    // first bin when every edge coincides (constant column)
                    let idx = if edges[0] == edges[bins] {
                        0
                    } else {
                        interior.partition_point(|&e| e <= v)
                    };
                    counts[idx.min(bins - 1)] += 1;
                }
                Histogram::Bins {
                    edges: edges.clone(),
                    counts,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub n: usize,
    pub n_missing: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub histogram: Histogram,
}

/// Mean, sample SD, range and histogram of the selected non-missing cells.
pub fn summarize(col: &Column, mask: &RowMask, bins: usize) -> Result<ColumnSummary> {
    let values: Vec<f64> = mask.iter().filter_map(|i| col.values[i]).collect();
    if values.is_empty() {
        return Err(Error::EmptySelection);
    }
    let grid = HistogramGrid::for_column(col, mask, bins)?;
    let histogram = grid.histogram(col, mask);
    let numeric = col.ctype.is_numeric();
    let (mean, sd) = if numeric {
        (
            Some(crate::stats::mean(&values)),
            crate::stats::sample_sd(&values),
        )
    } else {
        (None, None)
    };
    let (min, max) = if numeric {
        (
            values.iter().copied().reduce(f64::min),
            values.iter().copied().reduce(f64::max),
        )
    } else {
        (None, None)
    };
    Ok(ColumnSummary {
        n: values.len(),
        n_missing: mask.count() - values.len(),
        mean,
        sd,
        min,
        max,
        histogram,
    })
}
