//! Tabular ingestion: delimited files, rating mappings, standardization and
//! stratified train/test splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, shuffle};

/// Header plus string cells, exactly as read from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateHeader(name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != column_names.len() {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    found: row.len(),
                    expected: column_names.len(),
                });
            }
        }
        Ok(Self { column_names, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Reads a delimited UTF-8 file with one header row.
pub fn load_table(path: impl AsRef<Path>, delimiter: char) -> Result<RawTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_table(&bytes, delimiter)
}

pub fn parse_table(bytes: &[u8], delimiter: char) -> Result<RawTable> {
    if !delimiter.is_ascii() {
        return Err(Error::InvalidArgument(format!(
            "delimiter {delimiter:?} must be a single ASCII character"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(Error::MissingHeader),
    };
    let column_names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    RawTable::new(column_names, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingScheme {
    /// One category per rating notch, 1..=21.
    Detailed,
    /// Ten broad grades, 1..=10.
    Coarse,
}

impl FromStr for MappingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "detailed" => Ok(MappingScheme::Detailed),
            "coarse" => Ok(MappingScheme::Coarse),
            other => Err(Error::InvalidArgument(format!(
                "unknown mapping scheme {other:?} (expected detailed or coarse)"
            ))),
        }
    }
}

impl fmt::Display for MappingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingScheme::Detailed => f.write_str("detailed"),
            MappingScheme::Coarse => f.write_str("coarse"),
        }
    }
}

const DETAILED_TABLE: [(&str, u32); 21] = [
    ("AAA", 1),
    ("AA+", 2),
    ("AA", 3),
    ("AA-", 4),
    ("A+", 5),
    ("A", 6),
    ("A-", 7),
    ("BBB+", 8),
    ("BBB", 9),
    ("BBB-", 10),
    ("BB+", 11),
    ("BB-", 12),
    ("B+", 13),
    ("B", 14),
    ("B-", 15),
    ("CCC+", 16),
    ("CCC", 17),
    ("CCC-", 18),
    ("CC", 19),
    ("C", 20),
    ("RD", 21),
];

const COARSE_TABLE: [(&str, u32); 24] = [
    ("AAA", 1),
    ("AA+", 2),
    ("AA", 2),
    ("AA-", 2),
    ("A+", 3),
    ("A", 3),
    ("A-", 3),
    ("BBB+", 4),
    ("BBB", 4),
    ("BBB-", 4),
    ("BB+", 5),
    ("BB", 5),
    ("BB-", 5),
    ("B+", 6),
    ("B", 6),
    ("B-", 6),
    ("CCC+", 7),
    ("CCC", 7),
    ("CCC-", 7),
    ("CC", 8),
    ("C", 9),
    ("RD", 10),
    ("SD", 10),
    ("D", 10),
];

/// Rating-string to category lookup for one of the built-in schemes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMapping {
    scheme: MappingScheme,
    table: Vec<(&'static str, u32)>,
}

impl RatingMapping {
    pub fn new(scheme: MappingScheme) -> Self {
        let table = match scheme {
            MappingScheme::Detailed => DETAILED_TABLE.to_vec(),
            MappingScheme::Coarse => COARSE_TABLE.to_vec(),
        };
        Self { scheme, table }
    }

    pub fn scheme(&self) -> MappingScheme {
        self.scheme
    }

    /// `(rating, category)` pairs in table order.
    pub fn entries(&self) -> &[(&'static str, u32)] {
        &self.table
    }

    /// Looks up a rating after trimming surrounding whitespace. Matching is
    /// case-sensitive.
    pub fn map(&self, rating: &str) -> Result<u32> {
        let key = rating.trim();
        self.table
            .iter()
            .find(|(s, _)| *s == key)
            .map(|&(_, c)| c)
            .ok_or_else(|| Error::UnmappedRating(rating.to_string()))
    }

    /// Number of distinct categories (21 or 10).
    pub fn category_count(&self) -> u32 {
        self.table.iter().map(|&(_, c)| c).max().unwrap_or(0)
    }

    /// First listed rating string for a category.
    pub fn label_for(&self, category: u32) -> Option<&'static str> {
        self.table
            .iter()
            .find(|&&(_, c)| c == category)
            .map(|&(s, _)| s)
    }
}

pub fn map_rating(rating: &str, mapping: &RatingMapping) -> Result<u32> {
    mapping.map(rating)
}

/// Numeric feature matrix with its integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    /// `n_samples x n_features`.
    pub x: Array2<f64>,
    pub y: Vec<u32>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, x: Array2<f64>, y: Vec<u32>) -> Result<Self> {
        if x.ncols() != feature_names.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            feature_names,
            x,
            y,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Sorted distinct class labels.
    pub fn classes(&self) -> Vec<u32> {
        let mut c = self.y.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            x: self.x.select(Axis(1), cols),
            y: self.y.clone(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    DropRow,
    Fail,
}

impl FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "drop_row" | "droprow" | "drop" => Ok(MissingPolicy::DropRow),
            "fail" => Ok(MissingPolicy::Fail),
            other => Err(Error::InvalidArgument(format!(
                "unknown missing policy {other:?}"
            ))),
        }
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Converts a raw table into a numeric dataset. Every column except the
/// target must be numeric; a blank or unparseable cell (including a blank
/// target) triggers `missing_policy`. A non-blank target that is not in the
/// mapping is always an error.
pub fn build_dataset(
    table: &RawTable,
    target_column: &str,
    mapping: &RatingMapping,
    missing_policy: MissingPolicy,
) -> Result<Dataset> {
    let target = table
        .column_index(target_column)
        .ok_or_else(|| Error::MissingTarget(target_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..table.column_names.len())
        .filter(|&c| c != target)
        .collect();
    let feature_names: Vec<String> = feature_cols
        .iter()
        .map(|&c| table.column_names[c].clone())
        .collect();

    let mut values = Vec::with_capacity(table.rows.len() * feature_cols.len());
    let mut y = Vec::with_capacity(table.rows.len());
    'rows: for (r, row) in table.rows.iter().enumerate() {
        let rating = row[target].trim();
        if rating.is_empty() {
            match missing_policy {
                MissingPolicy::DropRow => continue,
                MissingPolicy::Fail => {
                    return Err(Error::Parse {
                        row: r + 1,
                        column: target_column.to_string(),
                        value: row[target].clone(),
                    })
                }
            }
        }
        let category = mapping.map(rating)?;
        let start = values.len();
        for &c in &feature_cols {
            match parse_cell(&row[c]) {
                Some(v) => values.push(v),
                None => match missing_policy {
                    MissingPolicy::DropRow => {
                        values.truncate(start);
                        continue 'rows;
                    }
                    MissingPolicy::Fail => {
                        return Err(Error::Parse {
                            row: r + 1,
                            column: table.column_names[c].clone(),
                            value: row[c].clone(),
                        })
                    }
                },
            }
        }
        y.push(category);
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x = Array2::from_shape_vec((y.len(), feature_cols.len()), values)
        .map_err(|e| Error::Invariant(e.to_string()))?;
    Dataset::new(feature_names, x, y)
}

/// Per-feature parameters applied by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationEntry {
    pub feature: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Standardization {
    pub entries: Vec<StandardizationEntry>,
}

impl Standardization {
    pub fn dropped(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.dropped)
            .map(|e| e.feature.as_str())
    }

    pub fn retained(&self) -> impl Iterator<Item = &StandardizationEntry> {
        self.entries.iter().filter(|e| !e.dropped)
    }
}

fn is_zero_variance(std: f64, mean: f64) -> bool {
    std <= 1e-12 * (1.0 + mean.abs())
}

/// Centers each column and scales it to unit population standard deviation.
/// Constant columns are dropped and recorded with `dropped: true`.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, Standardization)> {
    let n = dataset.n_samples() as f64;
    let mut entries = Vec::with_capacity(dataset.n_features());
    let mut kept = Vec::new();
    for (j, col) in dataset.x.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let dropped = is_zero_variance(std, mean);
        if dropped {
            warn!(
                "dropping zero-variance feature {:?}",
                dataset.feature_names[j]
            );
        } else {
            kept.push(j);
        }
        entries.push(StandardizationEntry {
            feature: dataset.feature_names[j].clone(),
            mean,
            std,
            dropped,
        });
    }
    if kept.is_empty() {
        return Err(Error::DegenerateData(
            "every feature column has zero variance".into(),
        ));
    }
    let mut out = dataset.select_columns(&kept);
    for (mut col, &j) in out.x.axis_iter_mut(Axis(1)).zip(&kept) {
        let e = &entries[j];
        col.mapv_inplace(|v| (v - e.mean) / e.std);
    }
    Ok((out, Standardization { entries }))
}

/// Inverse of [`standardize`] for the retained columns.
pub fn destandardize(dataset: &Dataset, params: &Standardization) -> Result<Dataset> {
    let retained: Vec<&StandardizationEntry> = params.retained().collect();
    if retained.len() != dataset.n_features() {
        return Err(Error::FeatureMismatch {
            expected: retained.len(),
            found: dataset.n_features(),
        });
    }
    let mut out = dataset.clone();
    for (mut col, e) in out.x.axis_iter_mut(Axis(1)).zip(retained) {
        col.mapv_inplace(|v| v * e.std + e.mean);
    }
    Ok(out)
}

/// Stratified split of row indices into `(train, test)`, each sorted.
///
/// The total test size is `round(n * test_fraction)`, apportioned across
/// classes by largest remainder (ties to the smaller class label) and then
/// clamped so every class keeps at least one row on each side.
pub fn split_indices(y: &[u32], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    for (&class, rows) in &by_class {
        if rows.len() < 2 {
            return Err(Error::Stratification {
                class,
                count: rows.len(),
            });
        }
    }

    let total_test = (y.len() as f64 * test_fraction).round() as usize;
    let quotas: Vec<f64> = by_class
        .values()
        .map(|rows| rows.len() as f64 * test_fraction)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(total_test.saturating_sub(assigned)) {
        counts[c] += 1;
    }

    let mut train = Vec::with_capacity(y.len());
    let mut test = Vec::with_capacity(total_test);
    for ((&class, rows), &count) in by_class.iter().zip(&counts) {
        let count = count.clamp(1, rows.len() - 1);
        let mut shuffled = rows.clone();
        let mut rng = rng_from_seed(derive_seed(seed, &[u64::from(class)]));
        shuffle(&mut shuffled, &mut rng);
        test.extend_from_slice(&shuffled[..count]);
        train.extend_from_slice(&shuffled[count..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(&dataset.y, test_fraction, seed)?;
    Ok((dataset.select_rows(&train), dataset.select_rows(&test)))
}
