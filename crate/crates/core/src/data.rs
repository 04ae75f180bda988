//! Classification datasets: CSV ingestion, one-hot targets, stratified splits
//! and min-max feature scaling.
//!
//! CSV rows are comma separated, feature columns first and an integer class
//! label (`0..K`) in the last column. There is no header unless
//! [`CsvSchema::has_header`] is set.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Full,
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Full => "full",
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    split: Split,
    input_count: usize,
    class_count: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    one_hot: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(
        name: impl Into<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let input_count = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * input_count);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != input_count {
                return Err(Error::Validation(format!(
                    "row {t} has {} features, expected {input_count}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("row {t} has non-finite feature {v}")));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(name.into(), Split::Full, input_count, class_count, features, labels)
    }

    fn from_flat(
        name: String,
        split: Split,
        input_count: usize,
        class_count: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let one_hot = one_hot(&labels, class_count)?;
        Ok(Self {
            name,
            split,
            input_count,
            class_count,
            features,
            labels,
            one_hot,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.features[t * self.input_count..(t + 1) * self.input_count]
    }

    pub fn label(&self, t: usize) -> usize {
        self.labels[t]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_hot_row(&self, t: usize) -> &[f64] {
        &self.one_hot[t * self.class_count..(t + 1) * self.class_count]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        self.labels.iter().for_each(|&y| counts[y] += 1);
        counts
    }

    fn subset(&self, indices: &[usize], split: Split) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.input_count);
        let mut labels = Vec::with_capacity(indices.len());
        for &t in indices {
            features.extend_from_slice(self.row(t));
            labels.push(self.labels[t]);
        }
        Self::from_flat(
            self.name.clone(),
            split,
            self.input_count,
            self.class_count,
            features,
            labels,
        )
        .expect("labels already validated")
    }

    /// Serializes in the same CSV layout `load_csv` reads (no header).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for t in 0..self.len() {
            for v in self.row(t) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.labels[t]);
        }
        out
    }
}

/// Indicator matrix `z[t][k] = 1` iff `labels[t] == k`, row-major `N x K`.
pub fn one_hot(labels: &[usize], class_count: usize) -> Result<Vec<f64>> {
    let mut z = vec![0.0; labels.len() * class_count];
    for (t, &y) in labels.iter().enumerate() {
        if y >= class_count {
            return Err(Error::Validation(format!(
                "label {y} at row {t} outside 0..{class_count}"
            )));
        }
        z[t * class_count + y] = 1.0;
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvSchema {
    /// Expected feature columns; inferred from the first row when `None`.
    pub feature_count: Option<usize>,
    /// Number of classes; inferred as `max label + 1` when `None`.
    pub class_count: Option<usize>,
    pub has_header: bool,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&text, &name, path, schema)
}

/// Parses CSV text; `origin` is only used in error messages.
pub fn parse_csv(text: &str, name: &str, origin: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = schema.feature_count.map(|n| n + 1);

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if (schema.has_header && i == 0) || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected || expected < 2 {
            return Err(parse_err(
                line_no,
                format!("expected {expected} columns, found {}", cells.len()),
            ));
        }
        let (label_cell, feature_cells) = cells.split_last().expect("at least two columns");
        let row = feature_cells
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad feature value '{c}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = label_cell
            .parse::<usize>()
            .map_err(|_| parse_err(line_no, format!("bad class label '{label_cell}'")))?;
        if let Some(k) = schema.class_count {
            if label >= k {
                return Err(Error::Validation(format!(
                    "{}:{line_no}: label {label} outside 0..{k}",
                    origin.display()
                )));
            }
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    let class_count = schema
        .class_count
        .unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    Dataset::from_rows(name, rows, labels, class_count)
}

/// Per-column min-max scaling fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    min: Vec<f64>,
    range: Vec<f64>,
}

impl Normalizer {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.input_count();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for t in 0..data.len() {
            for (j, &v) in data.row(t).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
        Self { min, range }
    }

    /// Constant columns (zero range) map to 0.
    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        let n = data.input_count();
        for (i, v) in out.features.iter_mut().enumerate() {
            let j = i % n;
            *v = if self.range[j] > 0.0 {
                (*v - self.min[j]) / self.range[j]
            } else {
                0.0
            };
        }
        out
    }
}

/// Stratified shuffle split; each class contributes `round(n_c * train_fraction)`
/// rows to the training side (at least one). Scaling is fitted on the
/// training side and applied to both.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..dataset.class_count() {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&t| dataset.label(t) == class).collect();
        if members.is_empty() {
            return Err(Error::Validation(format!(
                "class {class} of '{}' has no rows, so it cannot appear in the training split",
                dataset.name()
            )));
        }
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * train_fraction).round() as usize).clamp(1, members.len());
        train_idx.extend_from_slice(&members[..take]);
        test_idx.extend_from_slice(&members[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let train = dataset.subset(&train_idx, Split::Train);
    let test = dataset.subset(&test_idx, Split::Test);
    let scaler = Normalizer::fit(&train);
    Ok((scaler.apply(&train), scaler.apply(&test)))
}

/// Applies training-set scaling to a dataset that ships pre-split.
pub fn normalize_pair(train: &Dataset, test: &Dataset) -> (Dataset, Dataset) {
    let scaler = Normalizer::fit(train);
    let mut tr = scaler.apply(train);
    let mut te = scaler.apply(test);
    tr.split = Split::Train;
    te.split = Split::Test;
    (tr, te)
}
