//! Tabular data ingestion, stratified splitting, min-max normalization and the
//! synthetic branching-tree generator.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{RfaeError, Result};
use crate::rng;

/// Selects the label column of a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for LabelColumn {
    /// Numeric strings select by position, anything else by header name.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

/// A raw numeric table with an optional label column, before class encoding.
#[derive(Debug, Clone)]
pub struct Table {
    pub features: Array2<f64>,
    pub labels: Option<Vec<String>>,
    pub feature_names: Vec<String>,
}

/// Feature matrix with contiguous integer labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub feature_names: Option<Vec<String>>,
    /// Original label strings, indexed by class id.
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, validating shape, finiteness and class coverage.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Option<Vec<String>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(RfaeError::RowCountMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some(names) = &feature_names {
            if names.len() != features.ncols() {
                return Err(RfaeError::DimensionMismatch {
                    expected: features.ncols(),
                    found: names.len(),
                });
            }
        }
        check_finite(features.view())?;
        let q = class_names.len();
        if q < 2 {
            return Err(RfaeError::Degenerate(
                "single-class data: at least two classes are required".into(),
            ));
        }
        let mut counts = vec![0usize; q];
        for &y in &labels {
            if y >= q {
                return Err(RfaeError::invalid(format!("label {y} outside 0..{q}")));
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(RfaeError::Degenerate(format!("class {c} has no samples")));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            class_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Class names are kept even if some
    /// class is absent from the subset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

fn check_finite(m: ArrayView2<f64>) -> Result<()> {
    for ((row, column), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(RfaeError::NonFinite { row, column });
        }
    }
    Ok(())
}

/// Reads a CSV with a header row. When `label_column` is given, that column is
/// kept as strings and excluded from the feature matrix. A file with a header
/// but no data rows yields an empty table.
pub fn read_table(path: impl AsRef<Path>, label_column: Option<&LabelColumn>) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| RfaeError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let width = header.len();

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(RfaeError::invalid(format!(
                "label column index {i} out of range for {width} columns"
            )))
        }
        Some(LabelColumn::Name(name)) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| RfaeError::invalid(format!("no column named {name:?}")))?,
        ),
    };
    let feature_cols: Vec<usize> = (0..width).filter(|&c| Some(c) != label_idx).collect();
    let feature_names = feature_cols.iter().map(|&c| header[c].clone()).collect();

    let mut values = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut n_rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(RfaeError::Ragged {
                row,
                found: record.len(),
                expected: width,
            });
        }
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| RfaeError::NonNumeric {
                row,
                column: header[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(RfaeError::NonFinite { row, column: c });
            }
            values.push(v);
        }
        if let (Some(labels), Some(li)) = (labels.as_mut(), label_idx) {
            labels.push(record[li].to_string());
        }
        n_rows += 1;
    }
    let features = Array2::from_shape_vec((n_rows, feature_cols.len()), values)
        .expect("row-major buffer matches shape");
    Ok(Table {
        features,
        labels,
        feature_names,
    })
}

/// Maps label strings to contiguous ids in first-appearance order.
pub fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut names = Vec::new();
    let labels = raw
        .iter()
        .map(|s| {
            *index.entry(s.as_str()).or_insert_with(|| {
                names.push(s.clone());
                names.len() - 1
            })
        })
        .collect();
    (labels, names)
}

/// Maps label strings onto an existing class vocabulary.
pub fn encode_labels_with(raw: &[String], class_names: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    raw.iter()
        .map(|s| {
            index
                .get(s.as_str())
                .copied()
                .ok_or_else(|| RfaeError::invalid(format!("unknown class label {s:?}")))
        })
        .collect()
}

/// Loads a labelled dataset from CSV.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
    let table = read_table(path, Some(label_column))?;
    let raw = table.labels.expect("label column requested");
    let (labels, class_names) = encode_labels(&raw);
    Dataset::new(
        table.features,
        labels,
        Some(table.feature_names),
        class_names,
    )
}

/// Writes features plus a trailing `label` column holding class names.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| RfaeError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let names: Vec<String> = match &data.feature_names {
        Some(n) => n.clone(),
        None => (0..data.n_features()).map(|j| format!("f{j}")).collect(),
    };
    let mut header = names;
    header.push("label".into());
    w.write_record(&header)?;
    for (row, &y) in data.features.outer_iter().zip(&data.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        rec.push(data.class_names[y].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| RfaeError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 0,
            stratified: true,
        }
    }
}

/// Splits row indices into (train, test), both sorted ascending.
///
/// Stratified: class `c` with `n_c` members contributes `round(n_c * f)` test
/// rows, capped at `n_c - 1` so the training side keeps every class.
pub fn stratified_split(data: &Dataset, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let f = spec.test_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(RfaeError::invalid(format!(
            "test fraction must lie in (0, 1), got {f}"
        )));
    }
    let mut rng = rng::stream(spec.seed, "split", 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        for c in 0..data.n_classes() {
            let mut members: Vec<usize> = (0..data.n_samples())
                .filter(|&i| data.labels[i] == c)
                .collect();
            if members.len() < 2 {
                return Err(RfaeError::Degenerate(format!(
                    "class {c} has {} sample(s); stratification needs at least 2",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            let n_test = ((members.len() as f64 * f).round() as usize).min(members.len() - 1);
            test.extend_from_slice(&members[..n_test]);
            train.extend_from_slice(&members[n_test..]);
        }
    } else {
        let mut all: Vec<usize> = (0..data.n_samples()).collect();
        all.shuffle(&mut rng);
        let n_test = (all.len() as f64 * f).round() as usize;
        test.extend_from_slice(&all[..n_test]);
        train.extend_from_slice(&all[n_test..]);
        let mut seen = vec![false; data.n_classes()];
        for &i in &train {
            seen[data.labels[i]] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(RfaeError::Degenerate(format!(
                "unstratified split left class {c} out of the training set"
            )));
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-feature min-max scaler fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Array1<f64>,
    pub max: Array1<f64>,
}

impl Normalizer {
    pub fn fit(features: ArrayView2<f64>, train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(RfaeError::invalid("normalizer needs at least one training row"));
        }
        let d = features.ncols();
        let mut min = Array1::from_elem(d, f64::INFINITY);
        let mut max = Array1::from_elem(d, f64::NEG_INFINITY);
        for &i in train {
            for (j, &v) in features.row(i).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Normalizer { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps each column to `[0, 1]`; constant columns map to 0 and values
    /// outside the fitted range are clamped.
    pub fn apply(&self, m: ArrayView2<f64>) -> Result<Array2<f64>> {
        if m.ncols() != self.dim() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.dim(),
                found: m.ncols(),
            });
        }
        let mut out = m.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let span = hi - lo;
            col.mapv_inplace(|v| {
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            });
        }
        Ok(out)
    }
}

/// Configuration of the synthetic branching tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    /// Points per branch. Branch `b` moves along dims `4b..4b+4`.
    pub branch_lengths: Vec<usize>,
    pub noise_sd: f64,
    /// Extra copies placed at every branch endpoint and branching point.
    pub extra_points: usize,
    pub seed: u64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            branch_lengths: vec![100; 10],
            noise_sd: 7.0,
            extra_points: 40,
            seed: 0,
        }
    }
}

impl TreeSpec {
    pub fn n_branches(&self) -> usize {
        self.branch_lengths.len()
    }

    /// Branch `b > 0` grows from the endpoint of branch `(b - 1) / 2`.
    pub fn parent(b: usize) -> Option<usize> {
        (b > 0).then(|| (b - 1) / 2)
    }

    /// Total row count: all branch points plus the extras at each branch end.
    pub fn n_points(&self) -> usize {
        self.branch_lengths.iter().sum::<usize>() + self.n_branches() * self.extra_points
    }
}

/// Generates the tree without the final min-max normalization.
pub fn generate_artificial_tree_raw(spec: &TreeSpec) -> Result<Dataset> {
    let n_branches = spec.n_branches();
    if n_branches < 2 {
        return Err(RfaeError::invalid("artificial tree needs at least two branches"));
    }
    if !(spec.noise_sd >= 0.0) || !spec.noise_sd.is_finite() {
        return Err(RfaeError::invalid(format!(
            "noise_sd must be a finite non-negative number, got {}",
            spec.noise_sd
        )));
    }
    if spec.branch_lengths.contains(&0) {
        return Err(RfaeError::invalid("branch lengths must be positive"));
    }
    let dim = 4 * n_branches;
    let n = spec.n_points();
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    let mut endpoints = Array2::<f64>::zeros((n_branches, dim));
    let mut row = 0;
    for b in 0..n_branches {
        let start = match TreeSpec::parent(b) {
            Some(p) => endpoints.row(p).to_owned(),
            None => Array1::zeros(dim),
        };
        let len = spec.branch_lengths[b];
        for k in 0..len {
            let mut point = start.clone();
            point.slice_mut(s![4 * b..4 * b + 4]).fill((k + 1) as f64);
            features.row_mut(row).assign(&point);
            labels.push(b);
            row += 1;
        }
        let mut end = start;
        end.slice_mut(s![4 * b..4 * b + 4]).fill(len as f64);
        for _ in 0..spec.extra_points {
            features.row_mut(row).assign(&end);
            labels.push(b);
            row += 1;
        }
        endpoints.row_mut(b).assign(&end);
    }
    debug_assert_eq!(row, n);
    if spec.noise_sd > 0.0 {
        let mut rng = rng::stream(spec.seed, "artificial-tree", 0);
        let normal = Normal::new(0.0, spec.noise_sd).expect("valid sd");
        features.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    let class_names = (0..n_branches).map(|b| b.to_string()).collect();
    let feature_names = (0..dim).map(|j| format!("f{j}")).collect();
    Dataset::new(features, labels, Some(feature_names), class_names)
}

/// Generates the branching tree and min-max normalizes every feature to `[0, 1]`.
pub fn generate_artificial_tree(spec: &TreeSpec) -> Result<Dataset> {
    let mut data = generate_artificial_tree_raw(spec)?;
    let all: Vec<usize> = (0..data.n_samples()).collect();
    let norm = Normalizer::fit(data.features.view(), &all)?;
    data.features = norm.apply(data.features.view())?;
    Ok(data)
}

/// Appends `round(D / snr)` columns of `U(0, 1)` noise, so the ratio of signal
/// to noise dimensions equals `snr`. An infinite `snr` appends nothing.
pub fn augment_with_uniform_noise(data: &Dataset, snr: f64, seed: u64) -> Result<Dataset> {
    if !(snr > 0.0) {
        return Err(RfaeError::invalid(format!("snr must be positive, got {snr}")));
    }
    if snr.is_infinite() {
        return Ok(data.clone());
    }
    let d = data.n_features();
    let extra = (d as f64 / snr).round() as usize;
    let n = data.n_samples();
    let mut rng = rng::stream(seed, "uniform-noise", 0);
    let mut features = Array2::<f64>::zeros((n, d + extra));
    features.slice_mut(s![.., ..d]).assign(&data.features);
    for v in features.slice_mut(s![.., d..]).iter_mut() {
        *v = rng.random::<f64>();
    }
    let mut names = data
        .feature_names
        .clone()
        .unwrap_or_else(|| (0..d).map(|j| format!("f{j}")).collect());
    names.extend((0..extra).map(|j| format!("noise{j}")));
    Dataset::new(features, data.labels.clone(), Some(names), data.class_names.clone())
}

/// Writes an `N x d` matrix as CSV with the given header.
pub fn write_matrix_csv<W: Write>(out: W, header: &[String], m: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in m.outer_iter() {
        w.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    w.flush().map_err(|e| RfaeError::io("<csv writer>", e))?;
    Ok(())
}
