//! CSV helpers shared by the commands.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array2, ArrayView2};
use rfae::dataset::{read_table, LabelColumn};

/// Opens `path` for writing, or standard output when `None`.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn headers(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(r.headers()?.iter().map(str::to_string).collect())
}

/// Numeric feature columns of a CSV. The label column is dropped when
/// present and its values returned; a missing label column is not an error.
pub fn read_features(path: &Path, label: &str) -> Result<(Array2<f64>, Option<Vec<String>>)> {
    let header = headers(path)?;
    let column = match LabelColumn::from(label) {
        LabelColumn::Index(i) if i < header.len() => Some(LabelColumn::Index(i)),
        LabelColumn::Name(n) if header.contains(&n) => Some(LabelColumn::Name(n)),
        _ => None,
    };
    let table = read_table(path, column.as_ref()).with_context(|| format!("reading {}", path.display()))?;
    Ok((table.features, table.labels))
}

/// Reads one named column as strings.
pub fn read_column(path: &Path, name: &str) -> Result<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let Some(c) = header.iter().position(|h| h == name) else {
        bail!("{} has no column named {name:?}", path.display());
    };
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        match rec.get(c) {
            Some(v) => out.push(v.to_string()),
            None => bail!("{}: row {row} has no {name:?} field", path.display()),
        }
    }
    Ok(out)
}

/// Writes `m` with the given header. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_matrix(path: &Path, header: &[String], m: ArrayView2<f64>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    rfae::dataset::write_matrix_csv(BufWriter::new(file), header, m)?;
    Ok(())
}

pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}
