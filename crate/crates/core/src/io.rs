//! Dataset files and atomic output writes.
//!
//! CSV: header row required. Columns named `x` or `x<n>` are input
//! coordinates, every other column is a label vector (one per class).
//! JSON: `{"points": [...], "labels": [...]}` where points are numbers or
//! arrays and labels are numbers or one array per point.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kernels::{validate_points, Dataset};

/// Shared inputs with one or more label vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints {
    pub points: Vec<Vec<f64>>,
    pub label_names: Vec<String>,
    /// One vector per label column, each of length `points.len()`.
    pub label_sets: Vec<Vec<f64>>,
}

impl LabeledPoints {
    pub fn new(
        points: Vec<Vec<f64>>,
        label_names: Vec<String>,
        label_sets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_points(&points)?;
        if label_sets.is_empty() {
            return Err(Error::InvalidInput("no label column".into()));
        }
        for set in &label_sets {
            if set.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: points.len(),
                    got: set.len(),
                });
            }
        }
        Ok(LabeledPoints {
            points,
            label_names,
            label_sets,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.label_sets.len()
    }

    /// The dataset of the first label column.
    pub fn primary(&self) -> Result<Dataset> {
        Dataset::new(self.points.clone(), self.label_sets[0].clone())
    }
}

impl From<&Dataset> for LabeledPoints {
    fn from(d: &Dataset) -> Self {
        LabeledPoints {
            points: d.points().to_vec(),
            label_names: vec!["y".into()],
            label_sets: vec![d.labels().to_vec()],
        }
    }
}

fn is_input_column(name: &str) -> bool {
    let name = name.trim();
    name == "x"
        || (name.starts_with('x')
            && name[1..].chars().all(|c| c.is_ascii_digit())
            && name.len() > 1)
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("row {row}, column {col}: {e}")))
}

/// Parses dataset CSV text.
pub fn parse_csv(text: &str) -> Result<LabeledPoints> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let input_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| is_input_column(&headers[i]))
        .collect();
    let label_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| !is_input_column(&headers[i]))
        .collect();
    if input_cols.is_empty() || label_cols.is_empty() {
        return Err(Error::Parse(format!(
            "header {headers:?} needs an `x` column and at least one label column"
        )));
    }
    let mut points = Vec::new();
    let mut label_sets = vec![Vec::new(); label_cols.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| parse_f64(record.get(i).unwrap_or(""), row + 1, &headers[i]);
        points.push(
            input_cols
                .iter()
                .map(|&i| field(i))
                .collect::<Result<Vec<_>>>()?,
        );
        for (set, &i) in label_sets.iter_mut().zip(&label_cols) {
            set.push(field(i)?);
        }
    }
    if points.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let names = label_cols.iter().map(|&i| headers[i].clone()).collect();
    LabeledPoints::new(points, names, label_sets)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelsRepr {
    Single(Vec<f64>),
    Multi(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
struct JsonDataset {
    points: Vec<PointRepr>,
    labels: LabelsRepr,
}

/// Parses dataset JSON text.
pub fn parse_json(text: &str) -> Result<LabeledPoints> {
    let raw: JsonDataset = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let points: Vec<Vec<f64>> = raw
        .points
        .into_iter()
        .map(|p| match p {
            PointRepr::Scalar(x) => vec![x],
            PointRepr::Vector(v) => v,
        })
        .collect();
    let (names, sets) = match raw.labels {
        LabelsRepr::Single(y) => (vec!["y".to_string()], vec![y]),
        LabelsRepr::Multi(rows) => {
            let q = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != q) {
                return Err(Error::Parse("label rows differ in length".into()));
            }
            let sets: Vec<Vec<f64>> = (0..q)
                .map(|c| rows.iter().map(|r| r[c]).collect())
                .collect();
            ((1..=q).map(|c| format!("y{c}")).collect(), sets)
        }
    };
    LabeledPoints::new(points, names, sets)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_csv(path: &Path) -> Result<LabeledPoints> {
    parse_csv(&read_to_string(path)?)
}

pub fn load_json(path: &Path) -> Result<LabeledPoints> {
    parse_json(&read_to_string(path)?)
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, "not a file path"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
