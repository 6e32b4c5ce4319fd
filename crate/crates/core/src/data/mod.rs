//! Labelled tables, CSV ingestion and synthetic scenario generators.

mod grid;
mod synth;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

pub use grid::{percentile, score_map_grid, Bounds, ScoreMap};
pub use synth::{
    adjust_contamination, gen_blobs, gen_blobs_with_anomalies, gen_ring, gen_scaling_suite, BlobKind,
    RingParams, ScalingSuite, DEFAULT_SCALING_DIMS, DEFAULT_SCALING_SIZES, TWO_BLOB_OFFSET,
};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// `N x D` feature table with optional 0/1 anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Matrix,
    labels: Option<Vec<u8>>,
    feature_names: Option<Vec<String>>,
    source: String,
}

impl DataMatrix {
    pub fn new(values: Matrix, labels: Option<Vec<u8>>, source: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != values.rows() {
                return Err(Error::shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    values.rows()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::input("labels must be 0 or 1"));
            }
        }
        Ok(Self {
            values,
            labels,
            feature_names: None,
            source: source.into(),
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.values.cols() {
            return Err(Error::shape("feature name count differs from column count"));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn set_source(&mut self, source: impl Into<String>) {
        self.source = source.into();
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }

    /// Labels, or an error naming what needed them.
    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::input(format!("dataset `{}` has no labels", self.source)))
    }

    /// Rows whose label is 0.
    pub fn normals(&self) -> Result<Matrix> {
        let labels = self.require_labels()?;
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        Ok(self.values.select_rows(&idx))
    }
}

/// What to do with empty, `NaN` or infinite cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Replace with the mean of the column's finite values.
    MeanImpute,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: Option<String>,
    pub delimiter: u8,
    pub missing: MissingPolicy,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: None,
            delimiter: b',',
            missing: MissingPolicy::Reject,
        }
    }
}

/// Reads a CSV file with a header row. Lines starting with `#` are skipped.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<DataMatrix> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut data = parse_csv(&text, opts)?;
    data.source = path.display().to_string();
    Ok(data)
}

pub fn parse_csv(text: &str, opts: &CsvOptions) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(0, "<header>", e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(0, "<header>", "missing header row"));
    }
    let label_idx = match &opts.label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_err(0, name, "label column not found in header"))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != label_idx).collect();

    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut missing: Vec<(usize, usize)> = Vec::new();
    let mut n_rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| parse_err(row, "<record>", e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                "<record>",
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (k, &j) in feature_cols.iter().enumerate() {
            let cell = &record[j];
            let parsed = if cell.is_empty() { Some(f64::NAN) } else { cell.parse::<f64>().ok() };
            let v = parsed.ok_or_else(|| parse_err(row, &header[j], format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                if opts.missing == MissingPolicy::Reject {
                    return Err(parse_err(row, &header[j], format!("missing or non-finite value `{cell}`")));
                }
                missing.push((n_rows, k));
            }
            values.push(v);
        }
        if let Some(li) = label_idx {
            let cell = &record[li];
            let label = match cell.parse::<f64>() {
                Ok(0.0) => 0,
                Ok(1.0) => 1,
                _ => return Err(parse_err(row, &header[li], format!("label `{cell}` is not 0 or 1"))),
            };
            labels.push(label);
        }
        n_rows += 1;
    }
    let width = feature_cols.len();
    if !missing.is_empty() {
        for j in 0..width {
            let finite: Vec<f64> = (0..n_rows).map(|i| values[i * width + j]).filter(|v| v.is_finite()).collect();
            if finite.is_empty() && missing.iter().any(|&(_, k)| k == j) {
                return Err(parse_err(0, &header[feature_cols[j]], "column has no finite values to impute from"));
            }
            let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
            for &(i, k) in missing.iter().filter(|&&(_, k)| k == j) {
                values[i * width + k] = mean;
            }
        }
    }
    let names = feature_cols.iter().map(|&j| header[j].clone()).collect();
    DataMatrix::new(
        Matrix::new(n_rows, width, values)?,
        label_idx.map(|_| labels),
        "<csv>",
    )?
    .with_feature_names(names)
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_owned(),
        message: message.into(),
    }
}

/// Writes features (and a trailing `label` column when labelled) with a header row.
/// Values are written in shortest round-trip form.
pub fn write_csv<W: Write>(data: &DataMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let mut header: Vec<String> = match data.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..data.n_cols()).map(|j| format!("x{j}")).collect(),
    };
    if data.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for (i, row) in data.values.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = &data.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(data: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data, File::create(path)?)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labelled_file() {
        let text = "a,b,label\n1,2,0\n3,4,1\n5.5,-6,0\n";
        let opts = CsvOptions {
            label_column: Some("label".into()),
            ..Default::default()
        };
        let d = parse_csv(text, &opts).unwrap();
        assert_eq!(d.values().shape(), (3, 2));
        assert_eq!(d.labels().unwrap(), &[0, 1, 0]);
        assert_eq!(d.values().row(2), &[5.5, -6.0]);
        assert_eq!(d.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn nan_cell_names_coordinates() {
        let err = parse_csv("a,b\n1,2\n3,NaN\n", &CsvOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mean_impute() {
        let opts = CsvOptions {
            missing: MissingPolicy::MeanImpute,
            ..Default::default()
        };
        let d = parse_csv("a,b\n1,2\n3,\n5,NaN\n", &opts).unwrap();
        assert_eq!(d.values().column(1), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn bad_inputs() {
        let opts = CsvOptions::default();
        assert!(matches!(parse_csv("a,b\n1,2\n3\n", &opts), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(parse_csv("a,b\n1,x\n", &opts), Err(Error::Parse { row: 1, .. })));
        let with_label = CsvOptions {
            label_column: Some("y".into()),
            ..Default::default()
        };
        assert!(matches!(parse_csv("a,b\n1,2\n", &with_label), Err(Error::Parse { row: 0, .. })));
        let bad_label = CsvOptions {
            label_column: Some("b".into()),
            ..Default::default()
        };
        assert!(parse_csv("a,b\n1,2\n", &bad_label).is_err());
    }

    #[test]
    fn semicolon_delimiter_and_comments() {
        let opts = CsvOptions {
            delimiter: b';',
            ..Default::default()
        };
        let d = parse_csv("# generated\na;b\n1;2\n", &opts).unwrap();
        assert_eq!(d.values().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn round_trip() {
        let values = Matrix::from_rows(&[[0.1, -2.5e-9], [1e300, 3.0]]).unwrap();
        let d = DataMatrix::new(values, Some(vec![0, 1]), "t").unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let opts = CsvOptions {
            label_column: Some("label".into()),
            ..Default::default()
        };
        let back = parse_csv(std::str::from_utf8(&buf).unwrap(), &opts).unwrap();
        assert_eq!(back.values(), d.values());
        assert_eq!(back.labels(), d.labels());
    }
}
