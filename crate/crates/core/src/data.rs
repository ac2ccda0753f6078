//! The regression input and its CSV representation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Predictor matrix (rows are samples) and response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Option<Vec<String>>,
}

impl DataSet {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(invalid(format!(
                "predictor matrix has {} rows but the response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(invalid("a data set needs at least one row and one predictor"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("data contain non-finite values"));
        }
        Ok(Self { x, y, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(invalid(format!(
                "{} column names for {} predictors",
                names.len(),
                self.p()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn column_means(&self) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.x.column_iter().map(|c| c.mean()))
    }

    /// Rows selected by index, repeats allowed (bootstrap resamples).
    pub fn select_rows(&self, rows: &[usize]) -> DataSet {
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        DataSet {
            x,
            y,
            names: self.names.clone(),
        }
    }

    /// Returns a copy with the predictors replaced by `x * q`.
    pub fn map_predictors(&self, q: &DMatrix<f64>) -> Result<DataSet> {
        if q.nrows() != self.p() {
            return Err(invalid("transform has the wrong number of rows"));
        }
        DataSet::new(&self.x * q, self.y.clone())
    }

    fn column_names(&self) -> Vec<String> {
        match &self.names {
            Some(n) => n.clone(),
            None => (1..=self.p()).map(|j| format!("x{j}")).collect(),
        }
    }

    /// Writes predictors followed by the response column named `response`.
    pub fn write_csv<W: Write>(&self, out: W, response: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = self.column_names();
        header.push(response.to_string());
        wtr.write_record(&header).map_err(csv_io)?;
        for i in 0..self.n() {
            let row = self
                .x
                .row(i)
                .iter()
                .chain(std::iter::once(&self.y[i]))
                .map(|v| format_float(*v))
                .collect::<Vec<_>>();
            wtr.write_record(&row).map_err(csv_io)?;
        }
        wtr.flush().map_err(|e| Error::Io {
            path: "<csv>".into(),
            source: e,
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, response: &str) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.write_csv(file, response).map_err(|e| relabel(e, path))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn csv_io(e: csv::Error) -> Error {
    Error::Format {
        path: "<csv>".into(),
        message: e.to_string(),
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { message, .. } => Error::Format {
            path: path.display().to_string(),
            message,
        },
        Error::Parse {
            row,
            column,
            message,
            ..
        } => Error::Parse {
            path: path.display().to_string(),
            row,
            column,
            message,
        },
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    }
}

/// Loads a numeric CSV with a header row. `response_column` becomes the
/// response; the remaining columns become predictors in header order.
pub fn load_csv(path: impl AsRef<Path>, response_column: &str) -> Result<DataSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_csv(file, response_column).map_err(|e| relabel(e, path))
}

/// Row numbers in parse errors are 1-based data rows (the header is row 0).
pub fn read_csv<R: Read>(input: R, response_column: &str) -> Result<DataSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_io)?
        .iter()
        .map(str::to_string)
        .collect();
    let response_idx = header
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| Error::Format {
            path: "<csv>".into(),
            message: format!(
                "response column `{response_column}` not found in header {header:?}"
            ),
        })?;
    if header.len() < 2 {
        return Err(Error::Format {
            path: "<csv>".into(),
            message: "need at least one predictor column besides the response".into(),
        });
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse {
            path: "<csv>".into(),
            row,
            column: "-".into(),
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: "<csv>".into(),
                row,
                column: "-".into(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v = parse_cell(cell).map_err(|message| Error::Parse {
                path: "<csv>".into(),
                row,
                column: header[j].clone(),
                message,
            })?;
            if j == response_idx {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::Format {
            path: "<csv>".into(),
            message: "no data rows".into(),
        });
    }
    let p = header.len() - 1;
    let x = DMatrix::from_row_slice(ys.len(), p, &xs);
    let names = header
        .into_iter()
        .enumerate()
        .filter(|(j, _)| *j != response_idx)
        .map(|(_, h)| h)
        .collect();
    DataSet::new(x, DVector::from_vec(ys))?.with_names(names)
}

fn parse_cell(cell: &str) -> std::result::Result<f64, String> {
    if cell.is_empty() {
        return Err("empty cell".into());
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| format!("`{cell}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{cell}` is not finite"));
    }
    Ok(v)
}
