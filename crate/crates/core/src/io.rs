//! CSV ingestion and the canonical CSV emitter, plus the flat `key = value`
//! format used for schemas and configuration files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys are trimmed and lower-cased, values trimmed.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "line {}: expected `key = value`, got `{line}`",
                k + 1
            ))
        })?;
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("line {}: empty key", k + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Maps CSV columns to the response, X and Z. Without a header row, columns
/// are named by their 1-based position (`"1"`, `"2"`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub response: String,
    pub x: Vec<String>,
    pub z: Vec<String>,
    pub delimiter: u8,
    pub has_header: bool,
}

impl CsvSchema {
    pub fn new(response: &str, x: &[&str], z: &[&str]) -> Self {
        CsvSchema {
            response: response.to_string(),
            x: x.iter().map(|s| s.to_string()).collect(),
            z: z.iter().map(|s| s.to_string()).collect(),
            delimiter: b',',
            has_header: true,
        }
    }

    /// Schema matching [`write_csv_dataset`] output for `dataset`.
    pub fn for_dataset(dataset: &Dataset, response: &str) -> Self {
        CsvSchema {
            response: response.to_string(),
            x: dataset.x_names().to_vec(),
            z: dataset.z_names().to_vec(),
            delimiter: b',',
            has_header: true,
        }
    }

    /// Reads `response`, `x`, `z` (comma-separated names), `delimiter`
    /// (a single character or `tab`) and `header` (true/false).
    pub fn parse(text: &str) -> Result<Self> {
        let mut schema = CsvSchema::new("", &[], &[]);
        for (key, value) in parse_key_values(text)? {
            match key.as_str() {
                "response" | "y" => schema.response = value,
                "x" => schema.x = parse_list(&value),
                "z" => schema.z = parse_list(&value),
                "delimiter" => {
                    schema.delimiter = match value.as_str() {
                        "tab" | "\\t" => b'\t',
                        v if v.len() == 1 => v.as_bytes()[0],
                        v => {
                            return Err(Error::InvalidConfig(format!(
                                "delimiter must be one character or `tab`, got `{v}`"
                            )))
                        }
                    }
                }
                "header" => {
                    schema.has_header = value.parse().map_err(|_| {
                        Error::InvalidConfig(format!("header must be true or false, got `{value}`"))
                    })?
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown schema key `{other}`"
                    )))
                }
            }
        }
        schema.check()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Non-empty response, X and Z, pairwise disjoint.
    pub fn check(&self) -> Result<()> {
        if self.response.is_empty() {
            return Err(Error::InvalidConfig(
                "schema names no response column".into(),
            ));
        }
        if self.x.is_empty() || self.z.is_empty() {
            return Err(Error::InvalidConfig(
                "schema needs at least one X and one Z column".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for name in std::iter::once(&self.response)
            .chain(&self.x)
            .chain(&self.z)
        {
            if !seen.insert(name) {
                return Err(Error::InvalidConfig(format!(
                    "column `{name}` is assigned more than once"
                )));
            }
        }
        Ok(())
    }
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<DVector<f64>> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidData(format!("column `{name}` not found")))?;
        Ok(self.data.column(j).into_owned())
    }

    fn columns(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// Dataset with columns mapped per `schema`.
    pub fn to_dataset(&self, schema: &CsvSchema) -> Result<Dataset> {
        schema.check()?;
        Dataset::with_names(
            self.column(&schema.response)?,
            self.columns(&schema.x)?,
            self.columns(&schema.z)?,
            schema.x.clone(),
            schema.z.clone(),
        )
    }
}

/// Reads every column of a numeric CSV. Data rows are numbered from 1 in
/// error messages.
pub fn read_csv_table<R: Read>(reader: R, delimiter: u8, has_header: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut names: Vec<String> = if has_header {
        rdr.headers()
            .map_err(|e| csv_error(0, "", e))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_error(row, "", e))?;
        if names.is_empty() {
            names = (1..=record.len()).map(|j| j.to_string()).collect();
        }
        if record.len() != names.len() {
            return Err(Error::Csv {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        for (cell, name) in record.iter().zip(&names) {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                row,
                column: name.clone(),
                message: format!("cannot parse `{cell}` as a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidData("file has no data rows".into()));
    }
    Ok(Table {
        data: DMatrix::from_row_slice(rows, names.len(), &values),
        names,
    })
}

fn csv_error(row: usize, column: &str, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Csv {
            row,
            column: column.to_string(),
            message: e.to_string(),
        },
    }
}

/// Reads a CSV file into a dataset, preserving row order.
pub fn read_csv_dataset(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    schema.check()?;
    let table = read_csv_table(File::open(path)?, schema.delimiter, schema.has_header)?;
    table.to_dataset(schema)
}

/// Writes a table with a header row, formatting every value with Rust's
/// shortest round-trip representation.
pub fn write_csv_table<W: Write>(writer: W, names: &[String], data: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(names).map_err(|e| csv_error(0, "", e))?;
    for i in 0..data.nrows() {
        let row: Vec<String> = data.row(i).iter().map(|v| format!("{v}")).collect();
        wtr.write_record(&row)
            .map_err(|e| csv_error(i + 1, "", e))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Canonical CSV of a dataset: header `response, X names, Z names`.
pub fn write_csv_dataset<W: Write>(writer: W, dataset: &Dataset, response: &str) -> Result<()> {
    let names: Vec<String> = std::iter::once(response.to_string())
        .chain(dataset.x_names().iter().cloned())
        .chain(dataset.z_names().iter().cloned())
        .collect();
    let mut data = DMatrix::zeros(dataset.n(), names.len());
    data.set_column(0, dataset.y());
    data.view_mut((0, 1), (dataset.n(), dataset.d_x()))
        .copy_from(dataset.x());
    data.view_mut((0, 1 + dataset.d_x()), (dataset.n(), dataset.d_z()))
        .copy_from(dataset.z());
    write_csv_table(writer, &names, &data)
}
