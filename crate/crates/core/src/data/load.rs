use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use ndarray::Array2;

use super::{DatasetConfig, SeriesDataset};
use crate::error::{Error, Result};

/// Raw rows of a CSV file: timestamps, column names and values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub timestamps: Vec<NaiveDateTime>,
    pub columns: Vec<String>,
    pub values: Array2<f64>,
}

const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

fn is_missing(s: &str) -> bool {
    matches!(s, "" | "NA" | "NaN" | "nan" | "null")
}

/// Reads a CSV whose first column holds ISO-8601 timestamps and whose other
/// columns are numeric. Empty or `NA`/`NaN` cells become 0.
pub fn read_table(path: &Path) -> Result<Table> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => csv_err(format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(csv_err("need a timestamp column and at least one feature column".into()));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut flat = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| csv_err(format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(csv_err(format!("line {line}: expected {} cells, found {}", header.len(), record.len())));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| csv_err(format!("line {line}: cannot parse timestamp '{}'", &record[0])))?;
        timestamps.push(ts);
        for (j, cell) in record.iter().enumerate().skip(1) {
            let v = if is_missing(cell) {
                0.0
            } else {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| csv_err(format!("line {line}, column '{}': non-numeric value '{cell}'", &header[j])))?
            };
            flat.push(v);
        }
    }
    let values = Array2::from_shape_vec((timestamps.len(), columns.len()), flat).expect("row lengths checked");
    Ok(Table {
        timestamps,
        columns,
        values,
    })
}

/// Writes a table in the format [`read_table`] accepts.
pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (t, row) in table.timestamps.iter().zip(table.values.rows()) {
        let mut rec = vec![t.format("%Y-%m-%dT%H:%M:%S").to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV and builds a scaled dataset from it.
pub fn load_csv(path: &Path, config: &DatasetConfig) -> Result<SeriesDataset> {
    SeriesDataset::new(read_table(path)?, config)
}
