//! Reading drivers from disk and writing plot-ready CSV.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{arg, Error, Result};
use crate::grid::TimeGrid;
use crate::lifts::piecewise_linear;
use crate::rough_path::{RoughPath, RoughPathFile};

/// Level-1 samples from a CSV file with header `t,x1,...,xd`.
pub fn read_samples_csv(path: &Path) -> Result<(TimeGrid, Array2<f64>)> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.len() < 2 || headers.get(0).map(str::trim) != Some("t") {
        return arg(format!("{}: expected a header t,x1,...,xd", path.display()));
    }
    let d = headers.len() - 1;
    let mut times = Vec::new();
    let mut flat = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if record.len() != d + 1 {
            return arg(format!("{}: row {} has {} fields, expected {}", path.display(), row + 1, record.len(), d + 1));
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Argument(format!("{}: row {} has a non-numeric field {field:?}", path.display(), row + 1)))?;
            if k == 0 {
                times.push(v);
            } else {
                flat.push(v);
            }
        }
    }
    let n = times.len();
    let values = Array2::from_shape_vec((n, d), flat).expect("row lengths checked");
    Ok((TimeGrid::from_times(times)?, values))
}

/// Piecewise-linear lift of CSV samples.
pub fn lift_samples_csv(path: &Path, alpha: f64) -> Result<RoughPath> {
    let (grid, values) = read_samples_csv(path)?;
    piecewise_linear(grid, values, alpha)
}

/// Load a rough path from JSON, or lift CSV samples when the extension is `.csv`.
pub fn read_driver(path: &Path, alpha: f64) -> Result<RoughPath> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return lift_samples_csv(path, alpha);
    }
    let text = std::fs::read_to_string(path)?;
    let file: RoughPathFile = serde_json::from_str(&text)?;
    RoughPath::from_file(file)
}

/// Write rows of floats under `header`, each value with 17 significant digits.
pub fn write_csv<W: Write>(out: W, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header).map_err(csv_error)?;
    for row in rows {
        writer.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Argument(format!("malformed CSV: {other:?}")),
    }
}
