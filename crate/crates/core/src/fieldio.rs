//! Field files: CSV values plus a JSON sidecar carrying the window.
//!
//! Complex fields are written as `n,re,im`, real fields as `n,value`. The
//! sidecar next to `field.csv` is `field.json` with `{h, n_min, n_max}` and
//! any extra metadata. Floats are written with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::lattice::{ComplexField, LatticeWindow, RealField, C64};

/// Lossless decimal form of `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, reason: impl ToString) -> IoError {
    IoError::Csv {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    h: f64,
    n_min: i64,
    n_max: i64,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Write a CSV with the given header; every row must match its width.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_sidecar(
    csv_path: &Path,
    window: LatticeWindow,
    mut extra: serde_json::Map<String, serde_json::Value>,
) -> Result<(), IoError> {
    // the window keys always come from the field itself
    for key in ["h", "n_min", "n_max"] {
        extra.remove(key);
    }
    let sidecar = Sidecar {
        h: window.h,
        n_min: window.n_min,
        n_max: window.n_max,
        extra,
    };
    write_json(&sidecar_path(csv_path), &sidecar)
}

pub fn write_complex_field(path: &Path, field: &ComplexField) -> Result<(), IoError> {
    write_complex_field_with(path, field, serde_json::Map::new())
}

/// As [`write_complex_field`], merging `extra` into the sidecar.
pub fn write_complex_field_with(
    path: &Path,
    field: &ComplexField,
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<(), IoError> {
    let w = field.window();
    let rows = w
        .sites()
        .zip(field.values())
        .map(|(n, z)| vec![n.to_string(), fmt_f64(z.re), fmt_f64(z.im)]);
    write_csv(path, &["n", "re", "im"], rows)?;
    write_sidecar(path, w, extra)
}

pub fn write_real_field(path: &Path, field: &RealField) -> Result<(), IoError> {
    write_real_field_with(path, field, serde_json::Map::new())
}

pub fn write_real_field_with(
    path: &Path,
    field: &RealField,
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<(), IoError> {
    let w = field.window();
    let rows = w
        .sites()
        .zip(field.values())
        .map(|(n, x)| vec![n.to_string(), fmt_f64(*x)]);
    write_csv(path, &["n", "value"], rows)?;
    write_sidecar(path, w, extra)
}

/// Rows of `(n, columns...)`, checking the header and consecutive sites.
fn read_rows(path: &Path, header: &[&str]) -> Result<(LatticeWindow, Vec<Vec<f64>>), IoError> {
    let sidecar: Sidecar = read_json(&sidecar_path(path))?;
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let got = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(csv_err(path, format!("expected header {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let n: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| csv_err(path, format!("bad site index on row {}", i + 1)))?;
        if n != sidecar.n_min + i as i64 {
            return Err(csv_err(path, format!("site {n} out of sequence on row {}", i + 1)));
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| csv_err(path, format!("bad number on row {}", i + 1)))?;
        rows.push(vals);
    }
    let window = LatticeWindow::new(sidecar.n_min, sidecar.n_max, sidecar.h)?;
    if rows.len() != window.len() {
        return Err(csv_err(
            path,
            format!("{} rows for a window of {} sites", rows.len(), window.len()),
        ));
    }
    Ok((window, rows))
}

pub fn read_complex_field(path: &Path) -> Result<ComplexField, IoError> {
    let (window, rows) = read_rows(path, &["n", "re", "im"])?;
    let values = rows.into_iter().map(|r| C64::new(r[0], r[1])).collect();
    Ok(ComplexField::new(window, values)?)
}

pub fn read_real_field(path: &Path) -> Result<RealField, IoError> {
    let (window, rows) = read_rows(path, &["n", "value"])?;
    let values = rows.into_iter().map(|r| r[0]).collect();
    Ok(RealField::new(window, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_round_trips_awkward_values() {
        for x in [0.1, 1.0 / 3.0, -2.5e-308, 1.7976931348623157e308, 5e-324, -0.0] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn real_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        let w = LatticeWindow::new(-2, 3, 0.37).unwrap();
        let f = RealField::from_fn(w, |n| (n as f64 * 0.91).sin() / 7.0).unwrap();
        write_real_field(&path, &f).unwrap();
        assert_eq!(read_real_field(&path).unwrap(), f);
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        let w = LatticeWindow::new(0, 2, 1.0).unwrap();
        write_real_field(&path, &RealField::zeros(w)).unwrap();
        assert!(matches!(read_complex_field(&path), Err(IoError::Csv { .. })));
    }
}
