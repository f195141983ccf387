//! CSV exchange formats for point sets and coupling tables.

use std::path::Path;

use crate::error::{Error, Result};

fn point_header(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("{prefix}{j}")).collect()
}

/// Points as rows under the header `x1,…,xd`.
pub fn write_points<W: std::io::Write>(out: W, dim: usize, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(point_header("x", dim))?;
    for r in rows {
        if r.len() != dim {
            return Err(Error::Data(format!("row has {} columns, expected {dim}", r.len())));
        }
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_points(path: &Path, dim: usize, rows: &[Vec<f64>]) -> Result<()> {
    write_points(std::fs::File::create(path)?, dim, rows)
}

/// Reads a headered numeric CSV; every row must have the header's width.
pub fn read_points<R: std::io::Read>(input: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rd = csv::Reader::from_reader(input);
    let dim = rd.headers()?.len();
    if dim == 0 {
        return Err(Error::Data("CSV has an empty header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("row {}: `{f}` is not a finite number", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((dim, rows))
}

pub fn load_points(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    read_points(std::fs::File::open(path)?)
}

/// Coupling rows `(x0, x1)` under the header `x0_1,…,x0_d,x1_1,…,x1_d`.
pub fn write_coupling<W: std::io::Write>(out: W, dim: usize, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = point_header("x0_", dim);
    header.extend(point_header("x1_", dim));
    w.write_record(header)?;
    for (a, b) in pairs {
        if a.len() != dim || b.len() != dim {
            return Err(Error::Data("coupling row has the wrong dimension".into()));
        }
        w.write_record(a.iter().chain(b).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_coupling(path: &Path, dim: usize, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    write_coupling(std::fs::File::create(path)?, dim, pairs)
}

pub fn read_coupling<R: std::io::Read>(input: R) -> Result<(usize, Vec<(Vec<f64>, Vec<f64>)>)> {
    let (width, rows) = read_points(input)?;
    if width % 2 != 0 {
        return Err(Error::Data(format!("coupling CSV has odd width {width}")));
    }
    let d = width / 2;
    Ok((d, rows.into_iter().map(|mut r| {
        let x1 = r.split_off(d);
        (r, x1)
    }).collect()))
}

pub fn load_coupling(path: &Path) -> Result<(usize, Vec<(Vec<f64>, Vec<f64>)>)> {
    read_coupling(std::fs::File::open(path)?)
}
