//! Constraint streams as CSV: `t, y, x1..xn, z1..zn`.
//!
//! Floats are written in shortest round-trip form, so export followed by
//! import reproduces a stream bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metric::ConstraintTriplet;

pub fn header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "y".to_string()];
    h.extend((1..=dim).map(|i| format!("x{i}")));
    h.extend((1..=dim).map(|i| format!("z{i}")));
    h
}

pub fn write_stream<W: Write>(out: W, stream: &[ConstraintTriplet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = stream.first() else {
        w.flush()?;
        return Ok(());
    };
    let dim = first.dim();
    w.write_record(header(dim))?;
    let mut record = Vec::with_capacity(2 + 2 * dim);
    for c in stream {
        if c.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
        }
        record.clear();
        record.push(c.t.to_string());
        record.push(c.y.to_string());
        record.extend(c.x.iter().chain(c.z.iter()).map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_stream(path: impl AsRef<Path>, stream: &[ConstraintTriplet]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_stream(std::io::BufWriter::new(file), stream)
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a stream; rows must have increasing `t`. An empty input is an
/// empty stream.
pub fn read_stream<R: Read>(input: R) -> Result<Vec<ConstraintTriplet>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    let cols = header.len();
    if cols < 4 || cols % 2 != 0 || &header[0] != "t" || &header[1] != "y" {
        return Err(parse_err(1, "header must be t, y, x1..xn, z1..zn"));
    }
    let dim = (cols - 2) / 2;
    let expected = self::header(dim);
    if header.iter().zip(&expected).any(|(a, b)| a.trim() != b) {
        return Err(parse_err(1, format!("unexpected header, expected {}", expected.join(","))));
    }

    let mut out = Vec::new();
    let mut last_t: Option<u64> = None;
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols {
            return Err(parse_err(line, format!("expected {cols} fields, got {}", rec.len())));
        }
        let t: u64 = rec[0].trim().parse().map_err(|e| parse_err(line, format!("bad t {:?}: {e}", &rec[0])))?;
        let y: i8 = match rec[1].trim() {
            "1" | "+1" => 1,
            "-1" => -1,
            other => return Err(parse_err(line, format!("label must be +1 or -1, got {other:?}"))),
        };
        if last_t.is_some_and(|prev| t <= prev) {
            return Err(parse_err(line, format!("t = {t} is not after the previous row")));
        }
        last_t = Some(t);
        let mut values = Vec::with_capacity(2 * dim);
        for field in rec.iter().skip(2) {
            let v: f64 = field.trim().parse().map_err(|e| parse_err(line, format!("bad number {field:?}: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        let x = DVector::from_column_slice(&values[..dim]);
        let z = DVector::from_column_slice(&values[dim..]);
        out.push(ConstraintTriplet::new(x, z, y, t).map_err(|e| parse_err(line, e.to_string()))?);
    }
    Ok(out)
}

pub fn ingest_constraints(path: impl AsRef<Path>) -> Result<Vec<ConstraintTriplet>> {
    read_stream(std::fs::File::open(path)?)
}
