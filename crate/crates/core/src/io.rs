//! Readers and writers for paths and matrices.
//!
//! CSV floats are written with Rust's shortest round-trip formatting, so every
//! file read back yields bit-identical values.
//!
//! Binary path layout (little-endian):
//!
//! | bytes | content            |
//! |-------|--------------------|
//! | 4     | magic `MFBM`       |
//! | 4     | version `u32` (1)  |
//! | 8     | `n` as `u64`       |
//! | 8     | `p` as `u64`       |
//! | 8·n·p | `f64`, row-major   |
//!
//! Binary matrix layout: `dim` as `u64`, then `dim²` row-major `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{MfbmError, Result};
use crate::synthesis::SamplePath;

pub const PATH_MAGIC: &[u8; 4] = b"MFBM";
pub const PATH_VERSION: u32 = 1;

pub fn write_path_csv<W: Write>(path: &SamplePath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=path.p()).map(|i| format!("x{i}")).collect();
    w.write_record(&header)?;
    for row in path.values.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path_csv<R: Read>(input: R) -> Result<SamplePath> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let p = r.headers()?.len();
    if p == 0 {
        return Err(MfbmError::Format("CSV has no columns".into()));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != p {
            return Err(MfbmError::Format(format!(
                "row {} has {} fields, expected {p}",
                n + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| MfbmError::Format(format!("invalid number {field:?} in row {}", n + 1)))?;
            data.push(v);
        }
        n += 1;
    }
    SamplePath::from_values(DMatrix::from_row_slice(n, p, &data))
}

pub fn write_path_binary<W: Write>(path: &SamplePath, mut out: W) -> Result<()> {
    out.write_all(PATH_MAGIC)?;
    out.write_all(&PATH_VERSION.to_le_bytes())?;
    out.write_all(&(path.n() as u64).to_le_bytes())?;
    out.write_all(&(path.p() as u64).to_le_bytes())?;
    for row in path.values.row_iter() {
        for v in row.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(input: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    input.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn checked_len(a: u64, b: u64) -> Result<usize> {
    a.checked_mul(b)
        .filter(|&len| len <= (isize::MAX as u64) / 8)
        .map(|len| len as usize)
        .ok_or_else(|| MfbmError::Format("declared size is too large".into()))
}

pub fn read_path_binary<R: Read>(mut input: R) -> Result<SamplePath> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != PATH_MAGIC {
        return Err(MfbmError::Format("bad magic, not an mfBm path file".into()));
    }
    let mut ver = [0u8; 4];
    input.read_exact(&mut ver)?;
    let version = u32::from_le_bytes(ver);
    if version != PATH_VERSION {
        return Err(MfbmError::Format(format!("unsupported version {version}")));
    }
    let n = read_u64(&mut input)?;
    let p = read_u64(&mut input)?;
    let len = checked_len(n, p)?;
    let data = read_f64s(&mut input, len)?;
    SamplePath::from_values(DMatrix::from_row_slice(n as usize, p as usize, &data))
}

pub fn write_matrix_binary<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    if !m.is_square() {
        return Err(MfbmError::DimensionMismatch("matrix must be square".into()));
    }
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    for row in m.row_iter() {
        for v in row.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut input: R) -> Result<DMatrix<f64>> {
    let dim = read_u64(&mut input)?;
    let data = read_f64s(&mut input, checked_len(dim, dim)?)?;
    Ok(DMatrix::from_row_slice(dim as usize, dim as usize, &data))
}

/// Headerless CSV, one matrix row per line.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| MfbmError::Format(format!("invalid number {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(MfbmError::Format("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.concat();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// Reads a path, picking the format from the extension (`.csv` or binary).
pub fn load_path(file: &Path) -> Result<SamplePath> {
    let reader = BufReader::new(File::open(file)?);
    if is_csv(file) {
        read_path_csv(reader)
    } else {
        read_path_binary(reader)
    }
}

pub fn save_path(path: &SamplePath, file: &Path) -> Result<()> {
    let writer = BufWriter::new(File::create(file)?);
    if is_csv(file) {
        write_path_csv(path, writer)
    } else {
        write_path_binary(path, writer)
    }
}

fn is_csv(file: &Path) -> bool {
    file.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
