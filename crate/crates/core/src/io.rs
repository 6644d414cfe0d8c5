//! Matrix file formats shared by feature sets and descriptors.
//!
//! * CSV: one row per line, comma-separated decimals, no header.
//! * raw-f32: little-endian, 16-byte header (`DPF1`, rows as u32, cols as
//!   u32, four reserved zero bytes) followed by `rows * cols` IEEE-754 `f32`
//!   values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const RAW_MAGIC: &[u8; 4] = b"DPF1";
pub const RAW_HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatrixFormat {
    Csv,
    RawF32,
}

impl MatrixFormat {
    /// Sniffs the format from the leading bytes of a file.
    pub fn detect(prefix: &[u8]) -> Self {
        if prefix.len() >= 4 && &prefix[..4] == RAW_MAGIC {
            MatrixFormat::RawF32
        } else {
            MatrixFormat::Csv
        }
    }

    pub fn detect_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = [0u8; 4];
        let mut file = File::open(path)?;
        let mut read = 0;
        while read < 4 {
            let got = file.read(&mut buf[read..])?;
            if got == 0 {
                break;
            }
            read += got;
        }
        Ok(Self::detect(&buf[..read]))
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "raw-f32" | "raw" | "f32" => Ok(MatrixFormat::RawF32),
            other => Err(Error::InvalidConfig(format!("unknown matrix format `{other}`"))),
        }
    }
}

pub fn read_matrix<T: Scalar, R: Read>(reader: R, format: MatrixFormat) -> Result<Array2<T>> {
    match format {
        MatrixFormat::Csv => read_csv(reader),
        MatrixFormat::RawF32 => read_raw(reader),
    }
}

pub fn write_matrix<T: Scalar, W: Write>(
    writer: W,
    matrix: &Array2<T>,
    format: MatrixFormat,
) -> Result<()> {
    match format {
        MatrixFormat::Csv => write_csv(writer, matrix),
        MatrixFormat::RawF32 => write_raw(writer, matrix),
    }
}

pub fn load_matrix<T: Scalar>(path: impl AsRef<Path>, format: MatrixFormat) -> Result<Array2<T>> {
    read_matrix(BufReader::new(File::open(path)?), format)
}

pub fn save_matrix<T: Scalar>(
    path: impl AsRef<Path>,
    matrix: &Array2<T>,
    format: MatrixFormat,
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_matrix(&mut writer, matrix, format)?;
    writer.flush()?;
    Ok(())
}

fn read_csv<T: Scalar, R: Read>(reader: R) -> Result<Array2<T>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut count = 0;
        for field in trimmed.split(',') {
            let field = field.trim();
            let parsed: f64 = field.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            values.push(T::of(parsed));
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(expected) if expected != count => {
                return Err(Error::DimensionMismatch { expected, found: count })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::EmptyFeatureSet)?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("row-major buffer matches shape"))
}

fn write_csv<T: Scalar, W: Write>(mut writer: W, matrix: &Array2<T>) -> Result<()> {
    for row in matrix.rows() {
        let mut first = true;
        for value in row {
            if !first {
                writer.write_all(b",")?;
            }
            first = false;
            // Shortest round-trip representation of the f64 value.
            write!(writer, "{}", value.as_f64())?;
        }
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn read_raw<T: Scalar, R: Read>(mut reader: R) -> Result<Array2<T>> {
    let mut header = [0u8; RAW_HEADER_LEN];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::BadHeader("file shorter than 16-byte header".into()))?;
    if &header[..4] != RAW_MAGIC {
        return Err(Error::BadHeader("missing DPF1 magic".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if header[12..16] != [0; 4] {
        return Err(Error::BadHeader("reserved bytes are not zero".into()));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyFeatureSet);
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::BadHeader("n * d overflows".into()))?;
    let mut bytes = vec![0u8; count * 4];
    reader.read_exact(&mut bytes).map_err(|_| {
        Error::BadHeader(format!("payload shorter than {count} f32 values"))
    })?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::BadHeader("trailing bytes after payload".into()));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("row-major buffer matches shape"))
}

fn write_raw<T: Scalar, W: Write>(mut writer: W, matrix: &Array2<T>) -> Result<()> {
    let (rows, cols) = matrix.dim();
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("dimension {v} exceeds u32")))
    };
    writer.write_all(RAW_MAGIC)?;
    writer.write_all(&to_u32(rows)?.to_le_bytes())?;
    writer.write_all(&to_u32(cols)?.to_le_bytes())?;
    writer.write_all(&[0u8; 4])?;
    for value in matrix.iter() {
        writer.write_all(&(value.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn detects_raw_magic() {
        assert_eq!(MatrixFormat::detect(b"DPF1\x01"), MatrixFormat::RawF32);
        assert_eq!(MatrixFormat::detect(b"1,2"), MatrixFormat::Csv);
        assert_eq!(MatrixFormat::detect(b""), MatrixFormat::Csv);
    }

    #[test]
    fn raw_header_layout() {
        let m = array![[1.0f64, 2.0, 3.0]];
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, MatrixFormat::RawF32).unwrap();
        assert_eq!(buf.len(), 16 + 12);
        assert_eq!(&buf[..4], b"DPF1");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(&buf[12..16], &[0; 4]);
        assert_eq!(&buf[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn raw_rejects_truncated_payload() {
        let m = array![[1.0f64, 2.0], [3.0, 4.0]];
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, MatrixFormat::RawF32).unwrap();
        buf.pop();
        assert!(matches!(
            read_matrix::<f64, _>(&buf[..], MatrixFormat::RawF32),
            Err(Error::BadHeader(_))
        ));
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let err = read_matrix::<f64, _>(&b"1,2\n3\n"[..], MatrixFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn csv_bad_token_reports_line() {
        let err = read_matrix::<f64, _>(&b"1,2\n3,x\n"[..], MatrixFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
