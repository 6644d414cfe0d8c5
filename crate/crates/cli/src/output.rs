use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use democratic_pooling::{Descriptor, Error, MatrixFormat};
use serde::Serialize;

use crate::{GlobalArgs, OutputFormat};

/// Writes through a temporary file in the destination directory and renames
/// it into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = BufWriter::new(tmp);
    body(&mut writer)?;
    let tmp = writer.into_inner().map_err(|e| e.into_error())?;
    tmp.persist(path).map_err(|e| e.error).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn matrix_format(format: OutputFormat) -> anyhow::Result<MatrixFormat> {
    match format {
        OutputFormat::Csv => Ok(MatrixFormat::Csv),
        OutputFormat::RawF32 => Ok(MatrixFormat::RawF32),
        OutputFormat::Json => Err(Error::InvalidConfig("feature matrices are written as csv or raw-f32".into()).into()),
    }
}

pub fn write_descriptor(path: &Path, descriptor: &Descriptor<f64>, format: OutputFormat) -> anyhow::Result<()> {
    write_atomic(path, |w| {
        match format {
            OutputFormat::Json => {
                serde_json::to_writer(&mut *w, descriptor)?;
                writeln!(w)?;
            }
            OutputFormat::Csv => descriptor.write(w, MatrixFormat::Csv)?,
            OutputFormat::RawF32 => descriptor.write(w, MatrixFormat::RawF32)?,
        }
        Ok(())
    })
}

/// Pretty JSON to `--out` when given, else stdout.
pub fn emit_report<R: Serialize>(global: &GlobalArgs, report: &R) -> anyhow::Result<()> {
    match &global.out {
        Some(path) => write_atomic(path, |w| {
            serde_json::to_writer_pretty(&mut *w, report)?;
            writeln!(w)?;
            Ok(())
        }),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, report)?;
            writeln!(lock)?;
            Ok(())
        }
    }
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn extension(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "csv",
        OutputFormat::RawF32 => "f32",
        OutputFormat::Json => "json",
    }
}
