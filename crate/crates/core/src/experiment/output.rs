//! Artifact writers: PGM heatmaps, CSV vectors, source overlays.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::ImageGrid;
use crate::linalg::C64;
use crate::solver::{split_solution, SolveResult};

/// Writes an 8-bit binary PGM of `|values|` scaled so the maximum maps to
/// 255. Levels are `floor(255 |v| / max + 0.5)`, so exact halves round up.
/// A zero vector gives an all-black image.
pub fn render_heatmap(values: &[C64], rows: usize, cols: usize, path: &Path) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            actual: values.len(),
        });
    }
    let mags: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P5 {cols} {rows} 255")?;
    let pixels: Vec<u8> = mags
        .iter()
        .map(|&m| {
            if peak > 0.0 {
                (255.0 * m / peak + 0.5).floor().min(255.0) as u8
            } else {
                0
            }
        })
        .collect();
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}

/// Reads back a binary PGM written by [`render_heatmap`].
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let bad = |reason: &str| Error::MatrixFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("no header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not text"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "P5" || parts[3] != "255" {
        return Err(bad("expected `P5 width height 255`"));
    }
    let cols: usize = parts[1].parse().map_err(|_| bad("bad width"))?;
    let rows: usize = parts[2].parse().map_err(|_| bad("bad height"))?;
    let data = bytes[end + 1..].to_vec();
    if data.len() != rows * cols {
        return Err(bad("pixel count does not match header"));
    }
    Ok((rows, cols, data))
}

/// Plain-text overlay: one `row col` line per true source pixel.
pub fn write_source_overlay(grid: &ImageGrid, support: &[usize], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# row col")?;
    for &k in support {
        let (r, c) = grid.row_col(k);
        writeln!(w, "{r} {c}")?;
    }
    w.flush()?;
    Ok(())
}

const CSV_HEADER: [&str; 4] = ["index", "real", "imag", "magnitude"];

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with header `index,real,imag,magnitude`, CRLF line ends, numbers in
/// scientific notation with 17 significant digits.
pub fn write_vector_csv(values: &[C64], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([k.to_string(), fmt(v.re), fmt(v.im), fmt(v.norm())])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<C64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("{}: bad field {i} in row {row}", path.display())))
        };
        let index = num(0)? as usize;
        if index != row {
            return Err(Error::InvalidConfig(format!(
                "{}: row {row} has index {index}",
                path.display()
            )));
        }
        out.push(C64::new(num(1)?, num(2)?));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportedPaths {
    pub image_csv: PathBuf,
    pub collector_csv: PathBuf,
    pub diagnostics: PathBuf,
}

/// Writes `<prefix>.image.csv` (first `k` entries), `<prefix>.collector.csv`
/// (the rest) and `<prefix>.diagnostics.json`.
pub fn export_vectors<D: Serialize>(
    result: &SolveResult,
    k: usize,
    prefix: &Path,
    diagnostics: &D,
) -> Result<ExportedPaths> {
    let (image, noise) = split_solution(result, k)?;
    let paths = ExportedPaths {
        image_csv: with_suffix(prefix, "image.csv"),
        collector_csv: with_suffix(prefix, "collector.csv"),
        diagnostics: with_suffix(prefix, "diagnostics.json"),
    };
    write_vector_csv(&image, &paths.image_csv)?;
    write_vector_csv(&noise, &paths.collector_csv)?;
    write_json(diagnostics, &paths.diagnostics)?;
    Ok(paths)
}

pub fn write_json<D: Serialize + ?Sized>(value: &D, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `<prefix>.<suffix>`, appending rather than replacing any extension.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
