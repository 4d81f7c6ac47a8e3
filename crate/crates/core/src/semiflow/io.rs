use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::TruncatedBox;
use super::SemiflowError;

/// JSON description of a flat little-endian `f64` field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub half_width: f64,
    pub cells_per_dim: usize,
    pub dimension: usize,
    pub time: f64,
    pub len: usize,
    pub dtype: String,
}

fn header(dimension: usize) -> &'static str {
    if dimension == 1 {
        "x"
    } else {
        "x1,x2"
    }
}

fn coords(grid: &TruncatedBox, i: usize) -> String {
    let p = grid.node(i);
    if grid.dimension == 1 {
        format!("{:e}", p[0])
    } else {
        format!("{:e},{:e}", p[0], p[1])
    }
}

/// One row per node: coordinates then value.
pub fn write_field_csv<W: Write>(w: W, grid: &TruncatedBox, values: &[f64]) -> std::io::Result<()> {
    write_fields_csv(w, grid, &["value"], &[values])
}

/// Several fields on the same grid side by side.
pub fn write_fields_csv<W: Write>(
    mut w: W,
    grid: &TruncatedBox,
    names: &[&str],
    columns: &[&[f64]],
) -> std::io::Result<()> {
    writeln!(w, "{},{}", header(grid.dimension), names.join(","))?;
    for i in 0..grid.len() {
        write!(w, "{}", coords(grid, i))?;
        for c in columns {
            write!(w, ",{:e}", c[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_field_binary(dir: &Path, stem: &str, grid: &TruncatedBox, values: &[f64], time: f64) -> Result<(), SemiflowError> {
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.bin")))?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = FieldSidecar {
        half_width: grid.half_width,
        cells_per_dim: grid.cells_per_dim,
        dimension: grid.dimension,
        time,
        len: values.len(),
        dtype: "f64le".into(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| SemiflowError::Sidecar(e.to_string()))?;
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

pub fn read_field_binary(dir: &Path, stem: &str) -> Result<(FieldSidecar, Vec<f64>), SemiflowError> {
    let text = std::fs::read_to_string(dir.join(format!("{stem}.json")))?;
    let sidecar: FieldSidecar = serde_json::from_str(&text).map_err(|e| SemiflowError::Sidecar(e.to_string()))?;
    if sidecar.dtype != "f64le" {
        return Err(SemiflowError::Sidecar(format!("unsupported dtype {}", sidecar.dtype)));
    }
    let grid = TruncatedBox::new(sidecar.half_width, sidecar.cells_per_dim, sidecar.dimension)?;
    if grid.len() != sidecar.len {
        return Err(SemiflowError::Sidecar(format!(
            "declared length {} does not match box with {} nodes",
            sidecar.len,
            grid.len()
        )));
    }
    let mut bytes = Vec::new();
    File::open(dir.join(format!("{stem}.bin")))?.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * sidecar.len {
        return Err(SemiflowError::Sidecar(format!("expected {} bytes, found {}", 8 * sidecar.len, bytes.len())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((sidecar, values))
}
