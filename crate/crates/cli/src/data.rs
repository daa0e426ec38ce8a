use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;

/// Reads a `t,y1,...,yd` file with a mandatory header row.
pub fn read_observations(path: &Path) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header = reader.headers()?.clone();
    if header.len() < 2 || &header[0] != "t" {
        bail!("{}: header must be t,y1,...,yd", path.display());
    }
    let d = header.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: bad number on data row {}", path.display(), line + 1))?;
        if row.iter().any(|v| !v.is_finite()) {
            bail!("{}: non-finite value on data row {}", path.display(), line + 1);
        }
        times.push(row[0]);
        values.extend_from_slice(&row[1..]);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        bail!("{}: times must be strictly increasing", path.display());
    }
    let n = times.len();
    Ok((times, DMatrix::from_row_slice(n, d, &values)))
}

pub fn write_observations(path: &Path, times: &[f64], y: &DMatrix<f64>, columns: usize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=columns).map(|i| format!("y{i}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for (j, t) in times.iter().enumerate() {
        write!(out, "{t:.16e}")?;
        for i in 0..columns {
            write!(out, ",{:.16e}", y[(j, i)])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
