//! CSV and JSON emission. Every file goes through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::SweepResult;
use crate::lcurve::LCurve;

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to a sibling temp file, syncs it, then renames it over
/// `path`, so readers never observe a truncated file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Header row plus rows of preformatted fields, LF line endings.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    write_atomic(path, &csv_bytes(header, rows)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Columns `x` followed by one column per named vector.
pub fn write_columns(
    path: &Path,
    x_name: &str,
    x: &[f64],
    columns: &[(String, Vec<f64>)],
) -> Result<()> {
    if let Some((name, _)) = columns.iter().find(|(_, c)| c.len() != x.len()) {
        return Err(Error::Parameter(format!(
            "column '{name}' does not match {} rows",
            x.len()
        )));
    }
    let mut header = vec![x_name];
    header.extend(columns.iter().map(|(n, _)| n.as_str()));
    let rows = (0..x.len()).map(|i| {
        std::iter::once(fmt_f64(x[i]))
            .chain(columns.iter().map(move |(_, c)| fmt_f64(c[i])))
            .collect::<Vec<_>>()
    });
    write_csv(path, &header, rows)
}

/// One row per grid point; `kind` distinguishes curves when several are
/// written together.
pub fn write_lcurves(path: &Path, curves: &[LCurve]) -> Result<()> {
    let rows = curves.iter().flat_map(|c| {
        (0..c.len()).map(move |i| {
            vec![
                c.kind.name().to_string(),
                fmt_f64(c.lambdas[i]),
                fmt_f64(c.xs[i]),
                fmt_f64(c.ys[i]),
                fmt_f64(c.curvatures[i]),
                u8::from(i == c.selected_index).to_string(),
            ]
        })
    });
    write_csv(
        path,
        &[
            "kind",
            "lambda",
            "log_resid",
            "log_penalty",
            "curvature",
            "selected",
        ],
        rows,
    )
}

pub fn write_sweep_summary(path: &Path, sweep: &SweepResult) -> Result<()> {
    let rows = sweep.cells.iter().map(|c| {
        vec![
            fmt_f64(c.sweep_value),
            c.kind.name().to_string(),
            fmt_f64(c.mean_err),
            fmt_f64(c.std_err),
            fmt_f64(c.mean_loss),
            fmt_f64(c.std_loss),
            c.count.to_string(),
        ]
    });
    write_csv(
        path,
        &[
            "sweep_value",
            "kind",
            "mean_err",
            "std_err",
            "mean_loss",
            "std_loss",
            "count",
        ],
        rows,
    )
}

pub fn write_sweep_records(path: &Path, sweep: &SweepResult) -> Result<()> {
    let rows = sweep.records.iter().map(|r| {
        vec![
            fmt_f64(r.sweep_value),
            r.kind.name().to_string(),
            r.sim.to_string(),
            r.seed.to_string(),
            fmt_f64(r.sigma),
            fmt_f64(r.lambda),
            fmt_f64(r.err),
            fmt_f64(r.loss),
        ]
    });
    write_csv(
        path,
        &[
            "sweep_value",
            "kind",
            "sim",
            "seed",
            "sigma",
            "lambda",
            "err",
            "loss",
        ],
        rows,
    )
}

/// Reads a column of values: a header row, then one row per source point
/// with the value in the last field.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = record
            .iter()
            .last()
            .ok_or_else(|| Error::Config(format!("{}: empty row {}", path.display(), row + 2)))?;
        out.push(field.parse::<f64>().map_err(|_| {
            Error::Config(format!(
                "{}: cannot parse '{field}' on row {}",
                path.display(),
                row + 2
            ))
        })?);
    }
    Ok(out)
}
