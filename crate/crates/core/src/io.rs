//! CSV readers and writers for densities, datasets, traces and reports.
//!
//! All files are comma separated with a header row and LF line endings.
//! Reals are written with 17 significant digits so they round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimation::EstimationResult;
use crate::grid::{Grid, GridDensity};
use crate::models::Dataset;
use crate::selection::CrossValReport;

/// Formats a real so that parsing it back gives the same bits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `header` and then one row per entry of `rows`.
pub fn write_table<W: Write>(mut out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_real(x)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Reads a numeric table, checking the header. Lines starting with `#` are
/// skipped.
pub fn read_table<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found.len() != header.len() || found.iter().zip(header).any(|(f, h)| f != h) {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            found.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    Error::Format(format!("row {}: `{cell}` is not a number", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_density<W: Write>(out: W, p: &GridDensity) -> Result<()> {
    let rows: Vec<Vec<f64>> = p
        .grid()
        .nodes()
        .iter()
        .zip(p.values())
        .map(|(&t, &w)| vec![t, w])
        .collect();
    write_table(out, &["theta", "density"], &rows)
}

pub fn save_density(path: &Path, p: &GridDensity) -> Result<()> {
    write_density(create(path)?, p)
}

/// Reads a `theta,density` file. The values are renormalized on the read
/// grid, so files written by other tools with small quadrature mismatches
/// are accepted.
pub fn read_density<R: Read>(input: R) -> Result<GridDensity> {
    let rows = read_table(input, &["theta", "density"])?;
    let (nodes, values): (Vec<f64>, Vec<f64>) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    let grid = Arc::new(Grid::from_nodes(nodes)?);
    GridDensity::normalized(grid, values)
}

pub fn load_density(path: &Path) -> Result<GridDensity> {
    read_density(File::open(path)?)
}

pub fn write_dataset<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let rows: Vec<Vec<f64>> = data.points().iter().map(|&x| vec![x]).collect();
    write_table(out, &["x"], &rows)
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(create(path)?, data)
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let rows = read_table(input, &["x"])?;
    Dataset::new(rows.into_iter().map(|r| r[0]).collect())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

/// `iter,objective`, one row per accepted iterate starting at 0.
pub fn write_trace<W: Write>(mut out: W, result: &EstimationResult) -> Result<()> {
    writeln!(out, "iter,objective")?;
    for (k, v) in result.objective_trace.iter().enumerate() {
        writeln!(out, "{k},{}", fmt_real(*v))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `prior.csv` and `trace.csv` into `dir`.
pub fn save_estimate(dir: &Path, result: &EstimationResult) -> Result<()> {
    save_density(&dir.join("prior.csv"), &result.prior)?;
    write_trace(create(&dir.join("trace.csv"))?, result)
}

/// `gamma,loo_score` preceded by a `# chosen=<value>` comment line.
pub fn write_crossval<W: Write>(mut out: W, report: &CrossValReport) -> Result<()> {
    writeln!(out, "# chosen={}", fmt_real(report.chosen))?;
    let rows: Vec<Vec<f64>> = report
        .gammas
        .iter()
        .zip(&report.scores)
        .map(|(&g, &s)| vec![g, s])
        .collect();
    write_table(out, &["gamma", "loo_score"], &rows)
}

pub fn save_crossval(path: &Path, report: &CrossValReport) -> Result<()> {
    write_crossval(create(path)?, report)
}

/// Reads a `gamma,loo_score` file back into a report (without fold detail).
pub fn read_crossval<R: Read>(mut input: R) -> Result<CrossValReport> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let chosen = text
        .lines()
        .find_map(|l| l.strip_prefix("# chosen="))
        .ok_or_else(|| Error::Format("missing `# chosen=` line".into()))?
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Format(format!("bad chosen value: {e}")))?;
    let rows = read_table(text.as_bytes(), &["gamma", "loo_score"])?;
    let (gammas, scores) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    Ok(CrossValReport {
        gammas,
        scores,
        chosen,
        per_fold: None,
    })
}

pub fn save_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_table(create(path)?, header, rows)
}
