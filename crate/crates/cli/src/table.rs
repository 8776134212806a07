use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dhym_core::torus::PeriodicField;

use crate::CliError;

/// Writes a CSV with a one-line header.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:.17e}"))).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Grid field as `x<i>,…,<value_name>`, one row per node in storage order.
pub fn write_field(path: &Path, field: &PeriodicField, value_name: &str) -> Result<(), CliError> {
    let names: Vec<String> = field.active().iter().map(|a| format!("x{a}")).collect();
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(value_name);
    let rows = (0..field.len()).map(|i| {
        let mut row = field.coords(i);
        row.push(field.values()[i]);
        row
    });
    write_csv(path, &header, rows)
}

/// Reads values written by [`write_field`] onto the grid of `template`,
/// checking that the coordinate columns match the grid nodes.
pub fn read_field(path: &Path, template: &PeriodicField) -> Result<PeriodicField, CliError> {
    let rows = read_rows(path)?;
    let width = template.active().len() + 1;
    if rows.records.len() != template.len() {
        return Err(CliError::Config(format!(
            "{} has {} rows, grid has {} nodes",
            path.display(),
            rows.records.len(),
            template.len()
        )));
    }
    let mut values = Vec::with_capacity(template.len());
    for (i, rec) in rows.records.iter().enumerate() {
        if rec.len() != width {
            return Err(CliError::Config(format!("{} row {}: expected {width} columns", path.display(), i + 2)));
        }
        let coords = template.coords(i);
        if coords.iter().zip(rec).any(|(c, v)| (c - v).abs() > 1e-9) {
            return Err(CliError::Config(format!("{} row {}: coordinates do not match the grid", path.display(), i + 2)));
        }
        values.push(rec[width - 1]);
    }
    template.like(values).map_err(CliError::config)
}

pub struct Rows {
    pub header: Vec<String>,
    pub records: Vec<Vec<f64>>,
}

impl Rows {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.records.iter().map(|r| r[j]).collect())
    }
}

pub fn read_rows(path: &Path) -> Result<Rows, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| CliError::io(path, e))?.iter().map(str::to_string).collect();
    let mut records = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{} row {}: {e}", path.display(), i + 2)))?;
        records.push(row);
    }
    Ok(Rows { header, records })
}

/// Two-column whitespace-separated data for gnuplot.
pub fn write_dat(path: &Path, comment: &str, points: &[(f64, f64)]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "# {comment}")?;
        for (x, y) in points {
            writeln!(w, "{x:.12e} {y:.12e}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| CliError::io(path, e))
}
