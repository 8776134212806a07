use std::path::Path;

use crate::solve::{ERROR_TABLE, PATH_LOG};
use crate::table::{read_rows, write_dat, Rows};
use crate::verify::INF_G_CSV;
use crate::CliError;

/// One plot: source CSV, x and y columns, output file.
struct Plot {
    source: &'static str,
    x: &'static str,
    y: &'static str,
    file: &'static str,
}

const PLOTS: [Plot; 4] = [
    Plot { source: PATH_LOG, x: "t", y: "residual", file: "residual_vs_t.dat" },
    Plot { source: PATH_LOG, x: "t", y: "cone_margin", file: "cone_margin_vs_t.dat" },
    Plot { source: INF_G_CSV, x: "theta", y: "inf_g", file: "inf_g_vs_theta.dat" },
    Plot { source: ERROR_TABLE, x: "grid", y: "sup_error", file: "error_vs_grid.dat" },
];

fn columns(rows: &Rows, source: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let missing = |c: &str| CliError::Config(format!("{} has no column {c:?}", source.display()));
    let xs = rows.column(x).ok_or_else(|| missing(x))?;
    let ys = rows.column(y).ok_or_else(|| missing(y))?;
    Ok(xs.into_iter().zip(ys).collect())
}

/// Writes a `.dat` file for every plot whose source CSV exists in `dir`.
pub fn cmd_report(dir: &Path, out: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written = Vec::new();
    for plot in &PLOTS {
        let source = dir.join(plot.source);
        if !source.is_file() {
            continue;
        }
        let rows = read_rows(&source)?;
        let points = columns(&rows, &source, plot.x, plot.y)?;
        let comment = format!("{} vs {} from {}", plot.y, plot.x, plot.source);
        write_dat(&out.join(plot.file), &comment, &points)?;
        written.push(plot.file);
    }
    if written.is_empty() {
        return Err(CliError::Usage(format!(
            "no run artifacts ({PATH_LOG}, {INF_G_CSV}, {ERROR_TABLE}) in {}",
            dir.display()
        )));
    }
    for file in written {
        println!("{}", out.join(file).display());
    }
    Ok(())
}
