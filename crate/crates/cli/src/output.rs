//! Table emission: one '#' header line, comma-separated numeric columns in
//! scientific notation with 12 significant digits, optional trailing '#'
//! comment lines. Deterministic byte-for-byte given the same values.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub fn format_value(x: f64) -> String {
    // Normalize negative zero so equal values always render identically.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

pub fn write_table(
    out: &mut dyn Write,
    columns: &[&str],
    rows: &[Vec<f64>],
    trailing: &[String],
) -> io::Result<()> {
    writeln!(out, "# {}", columns.join(", "))?;
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        let line: Vec<String> = row.iter().map(|&x| format_value(x)).collect();
        writeln!(out, "{}", line.join(", "))?;
    }
    for comment in trailing {
        writeln!(out, "# {comment}")?;
    }
    Ok(())
}

/// Write to `path`, or to stdout when no path is given.
pub fn emit_table(
    path: Option<&Path>,
    columns: &[&str],
    rows: &[Vec<f64>],
    trailing: &[String],
) -> io::Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write_table(&mut w, columns, rows, trailing)?;
            w.flush()
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write_table(&mut w, columns, rows, trailing)
        }
    }
}
