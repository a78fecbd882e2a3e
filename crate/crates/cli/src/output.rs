use std::fs::File;
use std::io::{self, Write};

use serde::Serialize;

use crate::commands::CliError;
use crate::{Format, Output};

fn sink(out: &Output) -> Result<Box<dyn Write>, CliError> {
    match &out.out {
        Some(path) => {
            let f = File::create(path)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
            Ok(Box::new(io::BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes `rows` as CSV, or `document` as pretty JSON.
pub fn emit<R: Serialize, D: Serialize>(
    out: &Output,
    rows: &[R],
    document: &D,
) -> Result<(), CliError> {
    let mut w = sink(out)?;
    match out.format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for row in rows {
                csv.serialize(row).map_err(io_err)?;
            }
            csv.flush().map_err(io_err)?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, document).map_err(io_err)?;
            writeln!(w).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}
