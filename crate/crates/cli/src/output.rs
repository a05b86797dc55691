use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Effective;
use crate::CliError;

/// Creates the artifact directory and records the effective configuration.
pub fn prepare(eff: &Effective) -> Result<(), CliError> {
    fs::create_dir_all(&eff.out)?;
    write_json(&eff.out.join("metadata.json"), eff)
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Validation(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// File-name tag of a parameter value, e.g. `c0.25`.
pub fn c_tag(c: f64) -> String {
    format!("c{c}")
}

pub fn path(eff: &Effective, stem: &str, c: f64, ext: &str) -> PathBuf {
    eff.out.join(format!("{stem}_{}.{ext}", c_tag(c)))
}
