use std::io::Write;
use std::path::{Path, PathBuf};

use mfg_core::ConvergenceTrace;
use serde::Serialize;

use crate::error::{CliResult, Failure};

pub const TRACE_HEADER: [&str; 7] = [
    "iter",
    "delta_qpire",
    "delta_qstarre",
    "delta_re",
    "exploitability",
    "reg_exploitability",
    "wall_time_s",
];

/// 17 significant digits: enough to round-trip any f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes into `dir` through a temporary file that is renamed into place.
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| {
            Failure::from(e).context(format!("creating output directory {}", dir.display()))
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::from)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.write(name, &bytes)
    }

    pub fn write_trace(&self, trace: &ConvergenceTrace) -> CliResult<PathBuf> {
        self.write_csv(
            "trace.csv",
            &TRACE_HEADER,
            trace.rows().iter().map(|r| {
                [
                    r.iteration.to_string(),
                    num(r.delta_qpire),
                    num(r.delta_qstarre),
                    num(r.delta_re),
                    num(r.exploitability),
                    num(r.reg_exploitability),
                    num(r.wall_time_seconds),
                ]
            }),
        )
    }
}
