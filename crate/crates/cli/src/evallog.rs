//! JSON-lines evaluation log: one [`EvalRecord`] per line, appended as labels arrive.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use lightspeech_core::supernet::EvalRecord;

use crate::error::{CliError, CliResult};

/// Read every record. A line that does not parse is a runtime error naming its 1-based number.
pub fn load(path: &Path) -> CliResult<Vec<EvalRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::runtime(format!("cannot read {}: {e}", path.display()))),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::runtime(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(&line).map_err(|e| {
            CliError::runtime(format!("corrupt eval log {}: line {}: {e}", path.display(), i + 1))
        })?;
        if !(record.val_loss.is_finite() && record.val_loss >= 0.0) {
            return Err(CliError::runtime(format!(
                "corrupt eval log {}: line {}: loss must be finite and non-negative",
                path.display(),
                i + 1
            )));
        }
        out.push(record);
    }
    Ok(out)
}

pub struct EvalLogWriter {
    file: File,
}

impl EvalLogWriter {
    pub fn append(path: &Path) -> CliResult<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::runtime(format!("cannot open {}: {e}", path.display())))?;
        Ok(EvalLogWriter { file })
    }

    pub fn write(&mut self, record: &EvalRecord) -> CliResult<()> {
        let mut line = serde_json::to_string(record).map_err(CliError::runtime)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}
