//! Run manifests written next to command outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::CliResult;
use crate::files::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn timestamp() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "1970-01-01T00:00:00Z".into())
}

impl RunManifest {
    pub fn begin(command: &str, args: Vec<String>) -> Self {
        RunManifest {
            command: command.into(),
            args,
            config_path: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            started_at: timestamp(),
            finished_at: String::new(),
        }
    }

    /// Stamp the end time and write to `path`.
    pub fn finish(mut self, path: &Path) -> CliResult<()> {
        self.finished_at = timestamp();
        write_json(path, &self)
    }
}
