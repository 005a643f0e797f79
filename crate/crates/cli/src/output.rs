use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::SCHEMA_VERSION;
use crate::CliError;

/// Writes `value` as pretty JSON with a leading `schema_version` field.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Versioned<'a, T> {
        schema_version: u32,
        #[serde(flatten)]
        body: &'a T,
    }
    let text = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body: value,
    })
    .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    write_text(dir, name, &(text + "\n"))
}

/// Writes a config copy as is; it already carries its schema version.
pub fn write_config<T: Serialize>(dir: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    write_text(dir, "resolved_config.json", &(text + "\n"))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}
