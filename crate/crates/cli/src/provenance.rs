//! Provenance records written next to every output.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Where the record for `out` goes: inside it for directories, beside it
/// for files.
pub fn record_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("provenance.toml")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".provenance.toml");
        out.with_file_name(name)
    }
}

/// Writes the subcommand, the full effective configuration, its digest and
/// the SHA-256 of every input file.
pub fn write_record(out: &Path, subcommand: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<PathBuf, CliError> {
    let config_text = cfg.to_toml();
    let mut digests = toml::Table::new();
    for p in inputs {
        digests.insert(p.display().to_string(), toml::Value::String(file_digest(p)?));
    }
    let mut root = toml::Table::new();
    root.insert("subcommand".into(), toml::Value::String(subcommand.into()));
    root.insert(
        "config_digest".into(),
        toml::Value::String(sha256_hex(config_text.as_bytes())),
    );
    root.insert("inputs".into(), toml::Value::Table(digests));
    root.insert(
        "config".into(),
        toml::Value::Table(config_text.parse().expect("config is valid TOML")),
    );
    let path = record_path(out);
    std::fs::write(
        &path,
        toml::to_string(&root).map_err(|e| CliError::Internal(e.to_string()))?,
    )?;
    Ok(path)
}
