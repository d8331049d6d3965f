use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TRPC_OUT_DIR";

/// Explicit path, else `$TRPC_OUT_DIR`, else the working directory.
pub fn output_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<stem>.csv` and the `<stem>.json` sidecar.
pub fn write_outputs(dir: &Path, stem: &str, csv: &str, json: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, csv)?;
    fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}
