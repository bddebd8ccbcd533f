//! `manifest.json`: one per output directory, written last.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{read_input, CliError, CliResult};
use vmfd::config::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Derived from kind, config hash and input hashes only.
    pub manifest_id: String,
    pub kind: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub duration_secs: f64,
}

pub fn version_string() -> String {
    format!("vmfd-v{}", env!("CARGO_PKG_VERSION"))
}

pub fn manifest_id(kind: &str, config_hash: &str, inputs: &[FileEntry]) -> String {
    let mut s = format!("{kind}\n{config_hash}\n");
    for input in inputs {
        s.push_str(&input.sha256);
        s.push('\n');
    }
    sha256_hex(s.as_bytes())
}

impl Manifest {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = read_input(&path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Core(vmfd::Error::Format(format!("{}: {e}", path.display()))))
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        vmfd::scene_io::write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(())
    }

    pub fn outputs_with_role<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a FileEntry> {
        self.outputs
            .iter()
            .filter(move |e| e.role.as_deref() == Some(role))
    }
}

/// Refuses to reuse a directory that already holds a manifest unless
/// `force` is set; with `force`, the old manifest and its listed outputs are
/// removed first so a failed rerun cannot look complete.
pub fn claim_output_dir(dir: &Path, new_id: &str, force: bool) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(());
    }
    let old = Manifest::load(dir).ok();
    if !force {
        let msg = match &old {
            Some(m) if m.manifest_id == new_id => format!(
                "{} already holds this output (manifest {}); pass --force to overwrite",
                dir.display(),
                &new_id[..12]
            ),
            _ => format!(
                "{} already holds a different manifest; pass --force to overwrite",
                dir.display()
            ),
        };
        return Err(CliError::Exists(msg));
    }
    std::fs::remove_file(&path)?;
    if let Some(m) = old {
        // only plain file names inside `dir` are ever removed
        for out in m.outputs.iter().filter(|o| is_plain_name(&o.path)) {
            let p = dir.join(&out.path);
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
    }
    Ok(())
}

pub fn is_plain_name(name: &str) -> bool {
    let mut parts = Path::new(name).components();
    matches!(
        (parts.next(), parts.next()),
        (Some(std::path::Component::Normal(_)), None)
    )
}

pub fn file_entry(dir: &Path, name: &str, role: Option<&str>) -> CliResult<FileEntry> {
    let bytes = std::fs::read(dir.join(name))?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_hex(&bytes),
        role: role.map(str::to_string),
    })
}
