//! Run manifests: the resolved command plus digests of every input file.
//! No timestamps, so identical runs produce identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
    /// Input path → lowercase hex SHA-256.
    pub inputs: BTreeMap<String, String>,
}

pub fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write(command: &Command) -> Result<()> {
    let mut inputs = BTreeMap::new();
    for p in command.inputs() {
        inputs.insert(p.display().to_string(), digest(p)?);
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.clone(),
        inputs,
    };
    let path = command.manifest_path();
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// Reads a manifest and checks that every recorded input still has the
/// recorded digest.
pub fn load_and_verify(path: &Path) -> Result<(Command, RunManifest)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("{}: not a run manifest", path.display()))?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    for (input, recorded) in &manifest.inputs {
        let now = digest(Path::new(input))?;
        if &now != recorded {
            bail!("{input} changed since the manifest was written (sha256 {now}, recorded {recorded})");
        }
    }
    Ok((manifest.command.clone(), manifest))
}
