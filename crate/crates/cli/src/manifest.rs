use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::commands::Inputs;
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "anchor-emo";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to regenerate an artifact byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub params: Command,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(cmd: &Command, inputs: &Inputs) -> Self {
        let seed = match cmd {
            Command::Emo(a) => Some(a.seed),
            Command::Stats(a) => Some(a.seed),
            Command::Match(a) => Some(a.seed),
            _ => None,
        };
        RunManifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: cmd.name().into(),
            seed,
            params: cmd.clone(),
            inputs: inputs
                .iter()
                .map(|(path, bytes)| InputDigest {
                    path: path.clone(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let m: RunManifest =
            serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("bad manifest: {e}")))?;
        if m.tool != TOOL {
            return Err(CliError::Invalid(format!("manifest was written by {:?}, not {TOOL}", m.tool)));
        }
        if m.version != env!("CARGO_PKG_VERSION") {
            return Err(CliError::Invalid(format!(
                "manifest was written by version {}, this is {}",
                m.version,
                env!("CARGO_PKG_VERSION")
            )));
        }
        if m.params.name() != m.subcommand {
            return Err(CliError::Invalid("manifest subcommand does not match its params".into()));
        }
        Ok(m)
    }

    /// Loads the recorded inputs, failing if any changed since the run.
    pub fn load_inputs(&self) -> CliResult<Inputs> {
        let paths: Vec<PathBuf> = self.inputs.iter().map(|d| d.path.clone()).collect();
        let inputs = Inputs::load(&paths)?;
        for ((path, bytes), want) in inputs.iter().zip(&self.inputs) {
            debug_assert_eq!(path, &want.path);
            let got = sha256_hex(bytes);
            if got != want.sha256 {
                return Err(CliError::Mismatch(format!(
                    "{}: content changed since the manifest was written (sha256 {got}, expected {})",
                    path.display(),
                    want.sha256
                )));
            }
        }
        Ok(inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
