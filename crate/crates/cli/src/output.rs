use crate::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct ArtifactEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    dictionary_version: &'static str,
    status: &'a str,
    artifacts: &'a [ArtifactEntry],
}

/// Writes artifacts into one directory and finishes with `manifest.json`.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    config_hash: String,
    artifacts: Vec<ArtifactEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Outputs {
    pub fn new(dir: &Path, command: &str, config_hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), command: command.into(), config_hash: config_hash.into(), artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(ArtifactEntry { name: name.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// JSON artifact wrapped as {config_hash, result}.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config_hash: &'a str,
            result: &'a T,
        }
        let hash = self.config_hash.clone();
        let mut text = serde_json::to_string_pretty(&Wrapped { config_hash: &hash, result: value })
            .map_err(|e| CliError::Validation(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV artifact whose first line is `# config_hash=<hash>`.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = format!("# config_hash={}\n{body}", self.config_hash);
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self, error: Option<&CliError>) -> Result<(), CliError> {
        if let Some(e) = error {
            let report = e.report();
            self.json("error.json", &report)?;
        }
        let status = if error.is_some() { "error" } else { "ok" };
        let manifest = Manifest {
            tool: "torus-elliptic",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config_hash: &self.config_hash,
            dictionary_version: torus_elliptic::resolvent::estimates::DICTIONARY_VERSION,
            status,
            artifacts: &self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
    }
}
