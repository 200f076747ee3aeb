use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Machine-readable record of one run. Holds no timestamps so that reruns
/// with the same inputs write the same bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = std::fs::File::open(path).map_err(|e| CliError::from_io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::from_io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Collects the inputs and outputs of a run and writes the manifest.
pub struct Run<'a> {
    command: &'a str,
    config: &'a RunConfig,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig) -> Self {
        Self {
            command,
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Registers an input, failing with the missing-input code if it does
    /// not exist.
    pub fn input(&mut self, path: impl Into<PathBuf>) -> Result<PathBuf, CliError> {
        let path = path.into();
        if !path.exists() {
            return Err(CliError::Missing(format!("input {} does not exist", path.display())));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    /// Path for an output relative to the output directory, with parent
    /// directories created.
    pub fn output(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf, CliError> {
        let path = self.config.out_dir.join(rel.as_ref());
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::from_io(dir, e))?;
        }
        self.outputs.push(rel.as_ref().to_path_buf());
        Ok(path)
    }

    pub fn write_json(&mut self, rel: impl AsRef<Path>, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let path = self.output(rel)?;
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::from_io(&path, e))?;
        Ok(path)
    }

    pub fn write_text(&mut self, rel: impl AsRef<Path>, text: &str) -> Result<PathBuf, CliError> {
        let path = self.output(rel)?;
        std::fs::write(&path, text).map_err(|e| CliError::from_io(&path, e))?;
        Ok(path)
    }

    /// Hashes everything and writes `manifests/<command>.json`.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let hash_all = |paths: &[PathBuf], base: Option<&Path>| -> Result<Vec<FileHash>, CliError> {
            let mut out = Vec::new();
            for p in paths {
                let full = base.map_or_else(|| p.clone(), |b| b.join(p));
                let mut files = Vec::new();
                collect_files(&full, &mut files).map_err(|e| CliError::from_io(&full, e))?;
                for f in files {
                    let sha256 = sha256_file(&f)?;
                    let shown = match base {
                        Some(b) => f.strip_prefix(b).unwrap_or(&f).to_path_buf(),
                        None => f,
                    };
                    out.push(FileHash { path: shown, sha256 });
                }
            }
            out.sort_by(|a, b| a.path.cmp(&b.path));
            out.dedup();
            Ok(out)
        };
        let manifest = RunManifest {
            tool: "saegraph".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            config: self.config.clone(),
            seeds: self.seeds,
            inputs: hash_all(&self.inputs, None)?,
            outputs: hash_all(&self.outputs, Some(&self.config.out_dir))?,
        };
        let path = self
            .config
            .out_dir
            .join("manifests")
            .join(format!("{}.json", self.command));
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| CliError::from_io(&path, e))?;
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::from_io(&path, e))?;
        Ok(path)
    }
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            collect_files(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}
