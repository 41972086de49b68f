use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rtdlab::cnf::{parse_dimacs, Formula};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 1.
    Usage(String),
    /// Missing or malformed inputs, failed computations; exit code 2.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

pub fn data_err(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    let name = path.file_name().ok_or_else(|| data_err(format!("bad path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    res.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        data_err(format!("writing {}: {e}", path.display()))
    })
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc).map_err(data_err)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| data_err(format!("missing input {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(data_err(format!(
                "{}: schema version {v}, expected {SCHEMA_VERSION}",
                path.display()
            )))
        }
        None => return Err(data_err(format!("{}: no schema_version", path.display()))),
    }
    serde_json::from_value(value).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    /// Position in the generated corpus; per-instance seeds derive from it.
    pub index: u64,
    pub num_vars: u32,
    pub num_clauses: usize,
    pub ratio: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub stage: String,
    pub provenance: serde_json::Value,
    pub instances: Vec<InstanceEntry>,
    /// Instances dropped by `filter`, with their verdicts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<InstanceEntry>,
}

impl InstanceEntry {
    pub fn load(&self, base: &Path) -> Result<Formula, CliError> {
        let p = base.join(&self.path);
        let text = fs::read_to_string(&p)
            .map_err(|e| data_err(format!("missing instance {}: {e}", p.display())))?;
        let f = parse_dimacs(&text).map_err(|e| data_err(format!("{}: {e}", p.display())))?;
        let mut meta = f.meta.clone();
        meta.id = Some(self.id.clone());
        Ok(f.with_meta(meta))
    }
}

/// Output layout below `--out`.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf) -> Self {
        Layout { root }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn filtered(&self) -> PathBuf {
        self.root.join("filter.json")
    }

    /// The filtered manifest when present, otherwise the generated one.
    pub fn default_manifest(&self) -> PathBuf {
        let f = self.filtered();
        if f.exists() {
            f
        } else {
            self.manifest()
        }
    }

    pub fn instance(&self, id: &str) -> String {
        format!("instances/{id}.cnf")
    }

    pub fn stage_file(&self, stage: &str, id: &str) -> PathBuf {
        self.root.join(stage).join(format!("{id}.json"))
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize)]
    struct Doc {
        schema_version: u32,
        x: u32,
    }

    #[test]
    fn schema_mismatch_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_json(&p, &Doc { schema_version: 2, x: 1 }).unwrap();
        let e = read_json::<Doc>(&p).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("schema version 2"));
        write_json(&p, &Doc { schema_version: 1, x: 4 }).unwrap();
        assert_eq!(read_json::<Doc>(&p).unwrap().x, 4);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
