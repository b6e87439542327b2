//! Stage artifacts on disk. Every artifact `X` has a sidecar `X.meta.json`
//! holding the command that wrote it, the resolved config, the SHA-256 of
//! every input it was built from, and its own SHA-256. Loading an artifact
//! re-checks all of that against whatever else the command loaded.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sensorseg::artifact::sha256_hex;
use sensorseg::config::RunConfig;
use sensorseg::{Error, Result};
use serde_json::{json, Map, Value};

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::Config(format!("{}: file not found", path.display())),
        _ => Error::Io(e),
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn to_json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

struct Loaded {
    role: String,
    sha: String,
    /// recorded input hashes; empty for plain input files
    inputs: BTreeMap<String, String>,
}

/// Everything one command has read so far.
#[derive(Default)]
pub struct Inputs {
    items: Vec<Loaded>,
}

impl Inputs {
    /// A user-supplied file with no provenance of its own.
    pub fn file(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = read_file(path)?;
        self.items.push(Loaded {
            role: role.to_string(),
            sha: sha256_hex(&bytes),
            inputs: BTreeMap::new(),
        });
        Ok(bytes)
    }

    /// A file written by an earlier stage, checked against its sidecar and
    /// against every other input loaded so far.
    pub fn artifact(&mut self, role: &str, path: &Path) -> Result<(Vec<u8>, Value)> {
        let bytes = read_file(path)?;
        let mpath = meta_path(path);
        let meta: Value = match fs::read(&mpath) {
            Ok(b) => serde_json::from_slice(&b)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(Error::ModelMismatch(format!("{} has no provenance sidecar", path.display())))
            }
            Err(e) => return Err(e.into()),
        };
        let sha = sha256_hex(&bytes);
        if meta["sha256"].as_str() != Some(sha.as_str()) {
            return Err(Error::ModelMismatch(format!(
                "{} changed after it was written",
                path.display()
            )));
        }
        let inputs = meta["inputs"]
            .as_object()
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                    .collect()
            })
            .unwrap_or_default();
        self.items.push(Loaded {
            role: role.to_string(),
            sha,
            inputs,
        });
        self.check()?;
        Ok((bytes, meta))
    }

    /// Same role, same hash: an artifact's recorded inputs must agree with
    /// the files loaded under those roles and with other artifacts' records.
    fn check(&self) -> Result<()> {
        for a in &self.items {
            for (role, sha) in &a.inputs {
                for b in &self.items {
                    let other = if &b.role == role {
                        Some(&b.sha)
                    } else {
                        b.inputs.get(role)
                    };
                    if let Some(other) = other {
                        if other != sha {
                            return Err(Error::ModelMismatch(format!(
                                "{} was built from a different {role} than {}",
                                a.role, b.role
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn hashes(&self) -> Value {
        let m: Map<String, Value> = self
            .items
            .iter()
            .map(|l| (l.role.clone(), Value::String(l.sha.clone())))
            .collect();
        Value::Object(m)
    }
}

/// Writes `bytes` to `path` and its sidecar.
pub fn write_artifact(
    path: &Path,
    bytes: &[u8],
    command: &str,
    config: &RunConfig,
    inputs: &Inputs,
    details: Value,
) -> Result<()> {
    write_file(path, bytes)?;
    let meta = json!({
        "command": command,
        "config": config.echo(),
        "inputs": inputs.hashes(),
        "sha256": sha256_hex(bytes),
        "details": details,
    });
    write_file(&meta_path(path), to_json_text(&meta).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stale_inputs_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let names = dir.path().join("names.txt");
        let art = dir.path().join("a.bin");
        fs::write(&names, "AB\n").unwrap();
        let cfg = RunConfig::default();
        let mut inp = Inputs::default();
        inp.file("names", &names).unwrap();
        write_artifact(&art, b"xyz", "t", &cfg, &inp, Value::Null).unwrap();

        let mut ok = Inputs::default();
        ok.file("names", &names).unwrap();
        ok.artifact("a", &art).unwrap();

        fs::write(&names, "CD\n").unwrap();
        let mut stale = Inputs::default();
        stale.file("names", &names).unwrap();
        assert!(matches!(stale.artifact("a", &art), Err(Error::ModelMismatch(_))));

        fs::write(&art, b"tampered").unwrap();
        assert!(matches!(Inputs::default().artifact("a", &art), Err(Error::ModelMismatch(_))));
        assert!(matches!(
            Inputs::default().artifact("a", &dir.path().join("missing")),
            Err(Error::Config(_))
        ));
    }
}
