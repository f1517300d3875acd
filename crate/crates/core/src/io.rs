//! Run archives: config copy, CSV tables, snapshot binaries, a JSON summary
//! of the contracts, and a manifest with a SHA-256 hash of every artifact.
//!
//! Layout of an archive directory:
//!
//! ```text
//! config.toml
//! manifest.json
//! summary.json
//! tables/<name>.csv
//! snapshots/<name>.bin
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{Contract, RunConfig, StudyOutput, Table};
use crate::grid::{GridField, GridSpec};

const SNAPSHOT_MAGIC: &[u8; 8] = b"PLGRID01";

/// Writes `field` as a 48-byte header followed by the values as
/// little-endian `f64` in row-major order. Header: magic, dim (u64),
/// points per axis (u64), half-length, time, value count (u64).
pub fn write_snapshot(w: &mut impl Write, field: &GridField, time: f64) -> Result<()> {
    let spec = field.spec();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(spec.dim() as u64).to_le_bytes())?;
    w.write_all(&(spec.points() as u64).to_le_bytes())?;
    w.write_all(&spec.half_length().to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    w.write_all(&(field.values().len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(r: &mut impl Read) -> Result<(GridField, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::InvalidArgument("not a grid snapshot".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let dim = u64::from_le_bytes(next(r)?) as usize;
    let points = u64::from_le_bytes(next(r)?) as usize;
    let half_length = f64::from_le_bytes(next(r)?);
    let time = f64::from_le_bytes(next(r)?);
    let count = u64::from_le_bytes(next(r)?) as usize;
    let spec = GridSpec::new(dim, half_length, points)?;
    if count != spec.len() {
        return Err(Error::InvalidArgument(format!(
            "snapshot holds {count} values for {} nodes",
            spec.len()
        )));
    }
    let mut bytes = vec![0u8; 8 * count];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((GridField::from_values(spec, values)?, time))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRole {
    Config,
    RawTable,
    DerivedTable,
    Snapshot,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub role: ArtifactRole,
    /// Study a table belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub command: String,
    pub studies: Vec<String>,
    pub base_seed: u64,
    /// How per-replica and per-particle streams are derived from the seed.
    pub seed_scheme: String,
    pub threads: usize,
    pub created_unix: u64,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub passed: bool,
    pub contracts: Vec<Contract>,
}

pub const SEED_SCHEME: &str = "replica key = splitmix-derive(base_seed, [study_tag, N, replica]); \
root particle k key = derive(replica_key, [k]); initial position stream = derive(replica_key, [0x1417, k]); \
child i key = derive(parent_key, [i]); counter 0 = branching threshold, 1 + 3*step + axis = Brownian increment";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Single-writer builder for an archive directory.
pub struct ArchiveWriter {
    root: PathBuf,
    command: String,
    studies: Vec<String>,
    artifacts: Vec<Artifact>,
    contracts: Vec<Contract>,
}

impl ArchiveWriter {
    /// Creates the directory tree. Existing files with the same names are
    /// overwritten.
    pub fn create(root: impl AsRef<Path>, command: &str) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("tables"))?;
        fs::create_dir_all(root.join("snapshots"))?;
        Ok(Self {
            root,
            command: command.into(),
            studies: Vec::new(),
            artifacts: Vec::new(),
            contracts: Vec::new(),
        })
    }

    /// Continues an existing archive: keeps its artifacts so that
    /// re-analysis replaces only derived tables and the summary.
    pub fn reopen(archive: &Archive, command: &str) -> Self {
        let artifacts = archive
            .manifest
            .artifacts
            .iter()
            .filter(|a| a.role != ArtifactRole::Summary)
            .cloned()
            .collect();
        Self {
            root: archive.root.clone(),
            command: command.into(),
            studies: Vec::new(),
            artifacts,
            contracts: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn put(
        &mut self,
        rel: &str,
        bytes: &[u8],
        role: ArtifactRole,
        study: Option<&str>,
    ) -> Result<()> {
        fs::write(self.root.join(rel), bytes)?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            path: rel.into(),
            role,
            study: study.map(String::from),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_config(&mut self, cfg: &RunConfig) -> Result<()> {
        self.put(
            "config.toml",
            cfg.to_toml().as_bytes(),
            ArtifactRole::Config,
            None,
        )
    }

    pub fn write_table(&mut self, table: &Table, role: ArtifactRole) -> Result<()> {
        let rel = format!("tables/{}.csv", table.name);
        self.put(&rel, table.to_csv()?.as_bytes(), role, Some(&table.study))
    }

    pub fn write_snapshot(&mut self, name: &str, field: &GridField, time: f64) -> Result<()> {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, field, time)?;
        self.put(
            &format!("snapshots/{name}.bin"),
            &buf,
            ArtifactRole::Snapshot,
            None,
        )
    }

    /// Writes every table of a study and records its contracts.
    pub fn add_study(&mut self, name: &str, out: &StudyOutput) -> Result<()> {
        for t in &out.raw {
            self.write_table(t, ArtifactRole::RawTable)?;
        }
        for t in &out.derived {
            self.write_table(t, ArtifactRole::DerivedTable)?;
        }
        if !self.studies.iter().any(|s| s == name) {
            self.studies.push(name.into());
        }
        self.contracts.extend(out.contracts.iter().cloned());
        Ok(())
    }

    /// Writes `summary.json` and `manifest.json`; returns the summary.
    pub fn finish(mut self, cfg: &RunConfig, threads: usize) -> Result<Summary> {
        let summary = Summary {
            command: self.command.clone(),
            passed: self.contracts.iter().all(|c| c.passed),
            contracts: self.contracts.clone(),
        };
        let text = serde_json::to_string_pretty(&summary)?;
        self.put("summary.json", text.as_bytes(), ArtifactRole::Summary, None)?;
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            studies: self.studies.clone(),
            base_seed: cfg.seed,
            seed_scheme: SEED_SCHEME.into(),
            threads,
            created_unix,
            artifacts: self.artifacts.clone(),
        };
        fs::write(
            self.root.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(summary)
    }
}

/// A finished archive read back from disk.
#[derive(Debug, Clone)]
pub struct Archive {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub config: RunConfig,
}

impl Archive {
    /// Reads the manifest and config and checks every listed hash.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(root.join("manifest.json"))?)?;
        for a in &manifest.artifacts {
            let bytes = fs::read(root.join(&a.path))?;
            if sha256_hex(&bytes) != a.sha256 {
                return Err(Error::Precondition(format!(
                    "{} does not match its manifest hash",
                    a.path
                )));
            }
        }
        let text = fs::read_to_string(root.join("config.toml"))?;
        let config = RunConfig::overlay(&RunConfig::desk(), &text)?;
        Ok(Self {
            root,
            manifest,
            config,
        })
    }

    /// Raw tables of one study.
    pub fn raw_tables(&self, study: &str) -> Result<Vec<Table>> {
        self.manifest
            .artifacts
            .iter()
            .filter(|a| a.role == ArtifactRole::RawTable && a.study.as_deref() == Some(study))
            .map(|a| {
                let name = Path::new(&a.path)
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                Table::from_csv(name, &fs::read_to_string(self.root.join(&a.path))?)
            })
            .collect()
    }

    pub fn read_bytes(&self, rel: &str) -> Result<Vec<u8>> {
        Ok(fs::read(self.root.join(rel))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let spec = GridSpec::new(2, 3.0, 16).unwrap();
        let f = GridField::from_fn(spec, |x| x[0] * 1.5 - x[1].sin());
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, 0.25).unwrap();
        assert_eq!(buf.len(), 48 + 8 * 256);
        let (g, t) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(g, f);
        assert!(read_snapshot(&mut &b"garbage-header-bytes"[..]).is_err());
    }

    #[test]
    fn archive_round_trip_and_hash_check() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            replicas: 3,
            ..RunConfig::desk()
        };
        let mut t = Table::new("demo", "demo_raw", &["n", "v"]);
        t.push(vec![1.0, 0.5]);
        let out = StudyOutput {
            raw: vec![t.clone()],
            derived: Vec::new(),
            contracts: vec![Contract::new("demo", "ok", true, "")],
        };
        let mut w = ArchiveWriter::create(dir.path(), "demo").unwrap();
        w.write_config(&cfg).unwrap();
        w.add_study("demo", &out).unwrap();
        let f = GridField::zeros(GridSpec::new(1, 1.0, 8).unwrap());
        w.write_snapshot("zero", &f, 0.0).unwrap();
        let summary = w.finish(&cfg, 1).unwrap();
        assert!(summary.passed);

        let a = Archive::open(dir.path()).unwrap();
        assert_eq!(a.config, cfg);
        assert_eq!(a.raw_tables("demo").unwrap(), vec![t]);
        assert_eq!(a.manifest.artifacts.len(), 4);

        fs::write(
            dir.path().join("tables/demo_raw.csv"),
            "study,n,v\ndemo,1,0.6\n",
        )
        .unwrap();
        assert!(matches!(
            Archive::open(dir.path()),
            Err(Error::Precondition(_))
        ));
    }
}
