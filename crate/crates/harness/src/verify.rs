//! Offline re-validation of a persisted packet store.

use crate::runner::{WorkspaceMeta, WORKSPACE_META};
use std::path::{Path, PathBuf};
use thiserror::Error;
use wksp_core::security::{compile_schema, workspace_rules, CertStore, Certificate, Validator};
use wksp_core::sim::{file_name, load_dir};
use wksp_core::Name;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("i/o on {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}: missing or unreadable {WORKSPACE_META}: {1}")]
    Meta(PathBuf, String),
}

/// One packet that failed re-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadPacket {
    pub file: PathBuf,
    pub name: Option<String>,
    pub reason: String,
}

impl std::fmt::Display for BadPacket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.name {
            Some(n) => write!(f, "{}: {}: {}", self.file.display(), n, self.reason),
            None => write!(f, "{}: {}", self.file.display(), self.reason),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub stores: usize,
    pub checked: usize,
    pub bad: Vec<BadPacket>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.bad.is_empty()
    }
}

/// Verifies `dir`, which is either one peer's store or a directory of them.
pub fn verify_store(dir: &Path) -> Result<VerifyReport, VerifyError> {
    let mut report = VerifyReport::default();
    if dir.join(WORKSPACE_META).exists() {
        verify_one(dir, &mut report)?;
    } else {
        let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| VerifyError::Io(dir.into(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(WORKSPACE_META).exists())
            .collect();
        subs.sort();
        if subs.is_empty() {
            return Err(VerifyError::Meta(dir.into(), "no peer stores found".into()));
        }
        for s in subs {
            verify_one(&s, &mut report)?;
        }
    }
    Ok(report)
}

fn verify_one(dir: &Path, report: &mut VerifyReport) -> Result<(), VerifyError> {
    let meta_path = dir.join(WORKSPACE_META);
    let meta: WorkspaceMeta = std::fs::read(&meta_path)
        .map_err(|e| e.to_string())
        .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
        .map_err(|e| VerifyError::Meta(dir.into(), e))?;
    let bad_meta = |e: String| VerifyError::Meta(dir.into(), e);
    let ws = Name::parse(&meta.workspace).map_err(|e| bad_meta(e.to_string()))?;
    let anchor = hex::decode(&meta.root_cert)
        .map_err(|e| e.to_string())
        .and_then(|b| Certificate::decode(&b).map_err(|e| e.to_string()))
        .map_err(bad_meta)?;
    let rules = workspace_rules(&ws, anchor.name(), meta.model, &meta.initiator).map_err(|e| bad_meta(e.to_string()))?;
    let validator = Validator::new(compile_schema(rules).map_err(|e| bad_meta(e.to_string()))?);
    report.stores += 1;

    let entries = load_dir(dir).map_err(|e| VerifyError::Io(dir.into(), e))?;
    let mut certs = CertStore::new();
    certs.add_anchor(anchor.clone());
    let mut packets = Vec::new();
    for (file, decoded) in entries {
        report.checked += 1;
        let p = match decoded {
            Ok(p) => p,
            Err(e) => {
                report.bad.push(BadPacket { file, name: None, reason: format!("undecodable: {e}") });
                continue;
            }
        };
        let uri = p.name.to_uri();
        let expect = file_name(&p.name);
        if file.file_name().and_then(|f| f.to_str()) != Some(expect.as_str()) {
            report.bad.push(BadPacket { file, name: Some(uri), reason: format!("stored under the wrong file name, expected {expect}") });
            continue;
        }
        if p.name == *anchor.name() {
            if p != *anchor.packet() {
                report.bad.push(BadPacket { file, name: Some(uri), reason: "differs from the configured root certificate".into() });
            }
            continue;
        }
        if let Ok(c) = Certificate::from_packet(p.clone()) {
            certs.insert(c);
        }
        packets.push((file, p));
    }
    // Everything, certificates included, must chain to the root under the
    // workspace rules. Signing time decides validity, so any `now` works.
    for (file, p) in packets {
        if let Err(e) = validator.validate(&mut certs, &p, u64::MAX) {
            report.bad.push(BadPacket { file, name: Some(p.name.to_uri()), reason: e.to_string() });
        }
    }
    Ok(())
}
