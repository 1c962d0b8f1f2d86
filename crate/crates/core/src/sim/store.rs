use crate::name::{Component, Name};
use crate::packet::DataPacket;
use crate::tlv::TlvError;
use sha2::{Digest, Sha256};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// File name for a packet: lowercase hex SHA-256 of the encoded name.
pub fn file_name(name: &Name) -> String {
    format!("{}.tlv", hex::encode(Sha256::digest(name.to_tlv())))
}

/// Every `*.tlv` file under `dir` with its decode result, in file-name order.
pub fn load_dir(dir: &Path) -> io::Result<Vec<(PathBuf, Result<DataPacket, TlvError>)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tlv"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p)?;
            Ok((p, DataPacket::decode(&bytes)))
        })
        .collect()
}

fn typed(c: &Component) -> Option<(&[u8], u64)> {
    let b = c.as_bytes();
    let eq = b.iter().position(|&x| x == b'=')?;
    let digits = &b[eq + 1..];
    if digits.is_empty() || !digits.iter().all(u8::is_ascii_digit) {
        return None;
    }
    Some((&b[..eq], std::str::from_utf8(digits).ok()?.parse().ok()?))
}

/// Orders names so that `seq=10` sorts after `seq=9`.
pub fn version_cmp(a: &Name, b: &Name) -> Ordering {
    for (x, y) in a.components().iter().zip(b.components()) {
        let o = match (typed(x), typed(y)) {
            (Some((mx, nx)), Some((my, ny))) if mx == my => nx.cmp(&ny),
            _ => x.as_bytes().cmp(y.as_bytes()),
        };
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Insert-only map from name to validated Data, optionally mirrored to a
/// directory as one file per packet.
#[derive(Debug, Clone, Default)]
pub struct PacketStore {
    dir: Option<PathBuf>,
    packets: BTreeMap<Name, DataPacket>,
}

impl PacketStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a directory-backed store and loads it.
    /// Fails on any file that does not decode.
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut packets = BTreeMap::new();
        for (path, res) in load_dir(&dir)? {
            let p = res.map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            packets.insert(p.name.clone(), p);
        }
        Ok(Self { dir: Some(dir), packets })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Returns false if a packet with this name is already held.
    pub fn insert(&mut self, p: &DataPacket) -> io::Result<bool> {
        if self.packets.contains_key(&p.name) {
            return Ok(false);
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(file_name(&p.name));
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, p.encode())?;
            fs::rename(&tmp, &path)?;
        }
        self.packets.insert(p.name.clone(), p.clone());
        Ok(true)
    }

    pub fn get(&self, name: &Name) -> Option<&DataPacket> {
        self.packets.get(name)
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.packets.contains_key(name)
    }

    /// Exact match, or with `can_be_prefix` the latest packet under `name`.
    pub fn lookup(&self, name: &Name, can_be_prefix: bool) -> Option<&DataPacket> {
        if let Some(p) = self.packets.get(name) {
            return Some(p);
        }
        if !can_be_prefix {
            return None;
        }
        self.packets
            .range(name.clone()..)
            .take_while(|(n, _)| name.is_prefix_of(n))
            .max_by(|a, b| version_cmp(a.0, b.0))
            .map(|(_, p)| p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataPacket> {
        self.packets.values()
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{ContentType, Validity};

    fn pkt(n: &str) -> DataPacket {
        DataPacket::unsigned(Name::parse(n).unwrap(), ContentType::Blob, n.as_bytes().to_vec(), Validity::new(1, 2).unwrap())
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = PacketStore::open(dir.path()).unwrap();
        assert!(s.insert(&pkt("w/a/DATA/seq=1")).unwrap());
        assert!(!s.insert(&pkt("w/a/DATA/seq=1")).unwrap());
        s.insert(&pkt("w/a/DATA/seq=2")).unwrap();
        let again = PacketStore::open(dir.path()).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(again.get(&Name::parse("w/a/DATA/seq=2").unwrap()), Some(&pkt("w/a/DATA/seq=2")));
        let f = file_name(&Name::parse("w/a/DATA/seq=1").unwrap());
        assert_eq!(f.len(), 64 + 4);
        assert!(dir.path().join(&f).exists());
    }

    #[test]
    fn prefix_lookup_takes_latest() {
        let mut s = PacketStore::in_memory();
        for n in ["w/a/DATA/seq=2", "w/a/DATA/seq=10", "w/a/DATA/seq=9", "w/b/DATA/seq=50"] {
            s.insert(&pkt(n)).unwrap();
        }
        let q = Name::parse("w/a/DATA").unwrap();
        assert_eq!(s.lookup(&q, true).unwrap().name.to_uri(), "w/a/DATA/seq=10");
        assert!(s.lookup(&q, false).is_none());
        assert!(s.lookup(&Name::parse("w/c").unwrap(), true).is_none());
        assert_eq!(
            s.lookup(&Name::parse("w/a/DATA/seq=9").unwrap(), false).unwrap().name.to_uri(),
            "w/a/DATA/seq=9"
        );
    }
}
