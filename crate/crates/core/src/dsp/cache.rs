//! Binary feature cache: little-endian, one record per clip keyed by relative path.
//!
//! Layout: `b"SBFC"`, `u32` version, `u32` time steps, `u32` feature bins,
//! `u32` record count, then per record a `u32` key length, UTF-8 key, and
//! `t * f` `f32` values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::mfcc::FeatureMap;

pub const MAGIC: &[u8; 4] = b"SBFC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    time: usize,
    feature: usize,
    records: BTreeMap<String, Vec<f32>>,
}

impl FeatureCache {
    pub fn new(time: usize, feature: usize) -> Self {
        Self {
            time,
            feature,
            records: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.time, self.feature)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.records.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, map: &FeatureMap) -> Result<()> {
        let s = map.shape();
        if (s.t, s.f) != (self.time, self.feature) {
            return Err(Error::ShapeMismatch(format!(
                "cache holds ({}, {}) maps, got ({}, {})",
                self.time, self.feature, s.t, s.f
            )));
        }
        self.records.insert(key.into(), map.tensor().data().to_vec());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<FeatureMap> {
        let data = self.records.get(key)?.clone();
        let t = Tensor::from_vec((1, self.time, self.feature, 1), data).ok()?;
        FeatureMap::new(t).ok()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per = self.time * self.feature;
        let mut out = Vec::with_capacity(20 + self.records.len() * (per * 4 + 32));
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.time as u32, self.feature as u32, self.records.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (key, data) in &self.records {
            out.extend_from_slice(&(key.len() as u32).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("feature cache: bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let time = r.u32()? as usize;
        let feature = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut cache = Self::new(time, feature);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let key = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("feature cache: key is not UTF-8".into()))?
                .to_owned();
            let data = r
                .take(time * feature * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            cache.records.insert(key, data);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("feature cache: trailing bytes".into()));
        }
        Ok(cache)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }

    /// Writes to a sibling temp file then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(ctx(), e)
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("feature cache: truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: f32) -> FeatureMap {
        FeatureMap::new(Tensor::filled((1, 3, 2, 1), v).unwrap()).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.sbfc");
        let mut c = FeatureCache::new(3, 2);
        c.insert("yes/a_nohash_0.wav", &map(1.5)).unwrap();
        c.insert("no/b_nohash_1.wav", &map(-2.0)).unwrap();
        c.save(&path).unwrap();
        let back = FeatureCache::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.get("yes/a_nohash_0.wav").unwrap(), map(1.5));
        assert!(back.get("missing").is_none());
    }

    #[test]
    fn rejects_corruption() {
        let mut c = FeatureCache::new(3, 2);
        c.insert("k", &map(0.0)).unwrap();
        let bytes = c.to_bytes();
        assert!(FeatureCache::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FeatureCache::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(FeatureCache::from_bytes(&bad), Err(Error::Version { found: 9, .. })));
        assert!(c.insert("w", &FeatureMap::new(Tensor::zeros((1, 2, 2, 1)).unwrap()).unwrap()).is_err());
    }
}
