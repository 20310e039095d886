//! Precomputed per-tile embedding vectors in a single `.hfp` file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "HFPACK01"
//! mlen       u32       manifest length in bytes
//! manifest   mlen      UTF-8 JSON (see `Manifest`)
//! padding    0..7      zero bytes up to an 8-byte boundary
//! count      u64       number of records
//! index      count × 24 bytes: level u32, col u32, row u32, reserved u32, offset u64
//! blob       count × dim × 4 bytes of f32
//! ```
//!
//! Index entries are sorted by `(level, row, col)`; `offset` is the byte
//! offset of the record inside the blob.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyramid::TileAddress;

pub const MAGIC: &[u8; 8] = b"HFPACK01";
pub const DEFAULT_DIM: usize = 512;
const ENTRY_BYTES: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub slide_hash: String,
    pub dim: usize,
    pub levels: Vec<u32>,
    pub producer: String,
    pub record_count: u64,
}

/// Result of a lookup; unknown tiles produce a zero vector with `missing = true`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLookup {
    pub vector: Vec<f32>,
    pub missing: bool,
}

#[derive(Debug, Clone)]
pub struct FeaturePack {
    manifest: Manifest,
    index: Vec<(TileAddress, u64)>,
    blob: Vec<u8>,
}

fn sort_key(a: &TileAddress) -> (u32, u32, u32) {
    (a.level, a.row, a.col)
}

fn pad8(len: usize) -> usize {
    (8 - len % 8) % 8
}

impl FeaturePack {
    /// Assemble a pack in memory from `(address, vector)` records.
    pub fn build<I>(records: I, dim: usize, slide_hash: &str, producer: &str) -> Result<Self>
    where
        I: IntoIterator<Item = (TileAddress, Vec<f32>)>,
    {
        let mut records: Vec<(TileAddress, Vec<f32>)> = records.into_iter().collect();
        for (addr, v) in &records {
            if v.len() != dim {
                return Err(Error::format(format!(
                    "record {addr} has {} values, expected {dim}",
                    v.len()
                )));
            }
        }
        records.sort_by_key(|(a, _)| sort_key(a));
        if let Some(w) = records.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::format(format!("duplicate record for {}", w[0].0)));
        }
        let levels: BTreeSet<u32> = records.iter().map(|(a, _)| a.level).collect();
        let mut blob = Vec::with_capacity(records.len() * dim * 4);
        let mut index = Vec::with_capacity(records.len());
        for (addr, v) in records {
            index.push((addr, blob.len() as u64));
            for x in v {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(Self {
            manifest: Manifest {
                format_version: 1,
                slide_hash: slide_hash.to_string(),
                dim,
                levels: levels.into_iter().collect(),
                producer: producer.to_string(),
                record_count: index.len() as u64,
            },
            index,
            blob,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + manifest.len() + self.index.len() * ENTRY_BYTES + self.blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.resize(out.len() + pad8(out.len()), 0);
        out.extend_from_slice(&(self.index.len() as u64).to_le_bytes());
        for (addr, offset) in &self.index {
            for v in [addr.level, addr.col, addr.row, 0] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
        }
        out.extend_from_slice(&self.blob);
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io_at(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::format("feature pack is truncated");
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::format("not a feature pack (bad magic)"));
        }
        let mlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mend = 12 + mlen;
        let manifest: Manifest = serde_json::from_slice(bytes.get(12..mend).ok_or_else(truncated)?)
            .map_err(|e| Error::format(format!("feature pack manifest: {e}")))?;
        if manifest.format_version != 1 {
            return Err(Error::format(format!(
                "unsupported feature pack version {}",
                manifest.format_version
            )));
        }
        let mut pos = mend + pad8(mend);
        let count = u64::from_le_bytes(bytes.get(pos..pos + 8).ok_or_else(truncated)?.try_into().unwrap()) as usize;
        pos += 8;
        if count as u64 != manifest.record_count {
            return Err(Error::format("record count disagrees with manifest"));
        }
        let index_bytes = bytes
            .get(pos..pos + count.checked_mul(ENTRY_BYTES).ok_or_else(truncated)?)
            .ok_or_else(truncated)?;
        let u32_at = |b: &[u8], i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let record_bytes = (manifest.dim * 4) as u64;
        let mut index = Vec::with_capacity(count);
        for (i, e) in index_bytes.chunks_exact(ENTRY_BYTES).enumerate() {
            let addr = TileAddress::new(u32_at(e, 0), u32_at(e, 4), u32_at(e, 8));
            let offset = u64::from_le_bytes(e[16..24].try_into().unwrap());
            if offset != i as u64 * record_bytes {
                return Err(Error::format(format!("record {addr} has offset {offset} out of sequence")));
            }
            if let Some((prev, _)) = index.last() {
                if sort_key(prev) >= sort_key(&addr) {
                    return Err(Error::format("index is not strictly sorted"));
                }
            }
            index.push((addr, offset));
        }
        pos += count * ENTRY_BYTES;
        let blob = bytes.get(pos..).ok_or_else(truncated)?;
        if blob.len() as u64 != count as u64 * record_bytes {
            return Err(Error::format("blob length does not match index"));
        }
        Ok(Self {
            manifest,
            index,
            blob: blob.to_vec(),
        })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn get(&self, addr: TileAddress) -> Option<Vec<f32>> {
        let i = self
            .index
            .binary_search_by_key(&sort_key(&addr), |(a, _)| sort_key(a))
            .ok()?;
        let start = self.index[i].1 as usize;
        let bytes = &self.blob[start..start + self.dim() * 4];
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }

    pub fn lookup(&self, addr: TileAddress) -> FeatureLookup {
        match self.get(addr) {
            Some(vector) => FeatureLookup {
                vector,
                missing: false,
            },
            None => FeatureLookup {
                vector: vec![0.0; self.dim()],
                missing: true,
            },
        }
    }

    pub fn addresses(&self) -> impl Iterator<Item = TileAddress> + '_ {
        self.index.iter().map(|(a, _)| *a)
    }
}

/// Build a pack and write it to `path`.
pub fn build_pack<I>(
    path: impl AsRef<Path>,
    records: I,
    dim: usize,
    slide_hash: &str,
    producer: &str,
) -> Result<FeaturePack>
where
    I: IntoIterator<Item = (TileAddress, Vec<f32>)>,
{
    let pack = FeaturePack::build(records, dim, slide_hash, producer)?;
    pack.write(path)?;
    Ok(pack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(l: u32, c: u32, r: u32) -> TileAddress {
        TileAddress::new(l, c, r)
    }

    #[test]
    fn small_pack_layout() {
        let recs = vec![
            (addr(2, 1, 0), vec![1.0, 2.0, 3.0, 4.0]),
            (addr(1, 0, 0), vec![0.5; 4]),
            (addr(2, 0, 1), vec![-1.0; 4]),
        ];
        let pack = FeaturePack::build(recs, 4, "abc", "test").unwrap();
        assert_eq!(pack.len(), 3);
        assert_eq!(pack.blob.len(), 48);
        let order: Vec<_> = pack.addresses().collect();
        assert_eq!(order, vec![addr(1, 0, 0), addr(2, 1, 0), addr(2, 0, 1)]);
        assert_eq!(pack.manifest().levels, vec![1, 2]);
        let again = FeaturePack::from_bytes(&pack.to_bytes()).unwrap();
        assert_eq!(again.get(addr(2, 1, 0)).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_pack_is_valid() {
        let pack = FeaturePack::build(Vec::new(), 8, "h", "none").unwrap();
        let again = FeaturePack::from_bytes(&pack.to_bytes()).unwrap();
        assert!(again.is_empty());
        let l = again.lookup(addr(0, 0, 0));
        assert!(l.missing);
        assert_eq!(l.vector, vec![0.0; 8]);
    }

    #[test]
    fn rejects_bad_records() {
        let err = FeaturePack::build(vec![(addr(0, 0, 0), vec![1.0])], 2, "", "").unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let dup = vec![(addr(0, 0, 0), vec![1.0]), (addr(0, 0, 0), vec![2.0])];
        assert!(matches!(FeaturePack::build(dup, 1, "", ""), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_corrupt_bytes() {
        let pack = FeaturePack::build(vec![(addr(0, 0, 0), vec![1.0, 2.0])], 2, "h", "p").unwrap();
        let bytes = pack.to_bytes();
        assert!(FeaturePack::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FeaturePack::from_bytes(&bad).is_err());
        assert!(FeaturePack::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn bit_patterns_survive() {
        let odd = vec![f32::MIN_POSITIVE / 2.0, -0.0, f32::MAX, 1.0e-40, f32::from_bits(0x7fc0_0001)];
        let pack = FeaturePack::build(vec![(addr(3, 2, 1), odd.clone())], 5, "h", "p").unwrap();
        let back = FeaturePack::from_bytes(&pack.to_bytes()).unwrap().lookup(addr(3, 2, 1));
        assert!(!back.missing);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.vector), bits(&odd));
    }
}
