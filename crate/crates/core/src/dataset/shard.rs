//! Binary shard container.
//!
//! ```text
//! bytes 0..4   b"FCS1"
//! bytes 4..8   header length H, u32 little-endian
//! bytes 8..8+H UTF-8 JSON header
//! then         raw little-endian array payloads
//! ```
//!
//! The header is `{"arrays": [{"name", "shape", "dtype", "offset"}, ...]}`
//! where `offset` counts bytes from the first payload byte (`8 + H`).
//! Payloads are stored back to back in header order. Supported dtypes are
//! `<f4`, `<u1` and `<i4`.
//!
//! Dataset shards carry `inputs [N,C,P,P] <f4>`, `targets [N,P,P] <u1>`,
//! `valid [N,P,P] <u1>` and `meta [N,4] <i4>` (t_input, lead_steps, row0,
//! col0). Prediction shards carry `preds [N,P,P] <f4>` and `meta`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::store::write_atomic;

pub const MAGIC: &[u8; 4] = b"FCS1";

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

impl ArrayData {
    pub fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "<f4",
            ArrayData::U8(_) => "<u1",
            ArrayData::I32(_) => "<i4",
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::U8(v) => v.len(),
            ArrayData::I32(v) => v.len(),
        }
    }

    fn extend_bytes(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U8(v) => out.extend_from_slice(v),
            ArrayData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

fn dtype_size(dtype: &str) -> Option<usize> {
    match dtype {
        "<f4" | "<i4" => Some(4),
        "<u1" => Some(1),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

impl ArrayEntry {
    pub fn n_bytes(&self) -> u64 {
        self.shape.iter().product::<usize>() as u64 * dtype_size(&self.dtype).unwrap_or(0) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardHeader {
    pub arrays: Vec<ArrayEntry>,
}

impl ShardHeader {
    pub fn array(&self, name: &str) -> Option<&ArrayEntry> {
        self.arrays.iter().find(|a| a.name == name)
    }
}

/// A named collection of arrays stored in one shard file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Shard {
    arrays: Vec<(String, Vec<usize>, ArrayData)>,
}

impl Shard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: ArrayData) -> Result<()> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("array `{name}`: shape {shape:?} does not hold {} values", data.len())));
        }
        if self.arrays.iter().any(|a| a.0 == name) {
            return Err(Error::Shape(format!("duplicate array `{name}`")));
        }
        self.arrays.push((name.to_string(), shape, data));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &ArrayData)> {
        self.arrays.iter().find(|a| a.0 == name).map(|a| (a.1.as_slice(), &a.2))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|a| a.0.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut entries = Vec::new();
        for (name, shape, data) in &self.arrays {
            let entry = ArrayEntry { name: name.clone(), shape: shape.clone(), dtype: data.dtype().into(), offset };
            offset += entry.n_bytes();
            entries.push(entry);
        }
        let header = serde_json::to_vec(&ShardHeader { arrays: entries })?;
        let mut out = Vec::with_capacity(8 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, data) in &self.arrays {
            data.extend_bytes(&mut out);
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).io_context(|| format!("reading shard {}", path.display()))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (header, data_start) = parse_header(bytes, path)?;
        let mut shard = Shard::new();
        for e in &header.arrays {
            let start = data_start + e.offset as usize;
            let raw = &bytes[start..start + e.n_bytes() as usize];
            let data = match e.dtype.as_str() {
                "<f4" => {
                    ArrayData::F32(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
                }
                "<i4" => {
                    ArrayData::I32(raw.chunks_exact(4).map(|b| i32::from_le_bytes(b.try_into().unwrap())).collect())
                }
                _ => ArrayData::U8(raw.to_vec()),
            };
            shard.arrays.push((e.name.clone(), e.shape.clone(), data));
        }
        Ok(shard)
    }
}

fn format_err(path: &Path, offset: usize, detail: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), offset: offset as u64, detail: detail.into() }
}

/// Parses and checks the container structure: magic, header, dtypes,
/// back-to-back payload layout and exact file length. Returns the header and
/// the byte position of the payload section.
fn parse_header(bytes: &[u8], path: &Path) -> Result<(ShardHeader, usize)> {
    if bytes.len() < 8 {
        return Err(format_err(path, bytes.len(), "truncated before header length"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(path, 0, "bad magic, expected FCS1"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + hlen {
        return Err(format_err(path, 4, format!("header length {hlen} exceeds file size")));
    }
    let header: ShardHeader = serde_json::from_slice(&bytes[8..8 + hlen])
        .map_err(|e| format_err(path, 8 + e.column().saturating_sub(1), format!("malformed header: {e}")))?;
    let data_start = 8 + hlen;
    let mut expected = 0u64;
    for e in &header.arrays {
        if dtype_size(&e.dtype).is_none() {
            return Err(format_err(path, 8, format!("array `{}` has unsupported dtype {}", e.name, e.dtype)));
        }
        if e.offset != expected {
            return Err(format_err(
                path,
                data_start + expected as usize,
                format!("array `{}` declared at offset {}, expected {expected}", e.name, e.offset),
            ));
        }
        expected += e.n_bytes();
    }
    let total = data_start as u64 + expected;
    if bytes.len() as u64 != total {
        return Err(format_err(
            path,
            bytes.len().min(total as usize),
            format!("file has {} bytes, header implies {total}", bytes.len()),
        ));
    }
    Ok((header, data_start))
}

/// Which family of arrays a shard must carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShardKind {
    Dataset,
    Predictions,
}

/// Validates a shard file byte-for-byte against the format, including the
/// required arrays, dtypes and mutually consistent shapes.
pub fn validate_shard(path: &Path, kind: ShardKind) -> Result<ShardHeader> {
    let bytes = fs::read(path).io_context(|| format!("reading shard {}", path.display()))?;
    let (header, _) = parse_header(&bytes, path)?;
    let need = |name: &str, dtype: &str, rank: usize| -> Result<&ArrayEntry> {
        let e = header.array(name).ok_or_else(|| format_err(path, 8, format!("missing array `{name}`")))?;
        if e.dtype != dtype || e.shape.len() != rank {
            return Err(format_err(
                path,
                8,
                format!("array `{name}` must be rank-{rank} {dtype}, got {:?} {}", e.shape, e.dtype),
            ));
        }
        Ok(e)
    };
    let meta = need("meta", "<i4", 2)?;
    let n = meta.shape[0];
    if meta.shape[1] != 4 {
        return Err(format_err(path, 8, "meta must be [N, 4]"));
    }
    let planes: Vec<&ArrayEntry> = match kind {
        ShardKind::Dataset => {
            let inputs = need("inputs", "<f4", 4)?;
            if inputs.shape[0] != n || inputs.shape[2] != inputs.shape[3] {
                return Err(format_err(path, 8, format!("inputs shape {:?} inconsistent", inputs.shape)));
            }
            let p = inputs.shape[2];
            let t = need("targets", "<u1", 3)?;
            let v = need("valid", "<u1", 3)?;
            for e in [t, v] {
                if e.shape != [n, p, p] {
                    return Err(format_err(path, 8, format!("`{}` shape {:?} != [{n}, {p}, {p}]", e.name, e.shape)));
                }
            }
            vec![t, v]
        }
        ShardKind::Predictions => vec![need("preds", "<f4", 3)?],
    };
    for e in planes {
        if e.shape[0] != n || e.shape[1] != e.shape[2] {
            return Err(format_err(path, 8, format!("`{}` shape {:?} inconsistent with meta", e.name, e.shape)));
        }
    }
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_shard() -> Shard {
        let mut s = Shard::new();
        s.push("preds", vec![1, 2, 2], ArrayData::F32(vec![0.1, -0.0, f32::NAN, 1.0])).unwrap();
        s.push("meta", vec![1, 4], ArrayData::I32(vec![3, 1, 0, 32])).unwrap();
        s
    }

    #[test]
    fn layout_is_exact() {
        let bytes = sample_shard().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"FCS1");
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header: ShardHeader = serde_json::from_slice(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(header.arrays[1].offset, 16);
        assert_eq!(bytes.len(), 8 + hlen + 16 + 16);
        assert_eq!(&bytes[8 + hlen..8 + hlen + 4], &0.1f32.to_le_bytes());
    }

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.fcs");
        let s = sample_shard();
        s.write(&p).unwrap();
        let back = Shard::read(&p).unwrap();
        let (_, ArrayData::F32(v)) = back.get("preds").unwrap() else { panic!() };
        let (_, ArrayData::F32(orig)) = s.get("preds").unwrap() else { panic!() };
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(v), bits(orig));
        validate_shard(&p, ShardKind::Predictions).unwrap();
        assert!(validate_shard(&p, ShardKind::Dataset).is_err());
    }

    #[test]
    fn validator_reports_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.fcs");
        let mut bytes = sample_shard().to_bytes().unwrap();
        bytes.push(0);
        fs::write(&p, &bytes).unwrap();
        match validate_shard(&p, ShardKind::Predictions) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len() - 1),
            other => panic!("{other:?}"),
        }
        bytes[0] = b'X';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(validate_shard(&p, ShardKind::Predictions), Err(Error::Format { offset: 0, .. })));
        fs::write(&p, b"FCS1").unwrap();
        assert!(matches!(validate_shard(&p, ShardKind::Predictions), Err(Error::Format { .. })));
    }

    #[test]
    fn push_checks_shapes() {
        let mut s = Shard::new();
        assert!(s.push("x", vec![2, 2], ArrayData::U8(vec![0; 3])).is_err());
        s.push("x", vec![3], ArrayData::U8(vec![0; 3])).unwrap();
        assert!(s.push("x", vec![3], ArrayData::U8(vec![0; 3])).is_err());
    }
}
