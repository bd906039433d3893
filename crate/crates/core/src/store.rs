//! Directory-layout chunked array store, readable as an uncompressed Zarr v2
//! group.
//!
//! Layout:
//!
//! ```text
//! <root>/.zgroup
//! <root>/.zattrs              cube manifest
//! <root>/<var>/.zarray
//! <root>/<var>/.zattrs        units, aggregation, source
//! <root>/<var>/<t>.<y>.<x>    raw little-endian f32, C order
//! ```
//!
//! Metadata documents are serialized with sorted keys and four-space
//! indentation, the same bytes zarr-python writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, IoContext, Result};

const ZARR_FORMAT: u64 = 2;

/// Shape and chunking of one stored array. Only `<f4`, NaN fill, C order and
/// no compression are supported.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub chunks: Vec<usize>,
}

impl ArraySpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, chunks: Vec<usize>) -> Result<Self> {
        let spec = Self { name: name.into(), shape, chunks };
        spec.validate()?;
        Ok(spec)
    }

    /// A `(time, lat, lon)` array chunked one global field per timestep.
    pub fn gridded(name: impl Into<String>, n_time: usize, n_lat: usize, n_lon: usize) -> Result<Self> {
        Self::new(name, vec![n_time, n_lat, n_lon], vec![1, n_lat, n_lon])
    }

    /// A 1-D `(time,)` series stored as a single chunk.
    pub fn series(name: impl Into<String>, n_time: usize) -> Result<Self> {
        Self::new(name, vec![n_time], vec![n_time.max(1)])
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::Domain(format!("invalid array name `{}`", self.name)));
        }
        if self.shape.is_empty() || self.shape.len() != self.chunks.len() {
            return Err(Error::Shape(format!(
                "shape {:?} and chunks {:?} must be non-empty with equal rank",
                self.shape, self.chunks
            )));
        }
        for (&s, &c) in self.shape.iter().zip(&self.chunks) {
            if c == 0 || c > s.max(1) {
                return Err(Error::Shape(format!("chunk {:?} invalid for shape {:?}", self.chunks, self.shape)));
            }
        }
        Ok(())
    }

    /// Number of chunks along each dimension.
    pub fn chunk_grid(&self) -> Vec<usize> {
        self.shape.iter().zip(&self.chunks).map(|(s, c)| s.div_ceil(*c)).collect()
    }

    pub fn chunk_len(&self) -> usize {
        self.chunks.iter().product()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All chunk keys in C order, e.g. `"0.0.0"`.
    pub fn chunk_keys(&self) -> Vec<String> {
        let grid = self.chunk_grid();
        let total: usize = grid.iter().product();
        (0..total).map(|i| chunk_key(&unravel(i, &grid))).collect()
    }

    fn metadata(&self) -> Value {
        json!({
            "chunks": self.chunks,
            "compressor": null,
            "dimension_separator": ".",
            "dtype": "<f4",
            "fill_value": "NaN",
            "filters": null,
            "order": "C",
            "shape": self.shape,
            "zarr_format": ZARR_FORMAT,
        })
    }

    fn from_metadata(name: &str, meta: &Value) -> Result<Self> {
        let field = |k: &str| meta.get(k).unwrap_or(&Value::Null);
        if field("zarr_format").as_u64() != Some(ZARR_FORMAT) {
            return Err(Error::Domain(format!("`{name}`: only zarr_format 2 is supported")));
        }
        match field("compressor") {
            Value::Null => {}
            Value::Object(c) => {
                let id = c.get("id").and_then(Value::as_str).unwrap_or("?");
                return Err(Error::UnsupportedCompressor(id.to_string()));
            }
            other => return Err(Error::UnsupportedCompressor(other.to_string())),
        }
        match field("filters") {
            Value::Null => {}
            Value::Array(a) if a.is_empty() => {}
            other => {
                return Err(Error::Domain(format!("`{name}`: unsupported filters {other}")));
            }
        }
        if field("dtype").as_str() != Some("<f4") {
            return Err(Error::Domain(format!("`{name}`: unsupported dtype {}", field("dtype"))));
        }
        if field("order").as_str() != Some("C") {
            return Err(Error::Domain(format!("`{name}`: only C order is supported")));
        }
        match field("dimension_separator") {
            Value::Null => {}
            Value::String(s) if s == "." => {}
            other => {
                return Err(Error::Domain(format!("`{name}`: unsupported dimension separator {other}")));
            }
        }
        let dims = |k: &str| -> Result<Vec<usize>> {
            field(k)
                .as_array()
                .and_then(|a| a.iter().map(|v| v.as_u64().map(|x| x as usize)).collect())
                .ok_or_else(|| Error::Domain(format!("`{name}`: malformed `{k}`")))
        };
        Self::new(name, dims("shape")?, dims("chunks")?)
    }
}

fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for d in (0..dims.len()).rev() {
        idx[d] = flat % dims[d];
        flat /= dims[d];
    }
    idx
}

fn chunk_key(idx: &[usize]) -> String {
    idx.iter().map(usize::to_string).collect::<Vec<_>>().join(".")
}

/// Serializes like Python's `json.dumps(v, indent=4, sort_keys=True)`.
pub fn to_json_document<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    // round-trip through Value so object keys come out sorted
    serde_json::to_value(value)?.serialize(&mut ser)?;
    Ok(buf)
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).io_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes).io_context(|| format!("writing {}", tmp.display()))?;
    drop(f);
    fs::rename(&tmp, path).io_context(|| format!("renaming into {}", path.display()))
}

fn read_json(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).io_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// A Zarr v2 group on the local filesystem.
#[derive(Clone, Debug)]
pub struct CubeStore {
    root: PathBuf,
}

impl CubeStore {
    /// Opens `root` as a group, creating it (and `.zgroup`) if needed.
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).io_context(|| format!("creating store {}", root.display()))?;
        let marker = root.join(".zgroup");
        if !marker.exists() {
            write_atomic(&marker, &to_json_document(&json!({ "zarr_format": ZARR_FORMAT }))?)?;
        }
        Ok(Self { root })
    }

    /// Opens an existing group.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let meta = read_json(&root.join(".zgroup"))?;
        if meta.get("zarr_format").and_then(Value::as_u64) != Some(ZARR_FORMAT) {
            return Err(Error::Domain(format!("{} is not a zarr v2 group", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates an array, or returns the existing one if its spec matches.
    pub fn create_array(&self, spec: &ArraySpec) -> Result<ZarrArray> {
        spec.validate()?;
        let dir = self.root.join(&spec.name);
        let meta_path = dir.join(".zarray");
        if meta_path.exists() {
            let existing = self.open_array(&spec.name)?;
            if existing.spec != *spec {
                return Err(Error::Conflict {
                    name: spec.name.clone(),
                    detail: format!(
                        "stored shape {:?} chunks {:?}, requested shape {:?} chunks {:?}",
                        existing.spec.shape, existing.spec.chunks, spec.shape, spec.chunks
                    ),
                });
            }
            return Ok(existing);
        }
        fs::create_dir_all(&dir).io_context(|| format!("creating {}", dir.display()))?;
        write_atomic(&meta_path, &to_json_document(&spec.metadata())?)?;
        Ok(ZarrArray { dir, spec: spec.clone() })
    }

    pub fn open_array(&self, name: &str) -> Result<ZarrArray> {
        let dir = self.root.join(name);
        let meta = read_json(&dir.join(".zarray"))?;
        let spec = ArraySpec::from_metadata(name, &meta)?;
        Ok(ZarrArray { dir, spec })
    }

    pub fn has_array(&self, name: &str) -> bool {
        self.root.join(name).join(".zarray").exists()
    }

    /// Names of all arrays in the group, sorted.
    pub fn array_names(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.root).io_context(|| format!("listing {}", self.root.display()))? {
            let entry = entry.io_context(|| format!("listing {}", self.root.display()))?;
            if entry.path().join(".zarray").exists() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn attrs(&self) -> Result<Map<String, Value>> {
        read_attrs(&self.root)
    }

    pub fn set_attrs(&self, attrs: &Map<String, Value>) -> Result<()> {
        write_atomic(&self.root.join(".zattrs"), &to_json_document(attrs)?)
    }
}

fn read_attrs(dir: &Path) -> Result<Map<String, Value>> {
    let path = dir.join(".zattrs");
    if !path.exists() {
        return Ok(Map::new());
    }
    match read_json(&path)? {
        Value::Object(m) => Ok(m),
        _ => Err(Error::Domain(format!("{} is not a JSON object", path.display()))),
    }
}

/// Handle on one stored array. Cheap to clone and safe to share across
/// threads; concurrent writers must target disjoint chunks.
#[derive(Clone, Debug)]
pub struct ZarrArray {
    dir: PathBuf,
    spec: ArraySpec,
}

impl ZarrArray {
    pub fn spec(&self) -> &ArraySpec {
        &self.spec
    }

    pub fn shape(&self) -> &[usize] {
        &self.spec.shape
    }

    pub fn attrs(&self) -> Result<Map<String, Value>> {
        read_attrs(&self.dir)
    }

    pub fn set_attrs(&self, attrs: &Map<String, Value>) -> Result<()> {
        write_atomic(&self.dir.join(".zattrs"), &to_json_document(attrs)?)
    }

    pub fn chunk_path(&self, chunk_idx: &[usize]) -> PathBuf {
        self.dir.join(chunk_key(chunk_idx))
    }

    fn check_region(&self, offsets: &[usize], extents: &[usize]) -> Result<()> {
        let rank = self.spec.shape.len();
        if offsets.len() != rank || extents.len() != rank {
            return Err(Error::Shape(format!(
                "region rank {}/{} does not match array rank {rank}",
                offsets.len(),
                extents.len()
            )));
        }
        for d in 0..rank {
            if offsets[d] + extents[d] > self.spec.shape[d] {
                return Err(Error::Range(format!(
                    "dimension {d}: {}..{} exceeds length {}",
                    offsets[d],
                    offsets[d] + extents[d],
                    self.spec.shape[d]
                )));
            }
        }
        Ok(())
    }

    /// Writes a C-order block at `offsets`. The region must start on chunk
    /// boundaries and end on a chunk boundary or the array edge.
    pub fn write_region(&self, offsets: &[usize], extents: &[usize], block: &[f32]) -> Result<()> {
        self.check_region(offsets, extents)?;
        if block.len() != extents.iter().product::<usize>() {
            return Err(Error::Shape(format!("block of {} values does not match extents {extents:?}", block.len())));
        }
        let spec = &self.spec;
        for d in 0..spec.shape.len() {
            let end = offsets[d] + extents[d];
            if !offsets[d].is_multiple_of(spec.chunks[d])
                || (!end.is_multiple_of(spec.chunks[d]) && end != spec.shape[d])
            {
                return Err(Error::Alignment(format!(
                    "dimension {d}: {}..{end} not aligned to chunk size {}",
                    offsets[d], spec.chunks[d]
                )));
            }
        }
        let first: Vec<usize> = offsets.iter().zip(&spec.chunks).map(|(o, c)| o / c).collect();
        let counts: Vec<usize> =
            (0..spec.shape.len()).map(|d| (offsets[d] + extents[d]).div_ceil(spec.chunks[d]) - first[d]).collect();
        let n_chunks: usize = counts.iter().product();
        let mut buf = vec![f32::NAN; spec.chunk_len()];
        for flat in 0..n_chunks {
            let rel = unravel(flat, &counts);
            let cidx: Vec<usize> = rel.iter().zip(&first).map(|(r, f)| r + f).collect();
            buf.fill(f32::NAN);
            self.copy_chunk(&cidx, offsets, extents, |chunk_pos, block_pos| {
                buf[chunk_pos] = block[block_pos];
            });
            let mut bytes = Vec::with_capacity(buf.len() * 4);
            for v in &buf {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            write_atomic(&self.chunk_path(&cidx), &bytes)?;
        }
        Ok(())
    }

    /// Reads an arbitrary region as a C-order block. Cells in chunks that
    /// were never written read as NaN.
    pub fn read_region(&self, offsets: &[usize], extents: &[usize]) -> Result<Vec<f32>> {
        self.check_region(offsets, extents)?;
        let spec = &self.spec;
        let mut out = vec![f32::NAN; extents.iter().product()];
        if out.is_empty() {
            return Ok(out);
        }
        let first: Vec<usize> = offsets.iter().zip(&spec.chunks).map(|(o, c)| o / c).collect();
        let counts: Vec<usize> =
            (0..spec.shape.len()).map(|d| (offsets[d] + extents[d]).div_ceil(spec.chunks[d]) - first[d]).collect();
        let n_chunks: usize = counts.iter().product();
        for flat in 0..n_chunks {
            let rel = unravel(flat, &counts);
            let cidx: Vec<usize> = rel.iter().zip(&first).map(|(r, f)| r + f).collect();
            let Some(chunk) = self.read_chunk(&cidx)? else {
                continue;
            };
            self.copy_chunk(&cidx, offsets, extents, |chunk_pos, block_pos| {
                out[block_pos] = chunk[chunk_pos];
            });
        }
        Ok(out)
    }

    /// Raw chunk contents, or `None` if the chunk file does not exist.
    pub fn read_chunk(&self, chunk_idx: &[usize]) -> Result<Option<Vec<f32>>> {
        let path = self.chunk_path(chunk_idx);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::Io { context: format!("reading {}", path.display()), source: e }),
        };
        if bytes.len() != self.spec.chunk_len() * 4 {
            return Err(Error::Shape(format!(
                "chunk {} has {} bytes, expected {}",
                path.display(),
                bytes.len(),
                self.spec.chunk_len() * 4
            )));
        }
        Ok(Some(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect()))
    }

    /// Visits every cell shared by chunk `cidx` and the region, passing
    /// (position in chunk, position in region block).
    fn copy_chunk(&self, cidx: &[usize], offsets: &[usize], extents: &[usize], mut f: impl FnMut(usize, usize)) {
        let spec = &self.spec;
        let rank = spec.shape.len();
        let lo: Vec<usize> = (0..rank).map(|d| (cidx[d] * spec.chunks[d]).max(offsets[d])).collect();
        let hi: Vec<usize> = (0..rank).map(|d| ((cidx[d] + 1) * spec.chunks[d]).min(offsets[d] + extents[d])).collect();
        if (0..rank).any(|d| lo[d] >= hi[d]) {
            return;
        }
        // copy contiguous runs along the last dimension
        let last = rank - 1;
        let run = hi[last] - lo[last];
        let outer: Vec<usize> = (0..last).map(|d| hi[d] - lo[d]).collect();
        let n_outer: usize = outer.iter().product();
        for flat in 0..n_outer {
            let rel = unravel(flat, &outer);
            let mut chunk_pos = 0;
            let mut block_pos = 0;
            for d in 0..rank {
                let g = if d == last { lo[d] } else { lo[d] + rel[d] };
                chunk_pos = chunk_pos * spec.chunks[d] + (g - cidx[d] * spec.chunks[d]);
                block_pos = block_pos * extents[d] + (g - offsets[d]);
            }
            for k in 0..run {
                f(chunk_pos + k, block_pos + k);
            }
        }
    }

    /// One full `(lat, lon)` field of a 3-D array.
    pub fn read_step(&self, t: usize) -> Result<Vec<f32>> {
        let s = &self.spec.shape;
        if s.len() != 3 {
            return Err(Error::Shape(format!("`{}` is not a 3-D array", self.spec.name)));
        }
        self.read_region(&[t, 0, 0], &[1, s[1], s[2]])
    }

    pub fn write_step(&self, t: usize, field: &[f32]) -> Result<()> {
        let s = &self.spec.shape;
        if s.len() != 3 {
            return Err(Error::Shape(format!("`{}` is not a 3-D array", self.spec.name)));
        }
        self.write_region(&[t, 0, 0], &[1, s[1], s[2]], field)
    }

    pub fn read_all(&self) -> Result<Vec<f32>> {
        let offsets = vec![0; self.spec.shape.len()];
        self.read_region(&offsets, &self.spec.shape.clone())
    }
}
