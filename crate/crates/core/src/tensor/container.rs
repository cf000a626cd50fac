//! Parameter container file.
//!
//! Layout: magic `DBTC`, u32 format version, u64 manifest length, the JSON
//! manifest, then every tensor's data as little-endian `f64` in manifest
//! order. The manifest carries names, shapes, dtype and a free-form
//! `metadata` object owned by the caller.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::array::Tensor;
use super::params::ParamSet;
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"DBTC";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    dtype: String,
    tensors: Vec<TensorEntry>,
    metadata: serde_json::Value,
}

pub fn write_container(params: &ParamSet, metadata: &serde_json::Value, mut out: impl Write) -> Result<()> {
    let manifest = Manifest {
        format_version: CONTAINER_VERSION,
        dtype: "f64".into(),
        tensors: params
            .iter()
            .map(|(_, p)| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        metadata: metadata.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut buf = Vec::with_capacity(16 + json.len() + params.num_elements() * 8);
    buf.extend_from_slice(CONTAINER_MAGIC);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, p) in params.iter() {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::io("<container>", e))
}

pub fn read_container(mut input: impl Read) -> Result<(ParamSet, serde_json::Value)> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<container>", e))?;
    parse_container(&bytes)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("container truncated".into()))?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

pub fn parse_container(bytes: &[u8]) -> Result<(ParamSet, serde_json::Value)> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != CONTAINER_MAGIC {
        return Err(Error::Format("not a parameter container (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let len = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().unwrap());
    let manifest: Manifest = serde_json::from_slice(take(bytes, &mut pos, len as usize)?)
        .map_err(|e| Error::Format(format!("container manifest: {e}")))?;
    if manifest.dtype != "f64" {
        return Err(Error::Format(format!("unsupported dtype {}", manifest.dtype)));
    }
    let mut params = ParamSet::new();
    for entry in manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = take(bytes, &mut pos, n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(&entry.shape, data).map_err(|e| Error::Format(e.to_string()))?;
        params
            .add(entry.name, tensor)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after container data".into()));
    }
    Ok((params, manifest.metadata))
}

pub fn save_container(path: &Path, params: &ParamSet, metadata: &serde_json::Value) -> Result<()> {
    let mut buf = Vec::new();
    write_container(params, metadata, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: &Path) -> Result<(ParamSet, serde_json::Value)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_container(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        ps.add_xavier("a", &[3, 4], &mut rng).unwrap();
        ps.add("b", Tensor::new(&[2], vec![f64::MIN_POSITIVE, -0.0]).unwrap())
            .unwrap();
        ps.add_xavier("c", &[2, 2, 3, 3], &mut rng).unwrap();
        let meta = serde_json::json!({"kind": "test", "n": 3});
        let mut bytes = Vec::new();
        write_container(&ps, &meta, &mut bytes).unwrap();
        let (back, meta_back) = parse_container(&bytes).unwrap();
        assert_eq!(meta_back, meta);
        assert_eq!(back.len(), 3);
        for ((_, x), (_, y)) in ps.iter().zip(back.iter()) {
            assert_eq!(x.name, y.name);
            let xb: Vec<u64> = x.value.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        let mut again = Vec::new();
        write_container(&back, &meta_back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_input_is_a_format_error() {
        assert!(matches!(parse_container(b"nope"), Err(Error::Format(_))));
        let mut ps = ParamSet::new();
        ps.add_zeros("a", &[4]).unwrap();
        let mut bytes = Vec::new();
        write_container(&ps, &serde_json::Value::Null, &mut bytes).unwrap();
        assert!(matches!(parse_container(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }
}
