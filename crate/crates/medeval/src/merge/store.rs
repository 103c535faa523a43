//! Checkpoint container I/O.
//!
//! Layout, bit-exact: an 8-byte little-endian header length `N`, then `N`
//! bytes of JSON mapping each tensor name to `{dtype, shape, data_offsets}`
//! (plus an optional `"__metadata__"` string map), then the raw
//! little-endian tensor payload addressed by those offsets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use half::{bf16, f16};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F16,
    Bf16,
}

impl Dtype {
    pub fn byte_size(&self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 | Dtype::Bf16 => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Dtype::F32 => "F32",
            Dtype::F16 => "F16",
            Dtype::Bf16 => "BF16",
        }
    }

    pub fn parse(s: &str) -> Result<Dtype> {
        match s {
            "F32" => Ok(Dtype::F32),
            "F16" => Ok(Dtype::F16),
            "BF16" => Ok(Dtype::Bf16),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl Tensor {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Decode the payload to f64 for arithmetic.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self.dtype {
            Dtype::F32 => self
                .data
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
            Dtype::F16 => self
                .data
                .chunks_exact(2)
                .map(|b| f16::from_le_bytes([b[0], b[1]]).to_f64())
                .collect(),
            Dtype::Bf16 => self
                .data
                .chunks_exact(2)
                .map(|b| bf16::from_le_bytes([b[0], b[1]]).to_f64())
                .collect(),
        }
    }

    /// Encode f64 values, rounding to the target dtype.
    pub fn from_f64(values: &[f64], dtype: Dtype, shape: Vec<usize>) -> Tensor {
        let mut data = Vec::with_capacity(values.len() * dtype.byte_size());
        match dtype {
            Dtype::F32 => {
                for v in values {
                    data.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
            Dtype::F16 => {
                for v in values {
                    data.extend_from_slice(&f16::from_f64(*v).to_le_bytes());
                }
            }
            Dtype::Bf16 => {
                for v in values {
                    data.extend_from_slice(&bf16::from_f64(*v).to_le_bytes());
                }
            }
        }
        Tensor { dtype, shape, data }
    }
}

/// An in-memory checkpoint: named tensors plus free-form string metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorStore {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

fn shape_from_json(value: &Value) -> std::result::Result<Vec<usize>, String> {
    value
        .as_array()
        .ok_or("shape must be an array")?
        .iter()
        .map(|d| {
            d.as_u64()
                .map(|d| d as usize)
                .ok_or_else(|| "shape dimensions must be non-negative integers".to_string())
        })
        .collect()
}

/// Parse and validate a checkpoint file.
pub fn read_tensor_file(path: &Path) -> Result<TensorStore> {
    let bytes =
        fs::read(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_tensor_bytes(&bytes).map_err(|e| match e {
        Error::Truncated(m) => Error::Truncated(format!("{}: {m}", path.display())),
        Error::OffsetMismatch(m) => Error::OffsetMismatch(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_tensor_bytes(bytes: &[u8]) -> Result<TensorStore> {
    if bytes.len() < 8 {
        return Err(Error::Truncated(format!(
            "file is {} bytes, header needs 8",
            bytes.len()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("checked length")) as usize;
    let payload_start = 8usize
        .checked_add(header_len)
        .ok_or_else(|| Error::Truncated("header length overflows".into()))?;
    if bytes.len() < payload_start {
        return Err(Error::Truncated(format!(
            "header claims {header_len} bytes of metadata but only {} remain",
            bytes.len() - 8
        )));
    }
    let header: Map<String, Value> = serde_json::from_slice(&bytes[8..payload_start])
        .map_err(|e| Error::Data(format!("invalid header json: {e}")))?;
    let payload = &bytes[payload_start..];

    let mut store = TensorStore::default();
    for (name, entry) in header {
        if name == "__metadata__" {
            let map = entry
                .as_object()
                .ok_or_else(|| Error::Data("__metadata__ must be an object".into()))?;
            for (k, v) in map {
                let v = v
                    .as_str()
                    .ok_or_else(|| Error::Data("__metadata__ values must be strings".into()))?;
                store.metadata.insert(k.clone(), v.to_string());
            }
            continue;
        }
        let dtype = Dtype::parse(
            entry
                .get("dtype")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Data(format!("tensor {name} lacks a dtype")))?,
        )?;
        let shape = shape_from_json(
            entry
                .get("shape")
                .ok_or_else(|| Error::Data(format!("tensor {name} lacks a shape")))?,
        )
        .map_err(Error::Data)?;
        let offsets = entry
            .get("data_offsets")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::Data(format!("tensor {name} lacks data_offsets")))?;
        let begin = offsets[0].as_u64().unwrap_or(u64::MAX) as usize;
        let end = offsets[1].as_u64().unwrap_or(u64::MAX) as usize;
        if begin > end || end > payload.len() {
            return Err(Error::Truncated(format!(
                "tensor {name} offsets [{begin}, {end}) exceed payload of {} bytes",
                payload.len()
            )));
        }
        let expected: usize = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .map(|count| count * dtype.byte_size())
            .ok_or_else(|| Error::OffsetMismatch(format!("tensor {name} shape overflows")))?;
        if end - begin != expected {
            return Err(Error::OffsetMismatch(format!(
                "tensor {name} has {} bytes but shape {shape:?} of {} needs {expected}",
                end - begin,
                dtype.as_str()
            )));
        }
        store.tensors.insert(
            name,
            Tensor {
                dtype,
                shape,
                data: payload[begin..end].to_vec(),
            },
        );
    }
    Ok(store)
}

/// Serialize a checkpoint; tensors are laid out in name order.
pub fn write_tensor_bytes(store: &TensorStore) -> Vec<u8> {
    let mut header = Map::new();
    let mut offset = 0usize;
    for (name, tensor) in &store.tensors {
        let end = offset + tensor.data.len();
        header.insert(
            name.clone(),
            json!({
                "dtype": tensor.dtype.as_str(),
                "shape": tensor.shape,
                "data_offsets": [offset, end],
            }),
        );
        offset = end;
    }
    if !store.metadata.is_empty() {
        header.insert(
            "__metadata__".to_string(),
            Value::Object(
                store
                    .metadata
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect(),
            ),
        );
    }
    let header_bytes = serde_json::to_vec(&Value::Object(header)).expect("header serializes");

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for tensor in store.tensors.values() {
        out.extend_from_slice(&tensor.data);
    }
    out
}

pub fn write_tensor_file(path: &Path, store: &TensorStore) -> Result<()> {
    fs::write(path, write_tensor_bytes(store))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f32_tensor(values: &[f32], shape: Vec<usize>) -> Tensor {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Tensor {
            dtype: Dtype::F32,
            shape,
            data,
        }
    }

    fn sample_store() -> TensorStore {
        let mut store = TensorStore::default();
        store
            .tensors
            .insert("layer.bias".into(), f32_tensor(&[0.5, -1.25], vec![2]));
        store.tensors.insert(
            "layer.weight".into(),
            f32_tensor(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![2, 3]),
        );
        store.metadata.insert("format".into(), "pt".into());
        store
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let store = sample_store();
        let bytes = write_tensor_bytes(&store);
        let back = read_tensor_bytes(&bytes).unwrap();
        assert_eq!(store, back);
    }

    /// Byte-layout oracle built by hand: header length, header JSON, then
    /// payload bytes in declared offset order.
    #[test]
    fn hand_built_fixture_parses_exactly() {
        let header = br#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F16","shape":[1],"data_offsets":[8,10]},"__metadata__":{"origin":"fixture"}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_le_bytes());
        bytes.extend_from_slice(&f16::from_f32(0.25).to_le_bytes());

        let store = read_tensor_bytes(&bytes).unwrap();
        assert_eq!(store.metadata["origin"], "fixture");
        let a = &store.tensors["a"];
        assert_eq!(a.shape, vec![2]);
        assert_eq!(a.to_f64_vec(), vec![1.5, -2.0]);
        let b = &store.tensors["b"];
        assert_eq!(b.dtype, Dtype::F16);
        assert_eq!(b.to_f64_vec(), vec![0.25]);
    }

    #[test]
    fn offsets_past_eof_are_truncation() {
        let header = br#"{"a":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]); // only half the payload
        assert!(matches!(
            read_tensor_bytes(&bytes),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn short_header_is_truncation() {
        assert!(matches!(
            read_tensor_bytes(&[1, 2, 3]),
            Err(Error::Truncated(_))
        ));
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(1000u64).to_le_bytes());
        bytes.extend_from_slice(b"{}");
        assert!(matches!(
            read_tensor_bytes(&bytes),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn wrong_byte_count_is_offset_mismatch() {
        let header = br#"{"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            read_tensor_bytes(&bytes),
            Err(Error::OffsetMismatch(_))
        ));
    }

    #[test]
    fn unknown_dtype_is_rejected() {
        let header = br#"{"a":{"dtype":"F64","shape":[1],"data_offsets":[0,8]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            read_tensor_bytes(&bytes),
            Err(Error::UnsupportedDtype(_))
        ));
    }

    #[test]
    fn dtype_roundtrip_through_f64() {
        for dtype in [Dtype::F32, Dtype::F16, Dtype::Bf16] {
            let values = [0.0, 1.0, -1.5, 0.25];
            let tensor = Tensor::from_f64(&values, dtype, vec![4]);
            assert_eq!(tensor.to_f64_vec(), values, "{dtype:?}");
        }
    }
}
