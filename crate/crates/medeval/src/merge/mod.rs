//! Checkpoint merging by spherical linear interpolation.
//!
//! Each tensor pair is flattened, the angle between the unit-normalized
//! copies is measured, and the interpolation weights
//! `sin((1-t)Ω)/sin(Ω)` and `sin(tΩ)/sin(Ω)` are applied to the raw
//! (unnormalized) tensors. Near-parallel or zero-norm pairs fall back to
//! plain linear interpolation, where the spherical weights are
//! ill-conditioned but numerically indistinguishable anyway. All arithmetic
//! runs in f64 regardless of the stored dtype.

mod store;

pub use store::{read_tensor_bytes, read_tensor_file, write_tensor_bytes, write_tensor_file};
pub use store::{Dtype, Tensor, TensorStore};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_T: f64 = 0.5;
pub const DEFAULT_PARALLEL_THRESHOLD: f64 = 0.9995;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub path_a: PathBuf,
    pub path_b: PathBuf,
    /// Interpolation weight toward B; 0.5 blends the parents equally.
    pub t: f64,
    /// |cos angle| above which the pair is treated as parallel.
    pub parallel_threshold: f64,
    pub output_path: PathBuf,
}

impl MergeConfig {
    pub fn new(path_a: PathBuf, path_b: PathBuf, output_path: PathBuf) -> MergeConfig {
        MergeConfig {
            path_a,
            path_b,
            t: DEFAULT_T,
            parallel_threshold: DEFAULT_PARALLEL_THRESHOLD,
            output_path,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::Config(format!(
                "t must be in [0, 1], got {}",
                self.t
            )));
        }
        if !(0.0..1.0).contains(&self.parallel_threshold) {
            return Err(Error::Config(format!(
                "parallel threshold must be in (0, 1), got {}",
                self.parallel_threshold
            )));
        }
        Ok(())
    }
}

/// Parse a plain key-value merge config: `path_a`, `path_b`, `t`,
/// `threshold`, `output`, one `key = value` per line, `#` comments.
pub fn parse_merge_config(text: &str) -> Result<MergeConfig> {
    let mut path_a = None;
    let mut path_b = None;
    let mut output = None;
    let mut t = DEFAULT_T;
    let mut threshold = DEFAULT_PARALLEL_THRESHOLD;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("merge config line without '=': {line:?}")))?;
        let value = value.trim().trim_matches('"');
        match key.trim() {
            "path_a" => path_a = Some(PathBuf::from(value)),
            "path_b" => path_b = Some(PathBuf::from(value)),
            "output" => output = Some(PathBuf::from(value)),
            "t" => {
                t = value
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid t: {value:?}")))?
            }
            "threshold" => {
                threshold = value
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid threshold: {value:?}")))?
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown merge config key: {other:?}"
                )))
            }
        }
    }
    let cfg = MergeConfig {
        path_a: path_a.ok_or_else(|| Error::Config("merge config needs path_a".into()))?,
        path_b: path_b.ok_or_else(|| Error::Config("merge config needs path_b".into()))?,
        t,
        parallel_threshold: threshold,
        output_path: output.ok_or_else(|| Error::Config("merge config needs output".into()))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_merge_config(path: &Path) -> Result<MergeConfig> {
    parse_merge_config(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    Parallel,
    ZeroNorm,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// SLERP two flattened value vectors; returns the blend and whether a
/// linear fallback was used.
pub fn slerp_values(a: &[f64], b: &[f64], t: f64, threshold: f64) -> (Vec<f64>, Option<Fallback>) {
    debug_assert_eq!(a.len(), b.len());
    let norm_a = norm(a);
    let norm_b = norm(b);
    let lerp = |fallback| {
        (
            a.iter()
                .zip(b)
                .map(|(x, y)| (1.0 - t) * x + t * y)
                .collect::<Vec<f64>>(),
            Some(fallback),
        )
    };
    if norm_a == 0.0 || norm_b == 0.0 {
        return lerp(Fallback::ZeroNorm);
    }
    let dot: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x / norm_a) * (y / norm_b))
        .sum();
    let dot = dot.clamp(-1.0, 1.0);
    if dot.abs() > threshold {
        return lerp(Fallback::Parallel);
    }
    let omega = dot.acos();
    let sin_omega = omega.sin();
    let weight_a = ((1.0 - t) * omega).sin() / sin_omega;
    let weight_b = (t * omega).sin() / sin_omega;
    (
        a.iter()
            .zip(b)
            .map(|(x, y)| weight_a * x + weight_b * y)
            .collect(),
        None,
    )
}

/// SLERP two tensors of identical shape and dtype; the result keeps the
/// dtype of `a`.
pub fn slerp_tensors(
    a: &Tensor,
    b: &Tensor,
    t: f64,
    threshold: f64,
) -> Result<(Tensor, Option<Fallback>)> {
    if a.shape != b.shape {
        return Err(Error::Data(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    if a.dtype != b.dtype {
        return Err(Error::Data(format!(
            "dtype mismatch: {} vs {}",
            a.dtype.as_str(),
            b.dtype.as_str()
        )));
    }
    let (values, fallback) = slerp_values(&a.to_f64_vec(), &b.to_f64_vec(), t, threshold);
    Ok((
        Tensor::from_f64(&values, a.dtype, a.shape.clone()),
        fallback,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMergeRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Fallback>,
    /// Largest elementwise move away from each parent.
    pub max_abs_delta_a: f64,
    pub max_abs_delta_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub t: f64,
    pub parallel_threshold: f64,
    pub tensor_count: usize,
    pub fallback_count: usize,
    pub tensors: Vec<TensorMergeRecord>,
}

/// Merge every tensor of two checkpoints and write the result.
///
/// The tensor name sets must match exactly; shape or dtype mismatches fail
/// per tensor. Output dtypes follow parent A.
pub fn merge_models(cfg: &MergeConfig) -> Result<MergeReport> {
    cfg.validate()?;
    let store_a = read_tensor_file(&cfg.path_a)?;
    let store_b = read_tensor_file(&cfg.path_b)?;

    let names_a: BTreeSet<&String> = store_a.tensors.keys().collect();
    let names_b: BTreeSet<&String> = store_b.tensors.keys().collect();
    if names_a != names_b {
        let missing: Vec<&&String> = names_a.difference(&names_b).collect();
        let extra: Vec<&&String> = names_b.difference(&names_a).collect();
        return Err(Error::Data(format!(
            "tensor name sets differ: missing from B {missing:?}, extra in B {extra:?}"
        )));
    }

    let mut merged = TensorStore {
        tensors: Default::default(),
        metadata: store_a.metadata.clone(),
    };
    let mut records = Vec::with_capacity(store_a.tensors.len());
    for (name, tensor_a) in &store_a.tensors {
        let tensor_b = &store_b.tensors[name];
        let (out, fallback) = slerp_tensors(tensor_a, tensor_b, cfg.t, cfg.parallel_threshold)
            .map_err(|e| Error::Data(format!("tensor {name}: {e}")))?;
        let out_values = out.to_f64_vec();
        let deltas = |parent: &Tensor| {
            parent
                .to_f64_vec()
                .iter()
                .zip(&out_values)
                .map(|(p, o)| (p - o).abs())
                .fold(0.0f64, f64::max)
        };
        records.push(TensorMergeRecord {
            name: name.clone(),
            fallback,
            max_abs_delta_a: deltas(tensor_a),
            max_abs_delta_b: deltas(tensor_b),
        });
        merged.tensors.insert(name.clone(), out);
    }
    write_tensor_file(&cfg.output_path, &merged)?;
    Ok(MergeReport {
        t: cfg.t,
        parallel_threshold: cfg.parallel_threshold,
        tensor_count: records.len(),
        fallback_count: records.iter().filter(|r| r.fallback.is_some()).count(),
        tensors: records,
    })
}
