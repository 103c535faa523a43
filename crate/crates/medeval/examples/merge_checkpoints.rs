//! SLERP checkpoint merging: build two small checkpoints, blend them
//! 50/50, and inspect the per-tensor report.
//!
//! Run with: `cargo run --example merge_checkpoints`

use medeval::merge::{
    merge_models, read_tensor_file, write_tensor_file, Dtype, MergeConfig, Tensor, TensorStore,
};

fn checkpoint(values: &[(&str, Vec<f64>)]) -> TensorStore {
    let mut store = TensorStore::default();
    for (name, data) in values {
        let len = data.len();
        store.tensors.insert(
            (*name).to_string(),
            Tensor::from_f64(data, Dtype::F32, vec![len]),
        );
    }
    store.metadata.insert("format".into(), "demo".into());
    store
}

fn main() -> medeval::Result<()> {
    let dir = tempfile::tempdir()?;
    let path_a = dir.path().join("parent_a.ckpt");
    let path_b = dir.path().join("parent_b.ckpt");
    let output = dir.path().join("merged.ckpt");

    write_tensor_file(
        &path_a,
        &checkpoint(&[
            ("attn.weight", vec![1.0, 0.0, 0.5, -0.5]),
            ("mlp.weight", vec![0.2, 0.4, 0.6]),
            ("norm.scale", vec![1.0, 1.0]),
        ]),
    )?;
    write_tensor_file(
        &path_b,
        &checkpoint(&[
            ("attn.weight", vec![0.0, 1.0, -0.5, 0.5]),
            ("mlp.weight", vec![0.6, 0.2, 0.4]),
            // Parallel to parent A's tensor: exercises the LERP fallback.
            ("norm.scale", vec![2.0, 2.0]),
        ]),
    )?;

    let config = MergeConfig::new(path_a, path_b, output.clone());
    println!(
        "merging with t = {} (parallel threshold {})",
        config.t, config.parallel_threshold
    );
    let report = merge_models(&config)?;

    for record in &report.tensors {
        println!(
            "{:<12} fallback {:<10} max |delta| vs A {:.4}, vs B {:.4}",
            record.name,
            record
                .fallback
                .map(|f| format!("{f:?}"))
                .unwrap_or_else(|| "none".into()),
            record.max_abs_delta_a,
            record.max_abs_delta_b
        );
    }

    let merged = read_tensor_file(&output)?;
    println!("\nmerged tensors:");
    for (name, tensor) in &merged.tensors {
        println!("  {name} = {:?}", tensor.to_f64_vec());
    }
    Ok(())
}
