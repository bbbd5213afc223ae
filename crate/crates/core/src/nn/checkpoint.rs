//! Parameter checkpoints: a flat little-endian `f64` blob (`<stem>.bin`)
//! plus a JSON manifest (`<stem>.json`) listing names, shapes and offsets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Result, RscError};

pub const FORMAT: &str = "rsc-tensors-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset in `f64` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn save_checkpoint(stem: &Path, tensors: &[(String, &Tensor2)], meta: serde_json::Value) -> Result<()> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            rows: t.rows(),
            cols: t.cols(),
            offset,
        });
        offset += t.len();
        for x in t.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        tensors: entries,
        meta,
    };
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(with_ext(stem, "bin"), blob)?;
    fs::write(with_ext(stem, "json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<(Vec<(String, Tensor2)>, serde_json::Value)> {
    let manifest_path = with_ext(stem, "json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        RscError::Invalid(format!("cannot read checkpoint manifest {}: {e}", manifest_path.display()))
    })?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(RscError::Invalid(format!("unknown checkpoint format {}", manifest.format)));
    }
    let blob = fs::read(with_ext(stem, "bin"))?;
    if blob.len() % 8 != 0 {
        return Err(RscError::Invalid("checkpoint blob is not a whole number of f64 values".into()));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in manifest.tensors {
        let end = e.offset + e.rows * e.cols;
        if end > values.len() {
            return Err(RscError::Invalid(format!("tensor {} runs past the end of the blob", e.name)));
        }
        out.push((e.name, Tensor2::new(e.rows, e.cols, values[e.offset..end].to_vec())?));
    }
    Ok((out, manifest.meta))
}

/// Writes named tensors back into `params` in order, checking names and
/// shapes.
pub fn restore_into(params: Vec<&mut Tensor2>, names: &[String], loaded: &[(String, Tensor2)]) -> Result<()> {
    if params.len() != loaded.len() || names.len() != loaded.len() {
        return Err(RscError::Shape(format!(
            "checkpoint holds {} tensors, model expects {}",
            loaded.len(),
            params.len()
        )));
    }
    for ((p, want), (name, t)) in params.into_iter().zip(names).zip(loaded) {
        if want != name || p.shape() != t.shape() {
            return Err(RscError::Shape(format!(
                "checkpoint tensor {name} {:?} does not match {want} {:?}",
                t.shape(),
                p.shape()
            )));
        }
        *p = t.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("rsc-ckpt-{}", std::process::id()));
        let stem = dir.join("model");
        let a = Tensor2::new(2, 2, vec![1.0, -0.5, 1e-300, f64::MAX]).unwrap();
        let b = Tensor2::row(&[3.25]);
        save_checkpoint(&stem, &[("a".into(), &a), ("b".into(), &b)], serde_json::json!({"k": 1})).unwrap();
        let (loaded, meta) = load_checkpoint(&stem).unwrap();
        assert_eq!(loaded[0].1, a);
        assert_eq!(loaded[1].1, b);
        assert_eq!(meta["k"], 1);
        let mut x = Tensor2::zeros(2, 2);
        let mut y = Tensor2::zeros(1, 1);
        restore_into(vec![&mut x, &mut y], &["a".into(), "b".into()], &loaded).unwrap();
        assert_eq!(x, a);
        assert!(load_checkpoint(&dir.join("missing")).is_err());
        fs::remove_dir_all(dir).ok();
    }
}
