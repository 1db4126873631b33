//! On-disk formats.
//!
//! Features: a JSON manifest naming a sibling data file of little-endian
//! `f32`, row-major, `rows x dims`, with row ids in manifest order.
//!
//! Heads: a JSON manifest plus a sibling blob of little-endian `f64` laid
//! out as answer weights (`n_answers x dim`), answer biases (`n_answers`),
//! then, when present, binary weights (`dim`) and the binary bias.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BinaryHead, FusedFeature, LinearHead, Result, SelectiveError, SelectiveHeads, Variant};
use crate::data::{read_jsonl, write_jsonl};

pub const FEATURE_FORMAT_VERSION: u32 = 1;
pub const HEADS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: u32,
    pub dtype: String,
    pub layout: String,
    pub rows: usize,
    pub dims: usize,
    /// Data file, relative to the manifest.
    pub data: String,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadsManifest {
    pub version: u32,
    pub variant: Variant,
    pub dim: usize,
    pub n_answers: usize,
    pub has_binary: bool,
    pub blob: String,
    pub blob_sha256: String,
}

/// Gold label row; `answer: null` marks an unanswerable question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub answer: Option<usize>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SelectiveError + '_ {
    move |source| SelectiveError::Io { path: path.display().to_string(), source }
}

fn fmt_err(path: &Path, message: impl Into<String>) -> SelectiveError {
    SelectiveError::Format { path: path.display().to_string(), message: message.into() }
}

fn sibling(manifest: &Path, ext: &str) -> (PathBuf, String) {
    let name = format!("{}.{ext}", manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("data"));
    (manifest.with_file_name(&name), name)
}

fn resolve(manifest: &Path, rel: &str) -> PathBuf {
    manifest.parent().map(|p| p.join(rel)).unwrap_or_else(|| PathBuf::from(rel))
}

pub fn write_features(features: &[FusedFeature], manifest_path: &Path) -> Result<()> {
    let dims = features.first().map_or(0, |f| f.x.len());
    let mut bytes = Vec::with_capacity(features.len() * dims * 4);
    for f in features {
        if f.x.len() != dims {
            return Err(SelectiveError::DimensionMismatch { expected: dims, got: f.x.len() });
        }
        for v in &f.x {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let (data_path, data) = sibling(manifest_path, "f32");
    std::fs::write(&data_path, bytes).map_err(io_err(&data_path))?;
    let manifest = FeatureManifest {
        version: FEATURE_FORMAT_VERSION,
        dtype: "f32-le".into(),
        layout: "row-major".into(),
        rows: features.len(),
        dims,
        data,
        ids: features.iter().map(|f| f.id.clone()).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(manifest_path, json).map_err(io_err(manifest_path))
}

pub fn read_features(manifest_path: &Path) -> Result<Vec<FusedFeature>> {
    let raw = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let m: FeatureManifest = serde_json::from_str(&raw).map_err(|e| fmt_err(manifest_path, e.to_string()))?;
    if m.version != FEATURE_FORMAT_VERSION || m.dtype != "f32-le" || m.layout != "row-major" {
        return Err(fmt_err(manifest_path, format!("unsupported format v{} {} {}", m.version, m.dtype, m.layout)));
    }
    if m.ids.len() != m.rows {
        return Err(fmt_err(manifest_path, format!("{} ids for {} rows", m.ids.len(), m.rows)));
    }
    let data_path = resolve(manifest_path, &m.data);
    let bytes = std::fs::read(&data_path).map_err(io_err(&data_path))?;
    if bytes.len() != m.rows * m.dims * 4 {
        return Err(fmt_err(&data_path, format!("expected {} bytes, found {}", m.rows * m.dims * 4, bytes.len())));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    m.ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| FusedFeature::new(id, values[i * m.dims..(i + 1) * m.dims].to_vec()))
        .collect()
}

pub fn write_labels(labels: &[LabelRecord], path: &Path) -> Result<()> {
    write_jsonl(path, labels).map_err(|e| fmt_err(path, e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    Ok(read_jsonl(path).map_err(|e| fmt_err(path, e.to_string()))?.into_iter().map(|(_, r)| r).collect())
}

pub fn save_heads(heads: &SelectiveHeads, manifest_path: &Path) -> Result<()> {
    let mut values: Vec<f64> = heads.answer.weights.iter().chain(&heads.answer.bias).copied().collect();
    if let Some(b) = &heads.binary {
        values.extend(&b.w);
        values.push(b.b);
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let (blob_path, blob) = sibling(manifest_path, "bin");
    std::fs::write(&blob_path, &bytes).map_err(io_err(&blob_path))?;
    let manifest = HeadsManifest {
        version: HEADS_FORMAT_VERSION,
        variant: heads.variant,
        dim: heads.dim(),
        n_answers: heads.n_answers(),
        has_binary: heads.binary.is_some(),
        blob,
        blob_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(manifest_path, json).map_err(io_err(manifest_path))
}

pub fn load_heads(manifest_path: &Path) -> Result<SelectiveHeads> {
    let raw = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let m: HeadsManifest = serde_json::from_str(&raw).map_err(|e| fmt_err(manifest_path, e.to_string()))?;
    if m.version != HEADS_FORMAT_VERSION {
        return Err(fmt_err(manifest_path, format!("unsupported heads version {}", m.version)));
    }
    let blob_path = resolve(manifest_path, &m.blob);
    let bytes = std::fs::read(&blob_path).map_err(io_err(&blob_path))?;
    if hex::encode(Sha256::digest(&bytes)) != m.blob_sha256 {
        return Err(fmt_err(&blob_path, "checksum mismatch"));
    }
    let (n, d) = (m.n_answers, m.dim);
    let expected = n * d + n + if m.has_binary { d + 1 } else { 0 };
    if bytes.len() != expected * 8 {
        return Err(fmt_err(&blob_path, format!("expected {} values, found {}", expected, bytes.len() / 8)));
    }
    let v: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let answer = LinearHead { weights: v[..n * d].to_vec(), bias: v[n * d..n * d + n].to_vec(), dim: d };
    let binary = m.has_binary.then(|| BinaryHead { w: v[n * d + n..n * d + n + d].to_vec(), b: v[expected - 1] });
    Ok(SelectiveHeads { variant: m.variant, answer, binary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("feat.json");
        let fs = vec![FusedFeature::new("a", vec![0.5, -1.25]).unwrap(), FusedFeature::new("b", vec![3.0, 0.0]).unwrap()];
        write_features(&fs, &p).unwrap();
        assert_eq!(read_features(&p).unwrap(), fs);
        assert_eq!(std::fs::read(dir.path().join("feat.f32")).unwrap()[..4], 0.5f32.to_le_bytes());
    }

    #[test]
    fn heads_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("heads.json");
        let h = SelectiveHeads {
            variant: Variant::Cls,
            answer: LinearHead { weights: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], bias: vec![0.1, 0.2, 0.3], dim: 2 },
            binary: Some(BinaryHead { w: vec![-1.0, 1.0], b: 0.25 }),
        };
        save_heads(&h, &p).unwrap();
        assert_eq!(load_heads(&p).unwrap(), h);
        std::fs::write(dir.path().join("heads.bin"), [0u8; 8]).unwrap();
        assert!(load_heads(&p).is_err());
    }
}
