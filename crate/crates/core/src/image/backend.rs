//! Embedding and detection backends, with lookup-table implementations
//! loaded from JSON fixtures.

use std::collections::HashMap;
use std::path::Path;

use super::{Detection, ImageEmbedding, ImageError, ObjectDetection};

pub trait ImageEmbedder: Send + Sync {
    fn embed(&self, image_ref: &str) -> Result<ImageEmbedding, ImageError>;
}

pub trait ObjectDetector: Send + Sync {
    fn detect(&self, image_ref: &str) -> Result<ObjectDetection, ImageError>;
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, backend: &'static str) -> Result<T, ImageError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| ImageError::Backend { backend, message: format!("{}: {e}", path.display()) })?;
    serde_json::from_str(&raw).map_err(|e| ImageError::Backend { backend, message: format!("{}: {e}", path.display()) })
}

/// Embeddings keyed by image ref.
#[derive(Debug, Clone, Default)]
pub struct LookupEmbedder {
    table: HashMap<String, ImageEmbedding>,
    dim: Option<usize>,
}

impl LookupEmbedder {
    pub fn new<I, K>(entries: I) -> Result<Self, ImageError>
    where
        I: IntoIterator<Item = (K, Vec<f32>)>,
        K: Into<String>,
    {
        let mut out = Self::default();
        for (k, v) in entries {
            let k = k.into();
            match out.dim {
                Some(d) if d != v.len() => {
                    return Err(ImageError::DimensionMismatch { expected: d, got: v.len(), image_ref: k });
                }
                _ => out.dim = Some(v.len()),
            }
            out.table.insert(k.clone(), ImageEmbedding::new(k, v)?);
        }
        Ok(out)
    }

    /// JSON object `{"image_ref": [f32, ...], ...}`.
    pub fn from_json(path: &Path) -> Result<Self, ImageError> {
        let raw: HashMap<String, Vec<f32>> = read_json(path, "embedder")?;
        let mut entries: Vec<_> = raw.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Self::new(entries)
    }

    /// Every embedding, ordered by image ref.
    pub fn pool(&self) -> Vec<ImageEmbedding> {
        let mut v: Vec<_> = self.table.values().cloned().collect();
        v.sort_by(|a, b| a.image_ref.cmp(&b.image_ref));
        v
    }
}

impl ImageEmbedder for LookupEmbedder {
    fn embed(&self, image_ref: &str) -> Result<ImageEmbedding, ImageError> {
        self.table.get(image_ref).cloned().ok_or_else(|| ImageError::Backend {
            backend: "embedder",
            message: format!("no embedding for {image_ref}"),
        })
    }
}

/// Detections keyed by image ref. Unknown refs detect nothing.
#[derive(Debug, Clone, Default)]
pub struct FixtureDetector {
    table: HashMap<String, Vec<Detection>>,
}

impl FixtureDetector {
    pub fn new<I, K>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<Detection>)>,
        K: Into<String>,
    {
        Self { table: entries.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    /// JSON object `{"image_ref": [{"class_label", "bbox": {x,y,w,h}, "score"}, ...]}`.
    pub fn from_json(path: &Path) -> Result<Self, ImageError> {
        let table: HashMap<String, Vec<Detection>> = read_json(path, "detector")?;
        for (k, dets) in &table {
            if let Some(d) = dets.iter().find(|d| d.bbox.w == 0 || d.bbox.h == 0 || !(0.0..=1.0).contains(&d.score)) {
                return Err(ImageError::Backend {
                    backend: "detector",
                    message: format!("{k}: invalid detection {d:?}"),
                });
            }
        }
        Ok(Self { table })
    }
}

impl ObjectDetector for FixtureDetector {
    fn detect(&self, image_ref: &str) -> Result<ObjectDetection, ImageError> {
        Ok(ObjectDetection {
            image_ref: image_ref.to_string(),
            objects: self.table.get(image_ref).cloned().unwrap_or_default(),
        })
    }
}
