//! Image-side perturbations: similar-image replacement (I-1), object
//! masking (I-2) and object copy-move (I-3).
//!
//! Replacement candidates are the top-n images by embedding cosine
//! similarity; among them the one with the lowest semantic overlap
//!
//! ```text
//! s_op = alpha * |O_I ∩ O_I'| / |O_I'| + |C_I ∩ O_I'| / |O_I'|
//! ```
//!
//! is chosen, where `O` are detected object classes and `C_I` the concepts
//! named by the question and answers.

mod backend;
mod manip;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use backend::{FixtureDetector, ImageEmbedder, LookupEmbedder, ObjectDetector};
pub use manip::{admissible_windows, copy_move_object, mask_object, CopyMoveConfig};

use crate::data::{is_binary_answer, AnswerType, Params, PerturbOutcome, PerturbationKind, PerturbationRecord, VqaInstance};
use crate::normalize::{inflection_stem, is_punct_token, tokenize};
use crate::text::{detect_nouns, PosTagger};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_TOP_N: usize = 50;
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("embedding dimension mismatch: expected {expected}, got {got} for {image_ref}")]
    DimensionMismatch { expected: usize, got: usize, image_ref: String },
    #[error("zero-norm embedding for {0}")]
    ZeroVector(String),
    #[error("overlap score undefined: candidate has no detected objects")]
    UndefinedScore,
    #[error("no candidate with a defined overlap score")]
    NoSelectableCandidate,
    #[error("bbox {bbox:?} exceeds image bounds {width}x{height}")]
    OutOfBounds { bbox: BBox, width: u32, height: u32 },
    #[error("no admissible source region for copy-move")]
    NoSourceRegion,
    #[error("{backend} backend: {message}")]
    Backend { backend: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Text(#[from] crate::text::TextError),
}

/// Axis-aligned box `(x, y, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        (self.x as u64) < other.right()
            && (other.x as u64) < self.right()
            && (self.y as u64) < other.bottom()
            && (other.y as u64) < self.bottom()
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && (x as u64) < self.right() && y >= self.y && (y as u64) < self.bottom()
    }

    pub fn check_within(&self, width: u32, height: u32) -> Result<(), ImageError> {
        if self.w == 0 || self.h == 0 || self.right() > width as u64 || self.bottom() > height as u64 {
            return Err(ImageError::OutOfBounds { bbox: *self, width, height });
        }
        Ok(())
    }
}

/// Unit-normalised image feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEmbedding {
    pub image_ref: String,
    pub vector: Vec<f32>,
}

impl ImageEmbedding {
    pub fn new(image_ref: impl Into<String>, vector: Vec<f32>) -> Result<Self, ImageError> {
        let image_ref = image_ref.into();
        let norm = vector.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ImageError::ZeroVector(image_ref));
        }
        Ok(Self { image_ref, vector: vector.iter().map(|x| (*x as f64 / norm) as f32).collect() })
    }

    pub fn cosine(&self, other: &ImageEmbedding) -> f64 {
        self.vector.iter().zip(&other.vector).map(|(a, b)| *a as f64 * *b as f64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: String,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub image_ref: String,
    pub objects: Vec<Detection>,
}

impl ObjectDetection {
    /// Lowercased class labels of objects at or above `threshold`.
    pub fn classes(&self, threshold: f64) -> BTreeSet<String> {
        self.objects.iter().filter(|o| o.score >= threshold).map(|o| o.class_label.to_lowercase()).collect()
    }
}

/// Lowercased, deduplicated concept tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConceptSet(BTreeSet<String>);

impl ConceptSet {
    pub fn new<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(items.into_iter().map(|s| s.as_ref().trim().to_lowercase()).filter(|s| !s.is_empty()).collect())
    }

    pub fn contains(&self, s: &str) -> bool {
        self.0.contains(s)
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.0.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<String> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True if `label` names one of the concepts, ignoring plural/singular.
    pub fn matches(&self, label: &str) -> bool {
        let stem = inflection_stem(label.trim());
        self.0.iter().any(|c| inflection_stem(c) == stem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapScore {
    pub value: f64,
    pub alpha: f64,
}

/// Top-`n` pool images by cosine similarity to `anchor`, descending, ties by
/// `image_ref`. Entries sharing the anchor's `image_ref` are skipped.
pub fn rank_candidates(anchor: &ImageEmbedding, pool: &[ImageEmbedding], n: usize) -> Result<Vec<(String, f64)>, ImageError> {
    let mut scored = Vec::with_capacity(pool.len());
    for e in pool {
        if e.vector.len() != anchor.vector.len() {
            return Err(ImageError::DimensionMismatch {
                expected: anchor.vector.len(),
                got: e.vector.len(),
                image_ref: e.image_ref.clone(),
            });
        }
        if e.image_ref != anchor.image_ref {
            scored.push((e.image_ref.clone(), anchor.cosine(e)));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored)
}

/// Nouns of the question plus every answer token (and each multi-word
/// answer as a whole).
pub fn extract_concepts(question: &str, answers: &[String], tagger: &dyn PosTagger) -> Result<ConceptSet, ImageError> {
    let mut items: Vec<String> = detect_nouns(question, tagger)?.into_iter().map(|n| n.token).collect();
    for a in answers {
        let toks: Vec<String> = tokenize(a).into_iter().filter(|t| !is_punct_token(t)).collect();
        if toks.len() > 1 {
            items.push(toks.join(" "));
        }
        items.extend(toks);
    }
    Ok(ConceptSet::new(items))
}

pub fn overlap_score(
    anchor_objects: &BTreeSet<String>,
    candidate_objects: &BTreeSet<String>,
    concepts: &ConceptSet,
    alpha: f64,
) -> Result<OverlapScore, ImageError> {
    if candidate_objects.is_empty() {
        return Err(ImageError::UndefinedScore);
    }
    let denom = candidate_objects.len() as f64;
    let shared_objects = anchor_objects.intersection(candidate_objects).count() as f64;
    let shared_concepts = concepts.as_set().intersection(candidate_objects).count() as f64;
    Ok(OverlapScore { value: alpha * shared_objects / denom + shared_concepts / denom, alpha })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replacement {
    pub image_ref: String,
    /// Position in the ranked candidate list.
    pub rank: usize,
    pub score: OverlapScore,
}

/// Argmin of the overlap score over ranked candidates; earlier rank wins
/// ties. Candidates without detected objects are excluded.
pub fn select_replacement(
    ranked: &[String],
    candidate_objects: &HashMap<String, BTreeSet<String>>,
    anchor_objects: &BTreeSet<String>,
    concepts: &ConceptSet,
    alpha: f64,
) -> Result<Replacement, ImageError> {
    let mut best: Option<Replacement> = None;
    for (rank, image_ref) in ranked.iter().enumerate() {
        let Some(objs) = candidate_objects.get(image_ref) else { continue };
        let Ok(score) = overlap_score(anchor_objects, objs, concepts, alpha) else { continue };
        if best.as_ref().is_none_or(|b| score.value < b.score.value) {
            best = Some(Replacement { image_ref: image_ref.clone(), rank, score });
        }
    }
    best.ok_or(ImageError::NoSelectableCandidate)
}

/// Detections whose class names a concept, at or above `threshold`.
pub fn relevant_objects<'a>(detection: &'a ObjectDetection, concepts: &ConceptSet, threshold: f64) -> Vec<&'a Detection> {
    detection.objects.iter().filter(|o| o.score >= threshold && concepts.matches(&o.class_label)).collect()
}

/// Load an image as 8-bit RGB, or RGBA when the source has alpha.
pub fn load_image(path: &Path) -> Result<DynamicImage, ImageError> {
    let img = image::open(path).map_err(|source| ImageError::Io { path: path.to_path_buf(), source })?;
    Ok(if img.color().has_alpha() { DynamicImage::ImageRgba8(img.to_rgba8()) } else { DynamicImage::ImageRgb8(img.to_rgb8()) })
}

pub fn save_png(image: &DynamicImage, path: &Path) -> Result<(), ImageError> {
    image.save_with_format(path, image::ImageFormat::Png).map_err(|source| ImageError::Io { path: path.to_path_buf(), source })
}

pub fn mask_dynamic(image: &DynamicImage, bbox: BBox) -> Result<DynamicImage, ImageError> {
    Ok(match image {
        DynamicImage::ImageRgba8(b) => DynamicImage::ImageRgba8(mask_object(b, bbox)?),
        DynamicImage::ImageRgb8(b) => DynamicImage::ImageRgb8(mask_object(b, bbox)?),
        other => DynamicImage::ImageRgb8(mask_object(&other.to_rgb8(), bbox)?),
    })
}

pub fn copy_move_dynamic(
    image: &DynamicImage,
    target: BBox,
    relevant: &[BBox],
    seed: u64,
    config: &CopyMoveConfig,
) -> Result<(DynamicImage, BBox), ImageError> {
    Ok(match image {
        DynamicImage::ImageRgba8(b) => {
            let (out, src) = copy_move_object(b, target, relevant, seed, config)?;
            (DynamicImage::ImageRgba8(out), src)
        }
        DynamicImage::ImageRgb8(b) => {
            let (out, src) = copy_move_object(b, target, relevant, seed, config)?;
            (DynamicImage::ImageRgb8(out), src)
        }
        other => {
            let (out, src) = copy_move_object(&other.to_rgb8(), target, relevant, seed, config)?;
            (DynamicImage::ImageRgb8(out), src)
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImagePerturbConfig {
    pub alpha: f64,
    pub top_n: usize,
    pub detection_threshold: f64,
    /// Maximum I-2 / I-3 records per instance.
    pub object_cap: usize,
    pub seed: u64,
    pub image_replace: bool,
    pub object_mask: bool,
    pub copy_move: bool,
    pub copy_move_windows: CopyMoveConfig,
    /// Directory image refs are resolved against.
    pub image_root: PathBuf,
    /// Directory perturbed PNGs are written to; records store paths
    /// relative to it.
    pub output_dir: PathBuf,
}

impl Default for ImagePerturbConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            top_n: DEFAULT_TOP_N,
            detection_threshold: DEFAULT_DETECTION_THRESHOLD,
            object_cap: 1,
            seed: 0,
            image_replace: true,
            object_mask: true,
            copy_move: true,
            copy_move_windows: CopyMoveConfig::default(),
            image_root: PathBuf::from("."),
            output_dir: PathBuf::from("perturbed"),
        }
    }
}

#[derive(Clone, Copy)]
pub struct ImageBackends<'a> {
    pub embedder: &'a dyn ImageEmbedder,
    pub detector: &'a dyn ObjectDetector,
    pub tagger: &'a dyn PosTagger,
    /// Precomputed embeddings of every replacement candidate.
    pub pool: &'a [ImageEmbedding],
}

/// Per-instance seed derived from the run seed and the instance id.
pub fn instance_seed(seed: u64, id: &str, salt: usize) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{id}:{salt}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn stemmed(set: &BTreeSet<String>) -> BTreeSet<String> {
    set.iter().map(|s| inflection_stem(s)).collect()
}

/// Run I-1, I-2 and I-3 on one instance.
pub fn perturb_image(instance: &VqaInstance, config: &ImagePerturbConfig, backends: ImageBackends<'_>) -> PerturbOutcome {
    let mut out = PerturbOutcome::default();
    let id = &instance.id;
    if instance.answer_type == AnswerType::YesNo || instance.answers.iter().any(|a| is_binary_answer(a)) {
        for kind in [PerturbationKind::ImageReplace, PerturbationKind::ObjectMask, PerturbationKind::CopyMove] {
            out.skip(id, kind, "binary answer");
        }
        return out;
    }
    let concepts = match extract_concepts(&instance.question, &instance.answers, backends.tagger) {
        Ok(c) => c,
        Err(e) => {
            for kind in [PerturbationKind::ImageReplace, PerturbationKind::ObjectMask, PerturbationKind::CopyMove] {
                out.skip(id, kind, format!("concepts: {e}"));
            }
            return out;
        }
    };
    let anchor_det = match backends.detector.detect(&instance.image_ref) {
        Ok(d) => d,
        Err(e) => {
            for kind in [PerturbationKind::ImageReplace, PerturbationKind::ObjectMask, PerturbationKind::CopyMove] {
                out.skip(id, kind, e.to_string());
            }
            return out;
        }
    };
    if config.image_replace {
        image_replace(instance, config, backends, &concepts, &anchor_det, &mut out);
    }
    if config.object_mask || config.copy_move {
        object_edits(instance, config, &concepts, &anchor_det, &mut out);
    }
    out
}

fn image_replace(
    instance: &VqaInstance,
    config: &ImagePerturbConfig,
    b: ImageBackends<'_>,
    concepts: &ConceptSet,
    anchor_det: &ObjectDetection,
    out: &mut PerturbOutcome,
) {
    let kind = PerturbationKind::ImageReplace;
    let id = &instance.id;
    let anchor = match b.embedder.embed(&instance.image_ref) {
        Ok(a) => a,
        Err(e) => return out.skip(id, kind, e.to_string()),
    };
    let ranked = match rank_candidates(&anchor, b.pool, config.top_n) {
        Ok(r) => r,
        Err(e) => return out.skip(id, kind, e.to_string()),
    };
    let mut candidate_objects = HashMap::new();
    for (image_ref, _) in &ranked {
        match b.detector.detect(image_ref) {
            Ok(d) => {
                candidate_objects.insert(image_ref.clone(), stemmed(&d.classes(config.detection_threshold)));
            }
            Err(e) => log::warn!("{id}: detector failed on candidate {image_ref}: {e}"),
        }
    }
    let refs: Vec<String> = ranked.iter().map(|(r, _)| r.clone()).collect();
    let anchor_objects = stemmed(&anchor_det.classes(config.detection_threshold));
    let concept_stems = ConceptSet::new(concepts.iter().map(|c| inflection_stem(c)));
    match select_replacement(&refs, &candidate_objects, &anchor_objects, &concept_stems, config.alpha) {
        Ok(r) => {
            let params = Params::from([
                ("alpha".to_string(), json!(config.alpha)),
                ("top_n".to_string(), json!(config.top_n)),
                ("candidate_rank".to_string(), json!(r.rank)),
                ("cosine".to_string(), json!(ranked[r.rank].1)),
                ("s_op".to_string(), json!(r.score.value)),
                ("detection_threshold".to_string(), json!(config.detection_threshold)),
            ]);
            out.records.push(PerturbationRecord::image(id, kind, r.image_ref, params));
        }
        Err(e) => out.skip(id, kind, e.to_string()),
    }
}

fn object_edits(
    instance: &VqaInstance,
    config: &ImagePerturbConfig,
    concepts: &ConceptSet,
    anchor_det: &ObjectDetection,
    out: &mut PerturbOutcome,
) {
    let id = &instance.id;
    let kinds: Vec<PerturbationKind> = [(config.object_mask, PerturbationKind::ObjectMask), (config.copy_move, PerturbationKind::CopyMove)]
        .into_iter()
        .filter_map(|(on, k)| on.then_some(k))
        .collect();
    let mut relevant = relevant_objects(anchor_det, concepts, config.detection_threshold);
    if relevant.is_empty() {
        for &kind in &kinds {
            out.skip(id, kind, "no detected object matches the question/answer concepts");
        }
        return;
    }
    relevant.sort_by(|a, b| b.score.total_cmp(&a.score));
    let blocked: Vec<BBox> = relevant.iter().map(|d| d.bbox).collect();
    let path = config.image_root.join(&instance.image_ref);
    let image = match load_image(&path) {
        Ok(i) => i,
        Err(e) => {
            for &kind in &kinds {
                out.skip(id, kind, e.to_string());
            }
            return;
        }
    };
    let stem = sanitize(id);
    for (j, det) in relevant.iter().take(config.object_cap).enumerate() {
        for &kind in &kinds {
            let (result, extra) = match kind {
                PerturbationKind::ObjectMask => (mask_dynamic(&image, det.bbox), Params::new()),
                _ => {
                    let seed = instance_seed(config.seed, id, j);
                    match copy_move_dynamic(&image, det.bbox, &blocked, seed, &config.copy_move_windows) {
                        Ok((img, src)) => (
                            Ok(img),
                            Params::from([
                                ("source_bbox".to_string(), json!(src)),
                                ("seed".to_string(), json!(seed)),
                                ("filter".to_string(), json!("bilinear")),
                                ("scales".to_string(), json!(config.copy_move_windows.scales)),
                            ]),
                        ),
                        Err(e) => (Err(e), Params::new()),
                    }
                }
            };
            let img = match result {
                Ok(i) => i,
                Err(e) => {
                    out.skip(id, kind, e.to_string());
                    continue;
                }
            };
            let suffix = if kind == PerturbationKind::ObjectMask { "mask" } else { "copymove" };
            let rel = format!("{stem}_{suffix}_{j}.png");
            if let Err(e) = save_png(&img, &config.output_dir.join(&rel)) {
                out.skip(id, kind, e.to_string());
                continue;
            }
            let mut params = Params::from([
                ("bbox".to_string(), json!(det.bbox)),
                ("class_label".to_string(), json!(det.class_label)),
                ("detection_score".to_string(), json!(det.score)),
            ]);
            params.extend(extra);
            out.records.push(PerturbationRecord::image(id, kind, rel, params));
        }
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::RuleTagger;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overlap_hand_examples() {
        let s = overlap_score(&set(&["cat", "sink"]), &set(&["cat", "mirror"]), &ConceptSet::new(["cat"]), 1.0).unwrap();
        assert_eq!(s.value, 1.0);
        let s = overlap_score(&set(&["a"]), &set(&["b"]), &ConceptSet::new(["c"]), 1.0).unwrap();
        assert_eq!(s.value, 0.0);
        let s = overlap_score(&set(&["x", "y", "z"]), &set(&["x", "y"]), &ConceptSet::new(["x", "y"]), 2.5).unwrap();
        assert_eq!(s.value, 3.5);
        assert!(matches!(overlap_score(&set(&["a"]), &set(&[]), &ConceptSet::default(), 1.0), Err(ImageError::UndefinedScore)));
    }

    fn emb(r: &str, v: &[f32]) -> ImageEmbedding {
        ImageEmbedding::new(r, v.to_vec()).unwrap()
    }

    #[test]
    fn ranking() {
        let anchor = emb("a", &[1.0, 0.0]);
        let pool = vec![emb("orth", &[0.0, 1.0]), emb("dup", &[2.0, 0.0]), emb("near", &[1.0, 0.5]), emb("a", &[1.0, 0.0])];
        let r = rank_candidates(&anchor, &pool, 50).unwrap();
        let refs: Vec<_> = r.iter().map(|(x, _)| x.as_str()).collect();
        assert_eq!(refs, vec!["dup", "near", "orth"]);
        assert!((r[0].1 - 1.0).abs() < 1e-6);
        assert_eq!(rank_candidates(&anchor, &pool, 1).unwrap().len(), 1);
        assert!(matches!(rank_candidates(&anchor, &[emb("z", &[1.0, 0.0, 0.0])], 5), Err(ImageError::DimensionMismatch { .. })));
    }

    #[test]
    fn concepts_from_question_and_answers() {
        let t = RuleTagger::new();
        let c = extract_concepts("What is the cat on?", &["sink".into()], &t).unwrap();
        assert_eq!(c, ConceptSet::new(["cat", "sink"]));
        let c = extract_concepts("What is the cat on?", &[], &t).unwrap();
        assert_eq!(c, ConceptSet::new(["cat"]));
        let c = extract_concepts("How many dogs?", &["2".into()], &t).unwrap();
        assert!(c.contains("2") && c.contains("dogs"));
    }

    #[test]
    fn replacement_argmin_and_ties() {
        let objs = HashMap::from([
            ("hi".to_string(), set(&["cat", "sink"])),
            ("lo".to_string(), set(&["towel", "sink", "tub", "mirror", "cat"])),
            ("empty".to_string(), set(&[])),
        ]);
        let anchor = set(&["cat"]);
        let c = ConceptSet::new(["cat"]);
        let r = select_replacement(&["empty".into(), "hi".into(), "lo".into()], &objs, &anchor, &c, 1.0).unwrap();
        assert_eq!((r.image_ref.as_str(), r.rank), ("lo", 2));
        let tie = HashMap::from([("x".to_string(), set(&["a", "b"])), ("y".to_string(), set(&["a", "c"]))]);
        let r = select_replacement(&["y".into(), "x".into()], &tie, &set(&["a"]), &ConceptSet::default(), 1.0).unwrap();
        assert_eq!(r.image_ref, "y");
        assert!(matches!(
            select_replacement(&["empty".into()], &objs, &anchor, &c, 1.0),
            Err(ImageError::NoSelectableCandidate)
        ));
    }

    #[test]
    fn relevant_objects_match_plurals() {
        let d = ObjectDetection {
            image_ref: "i".into(),
            objects: vec![
                Detection { class_label: "cat".into(), bbox: BBox::new(0, 0, 2, 2), score: 0.9 },
                Detection { class_label: "floor".into(), bbox: BBox::new(0, 2, 4, 2), score: 0.9 },
                Detection { class_label: "dogs".into(), bbox: BBox::new(2, 0, 2, 2), score: 0.8 },
                Detection { class_label: "cat".into(), bbox: BBox::new(1, 1, 1, 1), score: 0.2 },
            ],
        };
        let r = relevant_objects(&d, &ConceptSet::new(["cat"]), 0.5);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].bbox, BBox::new(0, 0, 2, 2));
        assert_eq!(relevant_objects(&d, &ConceptSet::new(["dog"]), 0.5).len(), 1);
        assert!(relevant_objects(&d, &ConceptSet::new(["zebra"]), 0.5).is_empty());
    }

    #[test]
    fn bbox_geometry() {
        let a = BBox::new(0, 0, 2, 2);
        assert!(a.intersects(&BBox::new(1, 1, 2, 2)));
        assert!(!a.intersects(&BBox::new(2, 0, 2, 2)));
        assert!(a.check_within(2, 2).is_ok());
        assert!(BBox::new(0, 0, 0, 1).check_within(5, 5).is_err());
    }
}
