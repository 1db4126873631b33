//! Run configuration.
//!
//! Values come from, in increasing precedence: built-in defaults, the TOML
//! file given with `--config`, environment variables (backend endpoints and
//! fixtures only) and command-line flags. The effective result is echoed
//! into every run manifest, and a manifest can be fed back as `--config`.

use std::path::{Path, PathBuf};

use abstain_core::eval::Protocol;
use abstain_core::image::{CopyMoveConfig, DEFAULT_ALPHA, DEFAULT_DETECTION_THRESHOLD, DEFAULT_TOP_N};
use abstain_core::selective::Variant;
use abstain_core::text::{DEFAULT_EPSILON, DEFAULT_NEIGHBORS};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub perturb: PerturbSettings,
    pub backends: Backends,
    pub annotate: AnnotateSettings,
    pub select: SelectSettings,
    pub eval: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus JSONL of VQA instances.
    pub corpus: Option<PathBuf>,
    /// Root that instance image refs are resolved against.
    pub images: PathBuf,
    /// Output directory; every command writes its artifacts here.
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { corpus: None, images: PathBuf::from("."), output: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSettings {
    /// Largest allowed rise in total negative log-likelihood.
    pub epsilon: f64,
    /// Embedding neighbours considered per anchor noun.
    pub neighbors: usize,
    pub alpha: f64,
    pub top_n: usize,
    pub detection_threshold: f64,
    /// Masked / copy-moved images per instance.
    pub object_cap: usize,
    pub seed: u64,
    pub word_replace: bool,
    pub negation: bool,
    pub image_replace: bool,
    pub object_mask: bool,
    pub copy_move: bool,
    pub copy_move_scales: Vec<f64>,
    pub copy_move_stride: Option<u32>,
}

impl Default for PerturbSettings {
    fn default() -> Self {
        let cm = CopyMoveConfig::default();
        Self {
            epsilon: DEFAULT_EPSILON,
            neighbors: DEFAULT_NEIGHBORS,
            alpha: DEFAULT_ALPHA,
            top_n: DEFAULT_TOP_N,
            detection_threshold: DEFAULT_DETECTION_THRESHOLD,
            object_cap: 1,
            seed: 0,
            word_replace: true,
            negation: true,
            image_replace: true,
            object_mask: true,
            copy_move: true,
            copy_move_scales: cm.scales,
            copy_move_stride: cm.stride,
        }
    }
}

/// Backend fixtures and endpoints. Unset fixtures fall back to the built-in
/// stubs: rule tagger/parser, unigram scorer fitted on the corpus, and empty
/// embedding/detection tables (which make the dependent perturbations skip).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    /// Whitespace-separated word vectors, one word per line.
    pub word_embeddings: Option<PathBuf>,
    /// `word<TAB>TAG` overrides for the rule tagger.
    pub pos_tags: Option<PathBuf>,
    /// JSON object mapping text to total NLL.
    pub lm_scores: Option<PathBuf>,
    /// HTTP scorer; takes precedence over `lm_scores`.
    pub lm_endpoint: Option<String>,
    /// JSON object mapping image ref to embedding vector.
    pub image_embeddings: Option<PathBuf>,
    /// JSON object mapping image ref to detections.
    pub detections: Option<PathBuf>,
    pub model_endpoint: Option<String>,
    pub timeout_secs: u64,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            word_embeddings: None,
            pos_tags: None,
            lm_scores: None,
            lm_endpoint: None,
            image_embeddings: None,
            detections: None,
            model_endpoint: None,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSettings {
    /// Seeds the random answer option of each task.
    pub seed: u64,
    pub required_responses: usize,
    pub lease_secs: u64,
    pub addr: String,
}

impl Default for AnnotateSettings {
    fn default() -> Self {
        Self { seed: 0, required_responses: 3, lease_secs: 600, addr: "127.0.0.1:8080".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSettings {
    pub variant: Variant,
    /// Fixed threshold for `infer`; calibration output wins when given.
    pub theta: Option<f64>,
    /// Calibration grid; empty means every observed confidence plus one
    /// point beyond each end.
    pub grid: Vec<f64>,
    /// Answer vocabulary size; 0 infers it from the training labels.
    pub n_answers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for SelectSettings {
    fn default() -> Self {
        Self {
            variant: Variant::Ent,
            theta: None,
            grid: Vec::new(),
            n_answers: 0,
            epochs: 300,
            learning_rate: 0.5,
            batch_size: 16,
            l2: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub protocols: Vec<Protocol>,
    pub n_answerable: usize,
    pub n_unanswerable: usize,
    pub shot_seed: u64,
    /// Seeds the multiple-choice option shuffle.
    pub seed: u64,
    pub max_in_flight: usize,
    pub max_retries: usize,
    /// `echo`, `empty`, `fixture:<path>` or `http`.
    pub client: String,
    pub model_name: Option<String>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            protocols: Protocol::ALL.to_vec(),
            n_answerable: 0,
            n_unanswerable: 0,
            shot_seed: 0,
            seed: 0,
            max_in_flight: 4,
            max_retries: 2,
            client: "echo".into(),
            model_name: None,
        }
    }
}

impl RunConfig {
    /// Load a TOML config, or the `config` object of a run manifest (JSON).
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value =
                serde_json::from_str(&raw).with_context(|| format!("parsing manifest {}", path.display()))?;
            let cfg = v.get_mut("config").map(serde_json::Value::take).unwrap_or(v);
            return serde_json::from_value(cfg).with_context(|| format!("config in {}", path.display()));
        }
        toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let p = &self.perturb;
        if !p.epsilon.is_finite() {
            bail!("perturb.epsilon must be finite");
        }
        if !p.alpha.is_finite() || p.alpha < 0.0 {
            bail!("perturb.alpha must be a non-negative number");
        }
        if !(0.0..=1.0).contains(&p.detection_threshold) {
            bail!("perturb.detection_threshold must lie in [0, 1]");
        }
        if p.copy_move_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            bail!("perturb.copy_move_scales must be positive");
        }
        if self.annotate.required_responses < 3 {
            bail!("annotate.required_responses must be at least 3");
        }
        if self.eval.max_in_flight == 0 {
            bail!("eval.max_in_flight must be positive");
        }
        if self.select.batch_size == 0 {
            bail!("select.batch_size must be positive");
        }
        Ok(())
    }

    pub fn copy_move(&self) -> CopyMoveConfig {
        CopyMoveConfig { scales: self.perturb.copy_move_scales.clone(), stride: self.perturb.copy_move_stride }
    }
}
