//! Selective prediction: an answer head `f` paired with a selection function
//! `g` that either returns `f`'s answer or abstains.
//!
//! Three selection functions are provided:
//!
//! * `CLS` - a binary answerability head, `sigmoid(w . x + b)`; answer iff
//!   the confidence is at least `theta`.
//! * `ENT` - entropy of the answer distribution (nats); abstain iff the
//!   entropy is greater than `theta`.
//! * `MAXLOGIT` - the largest pre-softmax logit; answer iff it is at least
//!   `theta`.

mod io;
mod train;

use serde::{Deserialize, Serialize};

pub use io::{
    load_heads, read_features, read_labels, save_heads, write_features, write_labels, FeatureManifest, HeadsManifest,
    LabelRecord, FEATURE_FORMAT_VERSION, HEADS_FORMAT_VERSION,
};
pub use train::{fit_selective, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum SelectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("answer set must not be empty")]
    EmptyAnswerSet,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{features} features but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("answer id {id} outside answer set of size {size}")]
    AnswerOutOfRange { id: usize, size: usize },
    #[error("variant {0:?} needs a binary head")]
    MissingBinaryHead(Variant),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, SelectiveError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedFeature {
    pub id: String,
    pub x: Vec<f64>,
}

impl FusedFeature {
    pub fn new(id: impl Into<String>, x: Vec<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SelectiveError::NonFinite("feature"));
        }
        Ok(Self { id: id.into(), x })
    }
}

/// Combines image and text encodings into one feature vector.
pub trait Fusion: Send + Sync {
    fn fuse(&self, image: &[f64], text: &[f64]) -> Result<Vec<f64>>;
}

/// `[image ; text]`, optionally checking the input dimensions.
#[derive(Debug, Clone, Copy, Default)]
pub struct Concat {
    pub dims: Option<(usize, usize)>,
}

impl Fusion for Concat {
    fn fuse(&self, image: &[f64], text: &[f64]) -> Result<Vec<f64>> {
        if let Some((dv, dl)) = self.dims {
            if image.len() != dv {
                return Err(SelectiveError::DimensionMismatch { expected: dv, got: image.len() });
            }
            if text.len() != dl {
                return Err(SelectiveError::DimensionMismatch { expected: dl, got: text.len() });
            }
        }
        Ok(image.iter().chain(text).copied().collect())
    }
}

pub fn fuse(id: &str, image: &[f64], text: &[f64], fusion: &dyn Fusion) -> Result<FusedFeature> {
    FusedFeature::new(id, fusion.fuse(image, text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub probs: Vec<f64>,
    /// Pre-softmax scores, when the distribution came from a head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
}

impl AnswerDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(SelectiveError::EmptyAnswerSet);
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SelectiveError::InvalidDistribution("entries must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(SelectiveError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { probs, logits: None })
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(SelectiveError::EmptyAnswerSet);
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(SelectiveError::NonFinite("logits"));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Ok(Self { probs: exps.iter().map(|e| e / z).collect(), logits: Some(logits) })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; the lowest id wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// `-sum p ln p`, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Largest logit, or the largest log-probability when no logits are
    /// attached.
    pub fn max_logit(&self) -> f64 {
        match &self.logits {
            Some(l) => l.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            None => self.probs.iter().map(|p| p.ln()).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Affine map to one score per answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    /// Row-major `n_out x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub dim: usize,
}

impl LinearHead {
    pub fn zeros(n_out: usize, dim: usize) -> Self {
        Self { weights: vec![0.0; n_out * dim], bias: vec![0.0; n_out], dim }
    }

    pub fn n_out(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(SelectiveError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self
            .bias
            .iter()
            .enumerate()
            .map(|(j, b)| b + self.weights[j * self.dim..(j + 1) * self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHead {
    pub w: Vec<f64>,
    pub b: f64,
}

impl BinaryHead {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(SelectiveError::DimensionMismatch { expected: self.w.len(), got: x.len() });
        }
        Ok(self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict_answer(feature: &FusedFeature, head: &LinearHead) -> Result<AnswerDistribution> {
    AnswerDistribution::from_logits(head.logits(&feature.x)?)
}

/// Answerability confidence in (0, 1); higher means more answerable.
pub fn confidence_cls(feature: &FusedFeature, head: &BinaryHead) -> Result<f64> {
    Ok(sigmoid(head.score(&feature.x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntMode {
    Entropy,
    MaxLogit,
}

pub fn confidence_ent(dist: &AnswerDistribution, mode: EntMode) -> f64 {
    match mode {
        EntMode::Entropy => dist.entropy(),
        EntMode::MaxLogit => dist.max_logit(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "CLS", alias = "cls")]
    Cls,
    #[serde(rename = "ENT", alias = "ent")]
    Ent,
    #[serde(rename = "MAXLOGIT", alias = "maxlogit", alias = "max-logit")]
    MaxLogit,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Cls, Variant::Ent, Variant::MaxLogit];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cls => "CLS",
            Variant::Ent => "ENT",
            Variant::MaxLogit => "MAXLOGIT",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "CLS" => Ok(Variant::Cls),
            "ENT" => Ok(Variant::Ent),
            "MAXLOGIT" => Ok(Variant::MaxLogit),
            _ => Err(format!("unknown variant {s:?} (expected CLS, ENT or MAXLOGIT)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveConfig {
    pub variant: Variant,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Answer(usize),
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveOutput {
    pub result: Prediction,
    pub confidence: f64,
}

impl SelectiveOutput {
    pub fn abstained(&self) -> bool {
        self.result == Prediction::Abstain
    }
}

/// Apply the selection rule. For `ENT`, `confidence` is the entropy.
pub fn select(dist: &AnswerDistribution, confidence: f64, config: &SelectiveConfig) -> SelectiveOutput {
    let answer = match config.variant {
        Variant::Cls | Variant::MaxLogit => confidence >= config.theta,
        Variant::Ent => confidence <= config.theta,
    };
    SelectiveOutput { result: if answer { Prediction::Answer(dist.argmax()) } else { Prediction::Abstain }, confidence }
}

/// Training target for unanswerable questions: `1/n` everywhere.
pub fn uniform_target(answer_set_size: usize) -> Result<AnswerDistribution> {
    if answer_set_size == 0 {
        return Err(SelectiveError::EmptyAnswerSet);
    }
    Ok(AnswerDistribution { probs: vec![1.0 / answer_set_size as f64; answer_set_size], logits: None })
}

/// Trained answer head plus, for `CLS`, the binary answerability head.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveHeads {
    pub variant: Variant,
    pub answer: LinearHead,
    pub binary: Option<BinaryHead>,
}

impl SelectiveHeads {
    pub fn dim(&self) -> usize {
        self.answer.dim
    }

    pub fn n_answers(&self) -> usize {
        self.answer.n_out()
    }

    /// Distribution and selection-function score for one feature.
    pub fn score(&self, feature: &FusedFeature) -> Result<(AnswerDistribution, f64)> {
        let dist = predict_answer(feature, &self.answer)?;
        let conf = match self.variant {
            Variant::Cls => {
                let head = self.binary.as_ref().ok_or(SelectiveError::MissingBinaryHead(Variant::Cls))?;
                confidence_cls(feature, head)?
            }
            Variant::Ent => confidence_ent(&dist, EntMode::Entropy),
            Variant::MaxLogit => confidence_ent(&dist, EntMode::MaxLogit),
        };
        Ok((dist, conf))
    }

    pub fn infer(&self, feature: &FusedFeature, theta: f64) -> Result<SelectiveOutput> {
        let (dist, conf) = self.score(feature)?;
        Ok(select(&dist, conf, &SelectiveConfig { variant: self.variant, theta }))
    }
}

/// One feature with its gold label; `None` marks an unanswerable question.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeature {
    pub feature: FusedFeature,
    pub answer: Option<usize>,
}

/// A scored validation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub dist: AnswerDistribution,
    pub confidence: f64,
    pub answer: Option<usize>,
}

/// Correct when it answers the gold answer, or abstains on an
/// unanswerable question.
pub fn is_correct(out: &SelectiveOutput, gold: Option<usize>) -> bool {
    match (out.result, gold) {
        (Prediction::Abstain, None) => true,
        (Prediction::Answer(a), Some(g)) => a == g,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub theta: f64,
    pub accuracy: f64,
    /// `(theta, accuracy)` for every grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Open-set accuracy at every grid point; returns the best `theta`, the
/// smallest one on ties.
pub fn calibrate_scored(scored: &[Scored], variant: Variant, grid: &[f64]) -> Result<Calibration> {
    if grid.is_empty() {
        return Err(SelectiveError::Empty("threshold grid"));
    }
    if scored.is_empty() {
        return Err(SelectiveError::Empty("validation set"));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(SelectiveError::NonFinite("threshold grid"));
    }
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .map(|&theta| {
            let cfg = SelectiveConfig { variant, theta };
            let correct = scored.iter().filter(|s| is_correct(&select(&s.dist, s.confidence, &cfg), s.answer)).count();
            (theta, correct as f64 / scored.len() as f64)
        })
        .collect();
    let (theta, accuracy) = curve
        .iter()
        .copied()
        .reduce(|best, c| if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) { c } else { best })
        .expect("grid non-empty");
    Ok(Calibration { theta, accuracy, curve })
}

pub fn calibrate_threshold(heads: &SelectiveHeads, validation: &[LabeledFeature], grid: &[f64]) -> Result<Calibration> {
    let scored = validation
        .iter()
        .map(|l| {
            let (dist, confidence) = heads.score(&l.feature)?;
            Ok(Scored { dist, confidence, answer: l.answer })
        })
        .collect::<Result<Vec<_>>>()?;
    calibrate_scored(&scored, heads.variant, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(p: &[f64]) -> AnswerDistribution {
        AnswerDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn softmax_ties_and_shift() {
        let u = AnswerDistribution::from_logits(vec![1.0; 4]).unwrap();
        assert_eq!(u.argmax(), 0);
        assert!(u.probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let a = AnswerDistribution::from_logits(vec![0.3, -1.0, 2.0]).unwrap();
        let b = AnswerDistribution::from_logits(vec![100.3, 99.0, 102.0]).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-9);
        }
        assert_eq!(AnswerDistribution::from_logits(vec![0.0, 50.0, 0.0]).unwrap().argmax(), 1);
        assert!(AnswerDistribution::from_logits(vec![f64::NAN]).is_err());
    }

    #[test]
    fn cls_confidence() {
        let f = FusedFeature::new("x", vec![2.0, 9.0]).unwrap();
        let c = confidence_cls(&f, &BinaryHead { w: vec![1.0, 0.0], b: 0.0 }).unwrap();
        assert!((c - 0.8807970779778823).abs() < 1e-12);
        assert_eq!(confidence_cls(&f, &BinaryHead { w: vec![0.0, 0.0], b: 0.0 }).unwrap(), 0.5);
        assert!(confidence_cls(&f, &BinaryHead { w: vec![0.0, 0.0], b: 800.0 }).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn entropy_values() {
        assert!((d(&[0.5, 0.5]).entropy() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(d(&[0.0, 1.0, 0.0]).entropy(), 0.0);
        assert!((uniform_target(7).unwrap().entropy() - 7f64.ln()).abs() < 1e-12);
        assert_eq!(uniform_target(1).unwrap().probs, vec![1.0]);
        assert!(uniform_target(0).is_err());
    }

    #[test]
    fn selection_rules() {
        let one_hot = d(&[0.0, 1.0]);
        let u = uniform_target(4).unwrap();
        let cls = SelectiveConfig { variant: Variant::Cls, theta: 0.5 };
        assert_eq!(select(&one_hot, 0.9, &cls).result, Prediction::Answer(1));
        assert_eq!(select(&one_hot, 0.5, &cls).result, Prediction::Answer(1));
        assert!(select(&one_hot, 0.4, &cls).abstained());
        let ent = SelectiveConfig { variant: Variant::Ent, theta: 1.0 };
        assert!(select(&u, u.entropy(), &ent).abstained());
        assert_eq!(select(&one_hot, 0.0, &SelectiveConfig { variant: Variant::Ent, theta: 0.0 }).result, Prediction::Answer(1));
    }

    #[test]
    fn calibration_recovers_separator() {
        let mut scored = Vec::new();
        for c in [2.0, 2.5, 3.0, 7.0] {
            scored.push(Scored { dist: d(&[1.0, 0.0]), confidence: c, answer: Some(0) });
        }
        for c in [0.1, 1.0, 1.9] {
            scored.push(Scored { dist: d(&[1.0, 0.0]), confidence: c, answer: None });
        }
        let cal = calibrate_scored(&scored, Variant::MaxLogit, &[0.0, 1.0, 2.0, 2.5, 3.0, 10.0]).unwrap();
        assert_eq!(cal.theta, 2.0);
        assert_eq!(cal.accuracy, 1.0);
        assert_eq!(cal.curve.len(), 6);
        assert_eq!(calibrate_scored(&scored, Variant::Cls, &[0.3]).unwrap().theta, 0.3);
        assert!(calibrate_scored(&scored, Variant::Cls, &[]).is_err());
    }

    #[test]
    fn concat_fusion() {
        let f = fuse("i", &[0.0, 0.0], &[0.0], &Concat { dims: Some((2, 1)) }).unwrap();
        assert_eq!(f.x, vec![0.0; 3]);
        assert!(fuse("i", &[0.0], &[0.0], &Concat { dims: Some((2, 1)) }).is_err());
        assert_eq!(Concat::default().fuse(&[1.0], &[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
