//! Question rewriting: noun replacement with embedding neighbours (T-1) and
//! semantic negation (T-2), both gated by a language-model score filter.
//!
//! A rewritten question `Q'` survives only if `LM(Q') - LM(Q) <= epsilon`,
//! where `LM` is the total negative log-likelihood returned by an
//! [`LmScorer`].

pub mod backend;
mod embedding;
pub mod lexicon;
pub mod negation;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use backend::{
    BackendError, DependencyParser, FnScorer, LmScorer, LookupScorer, ParseResult, PosTagger, RuleParser, RuleTagger,
    UnigramScorer,
};
pub use embedding::EmbeddingTable;
pub use negation::{negate_question, try_negate_question, NegatedQuestion, NegationRule};

use crate::data::{is_binary_answer, AnswerType, Params, PerturbOutcome, PerturbationKind, PerturbationRecord, VqaInstance};
use crate::normalize::{capitalize_first, detokenize, inflection_stem, normalize_label, starts_uppercase, tokenize};

pub const DEFAULT_EPSILON: f64 = 0.4;
pub const DEFAULT_NEIGHBORS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("empty question")]
    EmptyQuestion,
    #[error("anchor {0:?} not in embedding vocabulary")]
    OutOfVocabulary(String),
    #[error("anchor {token:?} not found at position {position}")]
    AnchorNotFound { token: String, position: usize },
    #[error("epsilon must be finite, got {0}")]
    BadEpsilon(f64),
    #[error("embedding table line {line}: {message}")]
    Embedding { line: usize, message: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A noun occurrence: token text and its index in the tokenised question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Noun {
    pub token: String,
    pub position: usize,
}

impl Noun {
    pub fn new(token: impl Into<String>, position: usize) -> Self {
        Self { token: token.into(), position }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementCandidate {
    pub anchor: String,
    pub anchor_position: usize,
    pub replacement: String,
    pub candidate_question: String,
    /// `LM(Q') - LM(Q)`; set by [`filter_by_perplexity`].
    pub lm_delta: Option<f64>,
}

pub fn detect_nouns(question: &str, tagger: &dyn PosTagger) -> Result<Vec<Noun>, TextError> {
    let tokens = tokenize(question);
    if tokens.is_empty() {
        return Err(TextError::EmptyQuestion);
    }
    let tags = tagger.tag(&tokens)?;
    if tags.len() != tokens.len() {
        return Err(TextError::Backend(BackendError::Failed {
            backend: "pos",
            message: format!("{} tags for {} tokens", tags.len(), tokens.len()),
        }));
    }
    Ok(tokens
        .into_iter()
        .zip(tags)
        .enumerate()
        .filter(|(_, (_, tag))| tag.starts_with("NN"))
        .map(|(i, (tok, _))| Noun::new(tok, i))
        .collect())
}

/// Last noun that is neither a question word nor equal to a ground-truth answer.
pub fn select_anchor(nouns: &[Noun], answers: &[String]) -> Option<Noun> {
    let answers: Vec<String> = answers.iter().map(|a| normalize_label(a)).collect();
    nouns
        .iter()
        .rev()
        .find(|n| {
            let t = normalize_label(&n.token);
            !lexicon::QUESTION_WORDS.contains(&t.as_str()) && !answers.contains(&t)
        })
        .cloned()
}

pub fn nearest_neighbors(anchor: &str, table: &EmbeddingTable, k: usize) -> Result<Vec<String>, TextError> {
    Ok(table.nearest_neighbors(anchor, k)?.into_iter().map(|(t, _)| t).collect())
}

/// Drop candidates that are inflections of the anchor (plural / tense) and
/// any candidate that duplicates an earlier one under the same rule.
pub fn dedup_lexical(anchor: &str, candidates: &[String]) -> Vec<String> {
    let anchor_stem = inflection_stem(anchor);
    let mut seen = vec![anchor_stem];
    let mut out = Vec::new();
    for c in candidates {
        let stem = inflection_stem(c);
        if !seen.contains(&stem) {
            seen.push(stem);
            out.push(c.clone());
        }
    }
    out
}

fn is_word_like(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_some_and(char::is_alphabetic) && chars.all(|c| c.is_alphanumeric() || c == '-' || c == '\'')
}

/// Rewrite the anchor occurrence with each replacement token.
pub fn generate_replacements(
    question: &str,
    anchor: &Noun,
    replacements: &[String],
) -> Result<Vec<ReplacementCandidate>, TextError> {
    let tokens = tokenize(question);
    let found = tokens.get(anchor.position).is_some_and(|t| t.eq_ignore_ascii_case(&anchor.token));
    if !found {
        return Err(TextError::AnchorNotFound { token: anchor.token.clone(), position: anchor.position });
    }
    Ok(replacements
        .iter()
        .map(|r| {
            let mut toks = tokens.clone();
            toks[anchor.position] =
                if anchor.position == 0 && starts_uppercase(&tokens[0]) { capitalize_first(r) } else { r.clone() };
            ReplacementCandidate {
                anchor: anchor.token.clone(),
                anchor_position: anchor.position,
                replacement: r.clone(),
                candidate_question: detokenize(&toks),
                lm_delta: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterRejection {
    AboveEpsilon,
    ScorerFailed(String),
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<ReplacementCandidate>,
    pub rejected: Vec<(ReplacementCandidate, FilterRejection)>,
}

/// Keep exactly the candidates with `LM(Q') - LM(Q) <= epsilon`.
///
/// Every scored candidate carries its `lm_delta`, kept or not. A candidate
/// the scorer cannot score is rejected, never kept.
pub fn filter_by_perplexity(
    original: &str,
    candidates: Vec<ReplacementCandidate>,
    scorer: &dyn LmScorer,
    epsilon: f64,
) -> Result<FilterOutcome, TextError> {
    if !epsilon.is_finite() {
        return Err(TextError::BadEpsilon(epsilon));
    }
    let base = scorer.score(original)?;
    let mut out = FilterOutcome::default();
    for mut c in candidates {
        match scorer.score(&c.candidate_question) {
            Ok(s) => {
                let delta = s - base;
                c.lm_delta = Some(delta);
                if delta <= epsilon {
                    out.kept.push(c);
                } else {
                    out.rejected.push((c, FilterRejection::AboveEpsilon));
                }
            }
            Err(e) => {
                log::warn!("dropping {:?}: {e}", c.candidate_question);
                out.rejected.push((c, FilterRejection::ScorerFailed(e.to_string())));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextPerturbConfig {
    pub epsilon: f64,
    pub neighbors: usize,
    pub word_replace: bool,
    pub negation: bool,
}

impl Default for TextPerturbConfig {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, neighbors: DEFAULT_NEIGHBORS, word_replace: true, negation: true }
    }
}

#[derive(Clone, Copy)]
pub struct TextBackends<'a> {
    pub tagger: &'a dyn PosTagger,
    pub parser: &'a dyn DependencyParser,
    pub scorer: &'a dyn LmScorer,
    pub embeddings: &'a EmbeddingTable,
}

/// Run T-1 and T-2 on one instance.
pub fn perturb_text(instance: &VqaInstance, config: &TextPerturbConfig, backends: TextBackends<'_>) -> PerturbOutcome {
    let mut out = PerturbOutcome::default();
    if instance.answer_type == AnswerType::YesNo || instance.answers.iter().any(|a| is_binary_answer(a)) {
        for kind in [PerturbationKind::WordReplace, PerturbationKind::Negation] {
            out.skip(&instance.id, kind, "binary answer");
        }
        return out;
    }
    if config.word_replace {
        word_replace(instance, config, backends, &mut out);
    }
    if config.negation {
        negate(instance, config, backends, &mut out);
    }
    out
}

fn word_replace(instance: &VqaInstance, config: &TextPerturbConfig, b: TextBackends<'_>, out: &mut PerturbOutcome) {
    let kind = PerturbationKind::WordReplace;
    let id = &instance.id;
    let nouns = match detect_nouns(&instance.question, b.tagger) {
        Ok(n) if n.is_empty() => return out.skip(id, kind, "no nouns"),
        Ok(n) => n,
        Err(e) => return out.skip(id, kind, format!("tagger: {e}")),
    };
    let Some(anchor) = select_anchor(&nouns, &instance.answers) else {
        return out.skip(id, kind, "no anchor");
    };
    let neighbors = match nearest_neighbors(&anchor.token, b.embeddings, config.neighbors) {
        Ok(n) => n,
        Err(e) => return out.skip(id, kind, e.to_string()),
    };
    let word_like: Vec<String> = neighbors.into_iter().filter(|w| is_word_like(w)).collect();
    let replacements = dedup_lexical(&anchor.token, &word_like);
    if replacements.is_empty() {
        return out.skip(id, kind, "no replacement candidates after dedup");
    }
    let candidates = match generate_replacements(&instance.question, &anchor, &replacements) {
        Ok(c) => c,
        Err(e) => return out.skip(id, kind, e.to_string()),
    };
    let filtered = match filter_by_perplexity(&instance.question, candidates, b.scorer, config.epsilon) {
        Ok(f) => f,
        Err(e) => return out.skip(id, kind, format!("lm filter: {e}")),
    };
    for (c, why) in &filtered.rejected {
        let reason = match why {
            FilterRejection::AboveEpsilon => format!("{:?}: lm_delta {:.4} > epsilon", c.replacement, c.lm_delta.unwrap_or(f64::NAN)),
            FilterRejection::ScorerFailed(e) => format!("{:?}: scorer failed: {e}", c.replacement),
        };
        out.skip(id, kind, reason);
    }
    for c in filtered.kept {
        let rank = replacements.iter().position(|r| *r == c.replacement).unwrap_or(0);
        let params = Params::from([
            ("epsilon".to_string(), json!(config.epsilon)),
            ("k".to_string(), json!(config.neighbors)),
            ("anchor".to_string(), json!(c.anchor)),
            ("anchor_position".to_string(), json!(c.anchor_position)),
            ("replacement".to_string(), json!(c.replacement)),
            ("neighbor_rank".to_string(), json!(rank)),
            ("lm_delta".to_string(), json!(c.lm_delta)),
        ]);
        out.records.push(PerturbationRecord::text(id, kind, c.candidate_question, params));
    }
}

fn negate(instance: &VqaInstance, config: &TextPerturbConfig, b: TextBackends<'_>, out: &mut PerturbOutcome) {
    let kind = PerturbationKind::Negation;
    let id = &instance.id;
    let negated = match try_negate_question(&instance.question, b.parser) {
        Ok(Some(n)) => n,
        Ok(None) => return out.skip(id, kind, "no negation rule applies"),
        Err(e) => return out.skip(id, kind, format!("parser: {e}")),
    };
    let delta = match (b.scorer.score(&instance.question), b.scorer.score(&negated.question)) {
        (Ok(base), Ok(s)) => s - base,
        (Err(e), _) | (_, Err(e)) => return out.skip(id, kind, format!("lm filter: {e}")),
    };
    if !(delta <= config.epsilon) {
        return out.skip(id, kind, format!("lm_delta {delta:.4} > epsilon"));
    }
    let params = Params::from([
        ("epsilon".to_string(), json!(config.epsilon)),
        ("rule".to_string(), json!(negated.rule.as_str())),
        ("lm_delta".to_string(), json!(delta)),
    ]);
    out.records.push(PerturbationRecord::text(id, kind, negated.question, params));
}
