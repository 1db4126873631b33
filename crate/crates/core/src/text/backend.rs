//! Backend contracts for tagging, parsing and language-model scoring,
//! plus the rule-table and lookup-table implementations used in tests and
//! fixture runs.
//!
//! Taggers and parsers receive pre-tokenised input (see
//! [`crate::normalize::tokenize`]) so token positions line up with the
//! rewriting code.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use super::lexicon::{self, VerbForm};
use crate::normalize::{inflection_stem, is_punct_token};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("{backend} backend failed: {message}")]
    Failed { backend: &'static str, message: String },
    #[error("no language-model score for {0:?}")]
    MissingScore(String),
    #[error("{path}:{line}: {message}")]
    BadTable { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Part-of-speech tagger: one Penn-style tag per input token.
pub trait PosTagger: Send + Sync {
    fn tag(&self, tokens: &[String]) -> Result<Vec<String>, BackendError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedVerb {
    pub position: usize,
    pub form: VerbForm,
    pub lemma: String,
}

/// Verbs, auxiliaries and negation tokens of a question, by token position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseResult {
    pub verbs: Vec<ParsedVerb>,
    pub auxiliaries: Vec<usize>,
    pub negations: Vec<usize>,
}

pub trait DependencyParser: Send + Sync {
    fn parse(&self, tokens: &[String]) -> Result<ParseResult, BackendError>;
}

/// Total negative log-likelihood of a text, `-sum_i log p(w_i | w_<i)`.
pub trait LmScorer: Send + Sync {
    fn score(&self, text: &str) -> Result<f64, BackendError>;
}

impl<T: LmScorer + ?Sized> LmScorer for &T {
    fn score(&self, text: &str) -> Result<f64, BackendError> {
        (**self).score(text)
    }
}

/// Rule-table tagger: a closed-class word list, an irregular-verb table and
/// a few suffix/context rules. Unknown words default to nouns.
#[derive(Debug, Clone, Default)]
pub struct RuleTagger {
    overrides: HashMap<String, String>,
}

impl RuleTagger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entries<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self { overrides: entries.into_iter().map(|(k, v)| (k.into().to_lowercase(), v.into())).collect() }
    }

    /// Load `word<TAB>TAG` override lines; `#` starts a comment.
    pub fn from_tsv(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)?;
        let mut overrides = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next()) {
                (Some(w), Some(t)) if !t.trim().is_empty() => {
                    overrides.insert(w.trim().to_lowercase(), t.trim().to_string());
                }
                _ => {
                    return Err(BackendError::BadTable {
                        path: path.display().to_string(),
                        line: i + 1,
                        message: "expected word<TAB>TAG".into(),
                    })
                }
            }
        }
        Ok(Self { overrides })
    }

    fn tag_word(&self, lower: &str, prev_tag: Option<&str>, aux_seen: bool, rest: &[String]) -> String {
        if let Some(t) = self.overrides.get(lower) {
            return t.clone();
        }
        if is_punct_token(lower) {
            return ".".into();
        }
        if lower.parse::<f64>().is_ok() {
            return "CD".into();
        }
        if let Some(t) = lexicon::closed_class_tag(lower) {
            return t.into();
        }
        let after_det = prev_tag.is_some_and(lexicon::is_determiner_like);
        if let Some(&(_, form)) = lexicon::HAVE_FORMS.iter().find(|(w, _)| *w == lower) {
            let participle_follows = rest.iter().any(|w| {
                lexicon::verb_table()
                    .get(w.to_lowercase().as_str())
                    .is_some_and(|es| es.iter().any(|e| e.form == VerbForm::Participle))
            });
            return if participle_follows { "VBZ-AUX".into() } else { form.tag().into() };
        }
        if let Some(entries) = lexicon::verb_table().get(lower) {
            if after_det && lexicon::noun_after_determiner(lower) {
                return if lower.ends_with('s') { "NNS".into() } else { "NN".into() };
            }
            let has = |f: VerbForm| entries.iter().any(|e| e.form == f);
            let prefs: &[VerbForm] = if aux_seen {
                &[VerbForm::Gerund, VerbForm::Participle, VerbForm::Base, VerbForm::Past, VerbForm::ThirdSingular]
            } else {
                &[VerbForm::Past, VerbForm::ThirdSingular, VerbForm::Gerund, VerbForm::Base, VerbForm::Participle]
            };
            let form = prefs.iter().copied().find(|f| has(*f)).unwrap_or(entries[0].form);
            return match (form, aux_seen) {
                (VerbForm::Base, false) => VerbForm::NonThirdPresent.tag().into(),
                (f, _) => f.tag().into(),
            };
        }
        if aux_seen && !after_det && lower.len() > 5 && lower.ends_with("ing") {
            return "VBG".into();
        }
        if lower.len() > 4 && lower.ends_with("ly") {
            return "RB".into();
        }
        if lower.len() > 3 && lower.ends_with('s') && !lower.ends_with("ss") && !lower.ends_with("us") {
            return "NNS".into();
        }
        "NN".into()
    }
}

impl PosTagger for RuleTagger {
    fn tag(&self, tokens: &[String]) -> Result<Vec<String>, BackendError> {
        let mut tags: Vec<String> = Vec::with_capacity(tokens.len());
        let mut aux_seen = false;
        for (i, tok) in tokens.iter().enumerate() {
            let lower = tok.to_lowercase();
            let tag = self.tag_word(&lower, tags.last().map(String::as_str), aux_seen, &tokens[i + 1..]);
            if lexicon::auxiliary_tag(&lower).is_some() || tag == "VBZ-AUX" {
                aux_seen = true;
            }
            tags.push(if tag == "VBZ-AUX" {
                lexicon::HAVE_FORMS.iter().find(|(w, _)| *w == lower).map(|(_, f)| f.tag().to_string()).unwrap_or(tag)
            } else {
                tag
            });
        }
        Ok(tags)
    }
}

/// Dependency-parser stand-in driven by [`RuleTagger`] tags.
#[derive(Debug, Clone, Default)]
pub struct RuleParser {
    tagger: RuleTagger,
}

impl RuleParser {
    pub fn new(tagger: RuleTagger) -> Self {
        Self { tagger }
    }
}

impl DependencyParser for RuleParser {
    fn parse(&self, tokens: &[String]) -> Result<ParseResult, BackendError> {
        let tags = self.tagger.tag(tokens)?;
        let mut out = ParseResult::default();
        for (i, (tok, tag)) in tokens.iter().zip(&tags).enumerate() {
            let lower = tok.to_lowercase();
            if lexicon::NEGATION_KEYWORDS.contains(&lower.as_str()) {
                out.negations.push(i);
                continue;
            }
            let is_have_aux = lexicon::HAVE_FORMS.iter().any(|(w, _)| *w == lower)
                && tokens[i + 1..].iter().zip(&tags[i + 1..]).any(|(_, t)| t == "VBN");
            if lexicon::auxiliary_tag(&lower).is_some() || is_have_aux {
                out.auxiliaries.push(i);
                continue;
            }
            if let Some(form) = VerbForm::from_tag(tag) {
                let lemma = lexicon::verb_table()
                    .get(lower.as_str())
                    .and_then(|es| es.iter().find(|e| e.form == form).or(es.first()))
                    .map(|e| e.lemma.to_string())
                    .unwrap_or_else(|| inflection_stem(&lower));
                out.verbs.push(ParsedVerb { position: i, form, lemma });
            }
        }
        Ok(out)
    }
}

/// Language-model scores looked up by exact text.
#[derive(Debug, Clone, Default)]
pub struct LookupScorer {
    table: HashMap<String, f64>,
}

impl LookupScorer {
    pub fn new<I, K>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        Self { table: entries.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    pub fn insert(&mut self, text: impl Into<String>, score: f64) {
        self.table.insert(text.into(), score);
    }

    /// Load a JSON object mapping text to its NLL score.
    pub fn from_json(path: &Path) -> Result<Self, BackendError> {
        let raw = std::fs::read_to_string(path)?;
        let table: HashMap<String, f64> = serde_json::from_str(&raw).map_err(|e| BackendError::BadTable {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if let Some((k, v)) = table.iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(BackendError::BadTable {
                path: path.display().to_string(),
                line: 0,
                message: format!("score for {k:?} must be a finite non-negative NLL, got {v}"),
            });
        }
        Ok(Self { table })
    }
}

impl LmScorer for LookupScorer {
    fn score(&self, text: &str) -> Result<f64, BackendError> {
        self.table.get(text).copied().ok_or_else(|| BackendError::MissingScore(text.to_string()))
    }
}

/// Add-one smoothed unigram model over lowercase word tokens.
#[derive(Debug, Clone)]
pub struct UnigramScorer {
    counts: HashMap<String, u64>,
    total: u64,
}

impl UnigramScorer {
    pub fn from_corpus<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut counts = HashMap::new();
        let mut total = 0;
        for t in texts {
            for w in crate::normalize::tokenize(t).into_iter().filter(|w| !is_punct_token(w)) {
                *counts.entry(w.to_lowercase()).or_insert(0) += 1;
                total += 1;
            }
        }
        Self { counts, total }
    }
}

impl LmScorer for UnigramScorer {
    fn score(&self, text: &str) -> Result<f64, BackendError> {
        let denom = (self.total + self.counts.len() as u64 + 1) as f64;
        Ok(crate::normalize::tokenize(text)
            .into_iter()
            .filter(|w| !is_punct_token(w))
            .map(|w| {
                let c = self.counts.get(&w.to_lowercase()).copied().unwrap_or(0);
                -((c + 1) as f64 / denom).ln()
            })
            .sum())
    }
}

/// Adapter turning a closure into a scorer.
pub struct FnScorer<F>(pub F);

impl<F> LmScorer for FnScorer<F>
where
    F: Fn(&str) -> Option<f64> + Send + Sync,
{
    fn score(&self, text: &str) -> Result<f64, BackendError> {
        (self.0)(text).ok_or_else(|| BackendError::MissingScore(text.to_string()))
    }
}
