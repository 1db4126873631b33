//! Rule-based semantic negation of questions.

use serde::{Deserialize, Serialize};

use super::backend::{DependencyParser, ParseResult};
use super::lexicon::{self, VerbForm};
use super::TextError;
use crate::normalize::{capitalize_first, detokenize, starts_uppercase, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationRule {
    /// `not` attached to a copula or auxiliary.
    NegateAuxiliary,
    /// `do/does/did not` inserted before a bare main verb.
    DoSupport,
    /// An existing negation keyword removed.
    RemoveNegation,
}

impl NegationRule {
    pub fn as_str(self) -> &'static str {
        match self {
            NegationRule::NegateAuxiliary => "negate_auxiliary",
            NegationRule::DoSupport => "do_support",
            NegationRule::RemoveNegation => "remove_negation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegatedQuestion {
    pub question: String,
    pub rule: NegationRule,
}

/// Expand contractions token by token, keeping sentence-initial case.
pub fn expand_contractions(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        match lexicon::expand_contraction(tok) {
            Some(exp) => {
                for (j, w) in exp.split(' ').enumerate() {
                    if i == 0 && j == 0 && starts_uppercase(tok) {
                        out.push(capitalize_first(w));
                    } else {
                        out.push(w.to_string());
                    }
                }
            }
            None => out.push(tok.clone()),
        }
    }
    out
}

/// Negate a question, logging and returning `None` on parser failure or
/// when no rule applies.
pub fn negate_question(question: &str, parser: &dyn DependencyParser) -> Option<NegatedQuestion> {
    match try_negate_question(question, parser) {
        Ok(n) => n,
        Err(e) => {
            log::warn!("negation skipped for {question:?}: {e}");
            None
        }
    }
}

/// Rules are tried in order:
///
/// 1. the first auxiliary not already followed by a negation gets `not`,
///    placed before its main verb when one follows, else right after it;
/// 2. the first finite main verb with no auxiliary or negation before it gets
///    `do/does/did not` and is reduced to its lemma;
/// 3. every `not` / `hardly` / `never` is removed.
pub fn try_negate_question(question: &str, parser: &dyn DependencyParser) -> Result<Option<NegatedQuestion>, TextError> {
    let original = tokenize(question);
    if original.is_empty() {
        return Err(TextError::EmptyQuestion);
    }
    let tokens = expand_contractions(&original);
    let parse = parser.parse(&tokens).map_err(TextError::Backend)?;
    let capitalized = starts_uppercase(&tokens[0]);

    let result = negate_auxiliary(&tokens, &parse)
        .map(|t| (t, NegationRule::NegateAuxiliary))
        .or_else(|| do_support(&tokens, &parse).map(|t| (t, NegationRule::DoSupport)))
        .or_else(|| remove_negation(&tokens, &parse).map(|t| (t, NegationRule::RemoveNegation)));

    Ok(result.map(|(mut toks, rule)| {
        fix_initial_case(&tokens[0], &mut toks, capitalized);
        NegatedQuestion { question: detokenize(&toks), rule }
    }))
}

fn is_negated(aux: usize, parse: &ParseResult) -> bool {
    let next_aux = parse.auxiliaries.iter().copied().filter(|&a| a > aux).min().unwrap_or(usize::MAX);
    parse.negations.iter().any(|&n| n > aux && n < next_aux)
}

fn negate_auxiliary(tokens: &[String], parse: &ParseResult) -> Option<Vec<String>> {
    let aux = parse.auxiliaries.iter().copied().find(|&a| !is_negated(a, parse))?;
    let next_aux = parse.auxiliaries.iter().copied().filter(|&a| a > aux).min().unwrap_or(usize::MAX);
    let verb = parse.verbs.iter().map(|v| v.position).find(|&p| p > aux && p < next_aux);
    let at = verb.unwrap_or(aux + 1);
    let mut out = tokens.to_vec();
    out.insert(at, "not".to_string());
    Some(out)
}

fn do_support(tokens: &[String], parse: &ParseResult) -> Option<Vec<String>> {
    let first_aux = parse.auxiliaries.iter().copied().min().unwrap_or(usize::MAX);
    let verb = parse.verbs.iter().find(|v| {
        v.position < first_aux
            && !parse.negations.iter().any(|&n| n < v.position)
            && matches!(v.form, VerbForm::Past | VerbForm::ThirdSingular | VerbForm::NonThirdPresent | VerbForm::Base)
    })?;
    let helper = match verb.form {
        VerbForm::Past => "did",
        VerbForm::ThirdSingular => "does",
        _ => "do",
    };
    let mut out = tokens.to_vec();
    out[verb.position] = verb.lemma.to_lowercase();
    out.splice(verb.position..verb.position, [helper.to_string(), "not".to_string()]);
    Some(out)
}

fn remove_negation(tokens: &[String], parse: &ParseResult) -> Option<Vec<String>> {
    let drop: Vec<usize> = parse
        .negations
        .iter()
        .copied()
        .filter(|&p| lexicon::NEGATION_KEYWORDS.contains(&tokens[p].to_lowercase().as_str()))
        .collect();
    if drop.is_empty() {
        return None;
    }
    Some(tokens.iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, t)| t.clone()).collect())
}

/// Keep sentence case when the first token moves or changes.
fn fix_initial_case(old_first: &str, toks: &mut [String], capitalized: bool) {
    if !capitalized || toks.is_empty() || toks[0] == old_first {
        return;
    }
    toks[0] = capitalize_first(&toks[0]);
    if let Some(pos) = toks.iter().skip(1).position(|t| t == old_first) {
        if old_first != "I" {
            toks[pos + 1] = old_first.to_lowercase();
        }
    }
}
