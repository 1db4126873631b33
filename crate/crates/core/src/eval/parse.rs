use super::{ParsedResponse, Protocol, Verdict, UNANSWERABLE};
use crate::normalize::normalize_answer;

/// Bump when [`REFUSAL_LEXICON`] changes and note it in the changelog.
pub const REFUSAL_LEXICON_VERSION: u32 = 1;

/// Open-ended replies containing one of these phrases count as abstentions.
pub const REFUSAL_LEXICON: [&str; 5] = ["unanswerable", "i cannot answer", "i don't know", "i do not know", "not sure"];

const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

/// True if `needle` occurs in `hay` on word boundaries.
fn contains_phrase(hay: &str, needle: &str) -> bool {
    hay.match_indices(needle).any(|(i, _)| {
        let before = hay[..i].chars().next_back();
        let after = hay[i + needle.len()..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric()) && !after.is_some_and(|c| c.is_alphanumeric())
    })
}

fn leading_letter(raw: &str) -> Option<char> {
    let mut s = raw.trim_start();
    let lower = s.to_lowercase();
    for prefix in ["the answer is:", "the answer is", "answer:"] {
        if lower.starts_with(prefix) {
            s = s[prefix.len()..].trim_start();
            break;
        }
    }
    let s = s.strip_prefix('(').unwrap_or(s);
    let mut chars = s.chars();
    let c = chars.next()?;
    let next = chars.next();
    (LETTERS.contains(&c) && !next.is_some_and(|n| n.is_alphanumeric())).then_some(c)
}

fn choice(letter: char, options: Option<&[String]>) -> Verdict {
    let idx = LETTERS.iter().position(|&l| l == letter).expect("letter in A..D");
    let unanswerable = options.and_then(|o| o.get(idx)).is_some_and(|t| normalize_answer(t) == UNANSWERABLE);
    Verdict::Choice { letter, unanswerable }
}

/// Extract a protocol verdict. Anything unparseable is out-of-scope.
///
/// * BY: "unanswerable" is searched before "answerable", which it contains.
/// * MC: a leading option letter (optionally after "The answer is:"), else
///   a single option whose text the reply matches.
/// * OE / OEH: the normalised reply, or an abstention when it contains a
///   refusal phrase; empty replies are out-of-scope.
pub fn parse_response(raw: &str, protocol: Protocol, mc_options: Option<&[String]>) -> ParsedResponse {
    let verdict = match protocol {
        Protocol::By => {
            let lower = raw.to_lowercase();
            if lower.contains("unanswerable") {
                Verdict::Unanswerable
            } else if lower.contains("answerable") {
                Verdict::Answerable
            } else {
                Verdict::OutOfScope
            }
        }
        Protocol::Mc => match leading_letter(raw) {
            Some(l) => choice(l, mc_options),
            None => {
                let norm = normalize_answer(raw);
                let opts = mc_options.unwrap_or(&[]);
                let normed: Vec<String> = opts.iter().map(|o| normalize_answer(o)).collect();
                let exact: Vec<usize> = (0..normed.len()).filter(|&i| !normed[i].is_empty() && normed[i] == norm).collect();
                let hits = if exact.is_empty() {
                    (0..normed.len()).filter(|&i| !normed[i].is_empty() && contains_phrase(&norm, &normed[i])).collect()
                } else {
                    exact
                };
                match hits.as_slice() {
                    [i] if *i < 4 => choice(LETTERS[*i], mc_options),
                    _ => Verdict::OutOfScope,
                }
            }
        },
        Protocol::Oe | Protocol::Oeh => {
            let norm = normalize_answer(raw);
            if norm.is_empty() {
                Verdict::OutOfScope
            } else if REFUSAL_LEXICON.iter().any(|p| contains_phrase(&norm, p)) {
                Verdict::Unanswerable
            } else {
                Verdict::FreeText(norm)
            }
        }
    };
    ParsedResponse { verdict, raw: raw.to_string() }
}
