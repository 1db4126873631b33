//! Tokenisation and string normalisation shared across modules.

const CLOSING_PUNCT: &[char] = &['?', '.', ',', '!', ';', ':', ')', '"'];
const OPENING_PUNCT: &[char] = &['(', '"'];

/// Lowercase and strip surrounding whitespace and ASCII punctuation.
pub fn normalize_label(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .to_lowercase()
}

/// Answer normalisation used for open-set matching: lowercase, unify
/// apostrophes, drop the articles a/an/the, strip terminal punctuation and
/// collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    let trimmed =
        lowered.trim_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | '!' | '?' | ';' | ':'));
    trimmed
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split a question into word and punctuation tokens.
///
/// Apostrophes stay inside words, so `isn't` is a single token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = chunk;
        let mut leading = Vec::new();
        while let Some(c) = word.chars().next().filter(|c| OPENING_PUNCT.contains(c)) {
            leading.push(c.to_string());
            word = &word[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = word.chars().last().filter(|c| CLOSING_PUNCT.contains(c)) {
            trailing.push(c.to_string());
            word = &word[..word.len() - c.len_utf8()];
        }
        tokens.extend(leading);
        if !word.is_empty() {
            tokens.push(word.to_string());
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

pub fn is_punct_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation())
}

/// Inverse of [`tokenize`] for the token shapes it produces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = false;
    for tok in tokens {
        let tok = tok.as_ref();
        let closing = tok.chars().count() == 1 && tok.chars().all(|c| CLOSING_PUNCT.contains(&c) && c != '"');
        if !out.is_empty() && !closing && !glue_next {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = tok == "(";
    }
    out
}

/// Uppercase the first character, leaving the rest untouched.
pub fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn starts_uppercase(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase)
}

/// Crude inflection stem used for plural/tense comparisons between words.
///
/// Handles the regular English suffixes (`-s`, `-es`, `-ies`, `-ed`,
/// `-ied`, `-ing`) plus consonant doubling (`stopped` -> `stop`).
pub fn inflection_stem(word: &str) -> String {
    let w = word.to_lowercase();
    let n = w.len();
    if !w.is_ascii() || n <= 3 {
        return w;
    }
    if let Some(base) = w.strip_suffix("ies").filter(|_| n > 4) {
        return format!("{base}y");
    }
    if let Some(base) = w.strip_suffix("ied").filter(|_| n > 4) {
        return format!("{base}y");
    }
    if let Some(base) = w.strip_suffix("es") {
        if base.ends_with('s') || base.ends_with('x') || base.ends_with('z') || base.ends_with("ch") || base.ends_with("sh") {
            return base.to_string();
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..n - 1].to_string();
    }
    for suffix in ["ing", "ed"] {
        if let Some(base) = w.strip_suffix(suffix).filter(|b| b.len() >= 3) {
            return undouble(base);
        }
    }
    w
}

fn undouble(base: &str) -> String {
    let bytes = base.as_bytes();
    let n = bytes.len();
    if n >= 2 && bytes[n - 1] == bytes[n - 2] && !matches!(bytes[n - 1], b'l' | b's' | b'z' | b'e' | b'o') {
        base[..n - 1].to_string()
    } else {
        base.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("What color is the bridge?"), vec!["What", "color", "is", "the", "bridge", "?"]);
        assert_eq!(tokenize("Why isn't it (really) on?"), vec!["Why", "isn't", "it", "(", "really", ")", "on", "?"]);
    }

    #[test]
    fn detokenize_round_trips() {
        for q in ["What color is the bridge?", "Who threw the ball?", "What is it (roughly) made of?", "Hmm, why?"] {
            assert_eq!(detokenize(&tokenize(q)), q);
        }
    }

    #[test]
    fn answer_normalization() {
        assert_eq!(normalize_answer("  The Red Car. "), "red car");
        assert_eq!(normalize_answer("I don\u{2019}t know!"), "i don't know");
        assert_eq!(normalize_label(" Yes! "), "yes");
    }

    #[test]
    fn stems() {
        assert_eq!(inflection_stem("dogs"), "dog");
        assert_eq!(inflection_stem("dog"), "dog");
        assert_eq!(inflection_stem("boxes"), "box");
        assert_eq!(inflection_stem("puppies"), "puppy");
        assert_eq!(inflection_stem("stopped"), "stop");
        assert_eq!(inflection_stem("walking"), "walk");
        assert_eq!(inflection_stem("walked"), "walk");
        assert_eq!(inflection_stem("glass"), "glass");
        assert_eq!(inflection_stem("bus"), "bus");
    }
}
