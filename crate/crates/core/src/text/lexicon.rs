//! Built-in word lists backing the rule-table tagger and parser stubs.

use std::collections::HashMap;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerbForm {
    /// VB
    Base,
    /// VBD
    Past,
    /// VBZ
    ThirdSingular,
    /// VBP
    NonThirdPresent,
    /// VBG
    Gerund,
    /// VBN
    Participle,
}

impl VerbForm {
    pub fn tag(self) -> &'static str {
        match self {
            VerbForm::Base => "VB",
            VerbForm::Past => "VBD",
            VerbForm::ThirdSingular => "VBZ",
            VerbForm::NonThirdPresent => "VBP",
            VerbForm::Gerund => "VBG",
            VerbForm::Participle => "VBN",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "VB" => VerbForm::Base,
            "VBD" => VerbForm::Past,
            "VBZ" => VerbForm::ThirdSingular,
            "VBP" => VerbForm::NonThirdPresent,
            "VBG" => VerbForm::Gerund,
            "VBN" => VerbForm::Participle,
            _ => return None,
        })
    }
}

pub const QUESTION_WORDS: &[&str] = &["what", "which", "who", "whom", "whose", "where", "when", "why", "how"];

pub const NEGATION_KEYWORDS: &[&str] = &["not", "hardly", "never"];

/// Copulas, auxiliaries and modals with their tags.
pub const AUXILIARIES: &[(&str, &str)] = &[
    ("is", "VBZ"),
    ("are", "VBP"),
    ("am", "VBP"),
    ("was", "VBD"),
    ("were", "VBD"),
    ("be", "VB"),
    ("been", "VBN"),
    ("do", "VBP"),
    ("does", "VBZ"),
    ("did", "VBD"),
    ("can", "MD"),
    ("could", "MD"),
    ("will", "MD"),
    ("would", "MD"),
    ("should", "MD"),
    ("shall", "MD"),
    ("may", "MD"),
    ("might", "MD"),
    ("must", "MD"),
];

/// `have` forms only act as auxiliaries when a participle follows.
pub const HAVE_FORMS: &[(&str, VerbForm)] =
    &[("has", VerbForm::ThirdSingular), ("have", VerbForm::NonThirdPresent), ("had", VerbForm::Past)];

const CLOSED_CLASS: &[(&str, &str)] = &[
    ("what", "WP"),
    ("who", "WP"),
    ("whom", "WP"),
    ("whose", "WP$"),
    ("which", "WDT"),
    ("where", "WRB"),
    ("when", "WRB"),
    ("why", "WRB"),
    ("how", "WRB"),
    ("the", "DT"),
    ("a", "DT"),
    ("an", "DT"),
    ("this", "DT"),
    ("that", "DT"),
    ("these", "DT"),
    ("those", "DT"),
    ("each", "DT"),
    ("every", "DT"),
    ("some", "DT"),
    ("any", "DT"),
    ("no", "DT"),
    ("all", "DT"),
    ("both", "DT"),
    ("his", "PRP$"),
    ("her", "PRP$"),
    ("their", "PRP$"),
    ("its", "PRP$"),
    ("my", "PRP$"),
    ("your", "PRP$"),
    ("our", "PRP$"),
    ("he", "PRP"),
    ("she", "PRP"),
    ("it", "PRP"),
    ("they", "PRP"),
    ("i", "PRP"),
    ("you", "PRP"),
    ("we", "PRP"),
    ("him", "PRP"),
    ("them", "PRP"),
    ("me", "PRP"),
    ("us", "PRP"),
    ("there", "EX"),
    ("on", "IN"),
    ("in", "IN"),
    ("at", "IN"),
    ("of", "IN"),
    ("for", "IN"),
    ("with", "IN"),
    ("under", "IN"),
    ("over", "IN"),
    ("above", "IN"),
    ("below", "IN"),
    ("behind", "IN"),
    ("near", "IN"),
    ("by", "IN"),
    ("from", "IN"),
    ("into", "IN"),
    ("onto", "IN"),
    ("beside", "IN"),
    ("between", "IN"),
    ("through", "IN"),
    ("across", "IN"),
    ("inside", "IN"),
    ("outside", "IN"),
    ("around", "IN"),
    ("about", "IN"),
    ("like", "IN"),
    ("next", "JJ"),
    ("to", "TO"),
    ("and", "CC"),
    ("or", "CC"),
    ("but", "CC"),
    ("not", "RB"),
    ("never", "RB"),
    ("hardly", "RB"),
    ("very", "RB"),
    ("many", "JJ"),
    ("much", "JJ"),
    ("other", "JJ"),
    ("same", "JJ"),
    ("different", "JJ"),
    ("red", "JJ"),
    ("blue", "JJ"),
    ("green", "JJ"),
    ("yellow", "JJ"),
    ("white", "JJ"),
    ("black", "JJ"),
    ("brown", "JJ"),
    ("orange", "JJ"),
    ("pink", "JJ"),
    ("purple", "JJ"),
    ("gray", "JJ"),
    ("grey", "JJ"),
    ("big", "JJ"),
    ("small", "JJ"),
    ("large", "JJ"),
    ("little", "JJ"),
    ("tall", "JJ"),
    ("short", "JJ"),
    ("old", "JJ"),
    ("young", "JJ"),
];

/// (base, past, participle, third-singular, gerund)
const VERBS: &[(&str, &str, &str, &str, &str)] = &[
    ("throw", "threw", "thrown", "throws", "throwing"),
    ("hold", "held", "held", "holds", "holding"),
    ("eat", "ate", "eaten", "eats", "eating"),
    ("sit", "sat", "sat", "sits", "sitting"),
    ("stand", "stood", "stood", "stands", "standing"),
    ("wear", "wore", "worn", "wears", "wearing"),
    ("run", "ran", "run", "runs", "running"),
    ("ride", "rode", "ridden", "rides", "riding"),
    ("make", "made", "made", "makes", "making"),
    ("take", "took", "taken", "takes", "taking"),
    ("see", "saw", "seen", "sees", "seeing"),
    ("play", "played", "played", "plays", "playing"),
    ("use", "used", "used", "uses", "using"),
    ("look", "looked", "looked", "looks", "looking"),
    ("carry", "carried", "carried", "carries", "carrying"),
    ("drive", "drove", "driven", "drives", "driving"),
    ("fly", "flew", "flown", "flies", "flying"),
    ("hang", "hung", "hung", "hangs", "hanging"),
    ("grow", "grew", "grown", "grows", "growing"),
    ("cut", "cut", "cut", "cuts", "cutting"),
    ("say", "said", "said", "says", "saying"),
    ("get", "got", "gotten", "gets", "getting"),
    ("go", "went", "gone", "goes", "going"),
    ("come", "came", "come", "comes", "coming"),
    ("give", "gave", "given", "gives", "giving"),
    ("keep", "kept", "kept", "keeps", "keeping"),
    ("feed", "fed", "fed", "feeds", "feeding"),
    ("write", "wrote", "written", "writes", "writing"),
    ("build", "built", "built", "builds", "building"),
    ("catch", "caught", "caught", "catches", "catching"),
    ("swim", "swam", "swum", "swims", "swimming"),
    ("sleep", "slept", "slept", "sleeps", "sleeping"),
    ("drink", "drank", "drunk", "drinks", "drinking"),
    ("wait", "waited", "waited", "waits", "waiting"),
    ("cook", "cooked", "cooked", "cooks", "cooking"),
    ("paint", "painted", "painted", "paints", "painting"),
    ("cover", "covered", "covered", "covers", "covering"),
    ("show", "showed", "shown", "shows", "showing"),
    ("contain", "contained", "contained", "contains", "containing"),
    ("mean", "meant", "meant", "means", "meaning"),
    ("live", "lived", "lived", "lives", "living"),
    ("happen", "happened", "happened", "happens", "happening"),
    ("walk", "walked", "walked", "walks", "walking"),
    ("watch", "watched", "watched", "watches", "watching"),
    ("lay", "laid", "laid", "lays", "laying"),
    ("lie", "lay", "lain", "lies", "lying"),
    ("put", "put", "put", "puts", "putting"),
    ("cross", "crossed", "crossed", "crosses", "crossing"),
    ("pull", "pulled", "pulled", "pulls", "pulling"),
    ("push", "pushed", "pushed", "pushes", "pushing"),
    ("kick", "kicked", "kicked", "kicks", "kicking"),
    ("hit", "hit", "hit", "hits", "hitting"),
    ("park", "parked", "parked", "parks", "parking"),
    ("face", "faced", "faced", "faces", "facing"),
    ("sell", "sold", "sold", "sells", "selling"),
    ("do", "did", "done", "does", "doing"),
    ("have", "had", "had", "has", "having"),
];

/// Verb words that are more often nouns after a determiner.
const NOUN_AFTER_DETERMINER: &[&str] = &[
    "play", "use", "look", "cover", "show", "drink", "paint", "cut", "building", "painting", "parking", "walk",
    "watch", "park", "face", "hit", "kick", "ride", "catch", "swim",
];

#[derive(Debug, Clone)]
pub struct VerbEntry {
    pub form: VerbForm,
    pub lemma: &'static str,
}

pub fn verb_table() -> &'static HashMap<&'static str, Vec<VerbEntry>> {
    static TABLE: OnceLock<HashMap<&'static str, Vec<VerbEntry>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t: HashMap<&'static str, Vec<VerbEntry>> = HashMap::new();
        for &(base, past, part, third, ger) in VERBS {
            for (w, form) in [
                (base, VerbForm::Base),
                (past, VerbForm::Past),
                (part, VerbForm::Participle),
                (third, VerbForm::ThirdSingular),
                (ger, VerbForm::Gerund),
            ] {
                let entries = t.entry(w).or_default();
                if !entries.iter().any(|e| e.form == form) {
                    entries.push(VerbEntry { form, lemma: base });
                }
            }
        }
        t
    })
}

pub fn closed_class_tag(word: &str) -> Option<&'static str> {
    static TABLE: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut t: HashMap<_, _> = CLOSED_CLASS.iter().copied().collect();
        t.extend(AUXILIARIES.iter().copied());
        t
    });
    t.get(word).copied()
}

pub fn is_determiner_like(tag: &str) -> bool {
    matches!(tag, "DT" | "PRP$" | "JJ" | "CD")
}

pub fn noun_after_determiner(word: &str) -> bool {
    NOUN_AFTER_DETERMINER.contains(&word)
}

pub fn auxiliary_tag(word: &str) -> Option<&'static str> {
    AUXILIARIES.iter().find(|(w, _)| *w == word).map(|(_, t)| *t)
}

/// Expand negative and copula contractions (`isn't` -> `is not`).
pub fn expand_contraction(word: &str) -> Option<&'static str> {
    let lower = word.to_lowercase().replace('\u{2019}', "'");
    Some(match lower.as_str() {
        "isn't" => "is not",
        "aren't" => "are not",
        "wasn't" => "was not",
        "weren't" => "were not",
        "don't" => "do not",
        "doesn't" => "does not",
        "didn't" => "did not",
        "can't" | "cannot" => "can not",
        "couldn't" => "could not",
        "won't" => "will not",
        "wouldn't" => "would not",
        "shouldn't" => "should not",
        "hasn't" => "has not",
        "haven't" => "have not",
        "hadn't" => "had not",
        "mustn't" => "must not",
        "what's" => "what is",
        "who's" => "who is",
        "where's" => "where is",
        "that's" => "that is",
        "it's" => "it is",
        "there's" => "there is",
        "how's" => "how is",
        _ => return None,
    })
}
