use rand::seq::{IteratorRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, EvalItem, Protocol, ShotConfig};
use crate::annotation::Reason;

pub const UNANSWERABLE: &str = "unanswerable";

/// Hint used for answerable items, which have no recorded reason.
pub const DEFAULT_HINT: &str = "cannot be answered based on the image";

const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

pub fn hint_phrase(reason: Option<Reason>) -> &'static str {
    match reason {
        Some(Reason::R1) => "is unclear to comprehend",
        Some(Reason::R2) => "requires higher-level knowledge",
        Some(Reason::R3) => "refers to important concepts that the image lacks",
        Some(Reason::R4) => "has multiple answers",
        None => DEFAULT_HINT,
    }
}

/// Fill one protocol template. `options` must be given exactly for `MC`
/// and `hint` exactly for `OEH`.
pub fn build_prompt(question: &str, protocol: Protocol, options: Option<&[String]>, hint: Option<&str>) -> Result<String, EvalError> {
    match (protocol, options.is_some()) {
        (Protocol::Mc, false) => return Err(EvalError::MissingSlot { protocol, slot: "options" }),
        (Protocol::By | Protocol::Oe | Protocol::Oeh, true) => {
            return Err(EvalError::UnexpectedSlot { protocol, slot: "options" })
        }
        _ => {}
    }
    match (protocol, hint.is_some()) {
        (Protocol::Oeh, false) => return Err(EvalError::MissingSlot { protocol, slot: "hint" }),
        (Protocol::By | Protocol::Mc | Protocol::Oe, true) => return Err(EvalError::UnexpectedSlot { protocol, slot: "hint" }),
        _ => {}
    }
    Ok(match protocol {
        Protocol::By => format!(
            "Question: Given the question that {question}, is the above question answerable or unanswerable based on the image?"
        ),
        Protocol::Mc => {
            let opts = options.expect("checked above");
            if opts.len() != 4 {
                return Err(EvalError::OptionCount(opts.len()));
            }
            format!(
                "{question}\n\nOptions:\nA. {}\nB. {}\nC. {}\nD. {}\n\nThe answer is: A/B/C/D.",
                opts[0], opts[1], opts[2], opts[3]
            )
        }
        Protocol::Oe => question.to_string(),
        Protocol::Oeh => format!("{question} If you feel it {}, you can simply reply ``unanswerable''.", hint.expect("checked above")),
    })
}

/// Multiple-choice options for one item after its seeded shuffle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub texts: Vec<String>,
    /// `permutation[i]` is the base-order index (original, baseline, random,
    /// unanswerable) shown at position `i`.
    pub permutation: Vec<usize>,
}

impl McOptions {
    pub fn letter_of(&self, base_index: usize) -> char {
        LETTERS[self.permutation.iter().position(|&p| p == base_index).expect("permutation covers 0..4")]
    }

    pub fn unanswerable_letter(&self) -> char {
        self.letter_of(3)
    }
}

pub(crate) fn item_rng(seed: u64, salt: &str, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(Sha256::digest(format!("{seed}:{salt}:{id}").as_bytes()).into())
}

pub fn mc_options(item: &EvalItem, seed: u64) -> McOptions {
    let mut base: Vec<String> = item.options.iter().take(3).cloned().collect();
    while base.len() < 3 {
        base.push(String::new());
    }
    base.push(UNANSWERABLE.to_string());
    let mut permutation: Vec<usize> = (0..4).collect();
    permutation.shuffle(&mut item_rng(seed, "mc", &item.id));
    McOptions { texts: permutation.iter().map(|&i| base[i].clone()).collect(), permutation }
}

/// Prompt for `item` under `protocol`, with its MC options when relevant.
pub(crate) fn item_prompt(item: &EvalItem, protocol: Protocol, seed: u64) -> Result<(String, Option<McOptions>), EvalError> {
    let mc = (protocol == Protocol::Mc).then(|| mc_options(item, seed));
    let hint = (protocol == Protocol::Oeh).then(|| hint_phrase(item.reason));
    let prompt = build_prompt(&item.question, protocol, mc.as_ref().map(|m| m.texts.as_slice()), hint)?;
    Ok((prompt, mc))
}

/// The response a perfect model gives.
pub fn gold_response(item: &EvalItem, protocol: Protocol, mc: Option<&McOptions>) -> String {
    match protocol {
        Protocol::By => if item.unanswerable { "unanswerable" } else { "answerable" }.to_string(),
        Protocol::Mc => {
            let owned;
            let mc = match mc {
                Some(m) => m,
                None => {
                    owned = mc_options(item, 0);
                    &owned
                }
            };
            let letter = if item.unanswerable { mc.unanswerable_letter() } else { mc.letter_of(0) };
            letter.to_string()
        }
        Protocol::Oe | Protocol::Oeh => item.gold_answer().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub prompt: String,
    pub exemplar_ids: Vec<String>,
    pub exemplar_images: Vec<String>,
}

/// Prefix `prompt` with worked exemplars drawn from `pool`.
///
/// Exactly `n_answerable` answerable and `n_unanswerable` unanswerable
/// items are drawn without replacement (never `exclude_id`), shuffled, and
/// each rendered as its own prompt, a newline and its gold response.
/// Blocks are separated by a blank line.
pub fn assemble_few_shot(
    prompt: &str,
    shots: &ShotConfig,
    protocol: Protocol,
    pool: &[EvalItem],
    exclude_id: &str,
) -> Result<FewShot, EvalError> {
    if shots.total() == 0 {
        return Ok(FewShot { prompt: prompt.to_string(), exemplar_ids: vec![], exemplar_images: vec![] });
    }
    let mut rng = item_rng(shots.seed, "shots", exclude_id);
    let mut draw = |unanswerable: bool, needed: usize, kind: &'static str| -> Result<Vec<&EvalItem>, EvalError> {
        let candidates: Vec<&EvalItem> = pool.iter().filter(|i| i.unanswerable == unanswerable && i.id != exclude_id).collect();
        if candidates.len() < needed {
            return Err(EvalError::PoolExhausted { kind, needed, available: candidates.len() });
        }
        let mut picked = candidates.into_iter().choose_multiple(&mut rng, needed);
        picked.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(picked)
    };
    let mut chosen = draw(false, shots.n_answerable, "answerable")?;
    chosen.extend(draw(true, shots.n_unanswerable, "unanswerable")?);
    chosen.shuffle(&mut rng);

    let mut blocks = Vec::with_capacity(chosen.len() + 1);
    for ex in &chosen {
        let (p, mc) = item_prompt(ex, protocol, shots.seed)?;
        blocks.push(format!("{p}\n{}", gold_response(ex, protocol, mc.as_ref())));
    }
    blocks.push(prompt.to_string());
    Ok(FewShot {
        prompt: blocks.join("\n\n"),
        exemplar_ids: chosen.iter().map(|e| e.id.clone()).collect(),
        exemplar_images: chosen.iter().map(|e| e.image.clone()).collect(),
    })
}
