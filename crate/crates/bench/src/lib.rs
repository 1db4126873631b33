//! Deterministic inputs shared by the benchmarks.

use std::collections::BTreeSet;

use abstain_core::eval::{EvalItem, Outcome};
use abstain_core::selective::AnswerDistribution;
use abstain_core::text::LookupScorer;
use abstain_core::{AnswerType, ReplacementCandidate, Verdict};
use image::{Rgb, RgbImage};

/// Small LCG so fixtures need no RNG dependency.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1))
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 33) as u32
    }

    pub fn below(&mut self, n: u32) -> u32 {
        self.next_u32() % n
    }

    pub fn unit(&mut self) -> f64 {
        self.next_u32() as f64 / (1u64 << 31) as f64
    }
}

pub fn object_sets(n: usize, vocab: u32, seed: u64) -> Vec<BTreeSet<String>> {
    let mut rng = Lcg::new(seed);
    (0..n).map(|_| (0..1 + rng.below(10)).map(|_| format!("obj{}", rng.below(vocab))).collect()).collect()
}

/// `n` candidates around one original question, with scores for all of them.
pub fn filter_fixture(n: usize) -> (String, Vec<ReplacementCandidate>, LookupScorer) {
    let mut rng = Lcg::new(n as u64);
    let original = "What is on the table?".to_string();
    let mut scorer = LookupScorer::new([(original.clone(), 10.0)]);
    let candidates = (0..n)
        .map(|i| {
            let q = format!("What is on the thing{i}?");
            scorer.insert(q.clone(), 9.5 + rng.unit());
            ReplacementCandidate {
                anchor: "table".into(),
                anchor_position: 4,
                replacement: format!("thing{i}"),
                candidate_question: q,
                lm_delta: None,
            }
        })
        .collect();
    (original, candidates, scorer)
}

pub fn noisy_image(w: u32, h: u32) -> RgbImage {
    let mut rng = Lcg::new((w as u64) << 16 | h as u64);
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]))
}

pub fn label_pairs(n: usize, classes: u32) -> (Vec<usize>, Vec<usize>) {
    let mut rng = Lcg::new(7);
    (0..n).map(|_| (rng.below(classes) as usize, rng.below(classes) as usize)).unzip()
}

pub fn outcomes(n: usize) -> Vec<Outcome> {
    let mut rng = Lcg::new(11);
    (0..n)
        .map(|i| {
            let unanswerable = rng.below(3) == 0;
            let verdict = match rng.below(10) {
                0 => Verdict::OutOfScope,
                1..=4 => Verdict::FreeText(format!("a{}", rng.below(20))),
                _ => Verdict::Unanswerable,
            };
            let prediction = match &verdict {
                Verdict::FreeText(t) => Some(t.clone()),
                Verdict::Unanswerable => Some("unanswerable".into()),
                _ => None,
            };
            Outcome {
                answer_type: AnswerType::ALL[i % 3],
                unanswerable,
                valid_answers: vec![format!("a{}", i % 20)],
                verdict,
                prediction,
                error: false,
            }
        })
        .collect()
}

pub fn distributions(n: usize, classes: usize) -> Vec<AnswerDistribution> {
    let mut rng = Lcg::new(13);
    (0..n)
        .map(|_| AnswerDistribution::from_logits((0..classes).map(|_| 8.0 * rng.unit() - 4.0).collect()).expect("finite logits"))
        .collect()
}

pub fn eval_items(n: usize) -> Vec<EvalItem> {
    (0..n)
        .map(|i| EvalItem {
            id: format!("e{i:05}"),
            source_id: format!("e{i}"),
            kind: None,
            image: format!("e{i}.png"),
            question: format!("What is object {i}?"),
            question_type: "what is".into(),
            answer_type: AnswerType::Other,
            unanswerable: i % 3 == 0,
            options: vec![format!("a{i}"), format!("b{i}"), format!("c{i}")],
            valid_answers: vec![format!("a{i}")],
            reason: None,
        })
        .collect()
}
