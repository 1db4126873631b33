use std::collections::BTreeSet;

use abstain_core::annotation::{majority_vote, AlteredElement, Provenance, Reason, UnanswerableAnswer};
use abstain_core::data::split_dataset;
use abstain_core::eval::{acc_binary, assemble_few_shot, build_prompt, parse_response, weighted_f1, EvalItem};
use abstain_core::image::{admissible_windows, mask_object, overlap_score, CopyMoveConfig};
use abstain_core::normalize::{normalize_answer, tokenize};
use abstain_core::selective::{select, AnswerDistribution, SelectiveConfig};
use abstain_core::text::{filter_by_perplexity, FnScorer};
use abstain_core::{
    AnnotatorResponse, AnswerType, BBox, ConceptSet, ConsensusOutcome, Protocol, ReplacementCandidate, ShotConfig,
    Split, Variant, Verdict, VqaInstance,
};
use image::{Rgb, RgbImage};
use proptest::prelude::*;

fn instance(i: usize) -> VqaInstance {
    VqaInstance {
        id: format!("i{i}"),
        image_ref: format!("{i}.png"),
        question: "What is it?".into(),
        answers: vec!["thing".into()],
        question_type: "what is".into(),
        answer_type: AnswerType::Other,
        split: Split::Unassigned,
    }
}

fn response(i: usize, answerable: bool, confidence: u8) -> AnnotatorResponse {
    let w = format!("w{i}");
    if answerable {
        AnnotatorResponse::answerable("t", &w, AlteredElement::Question, Provenance::Original, confidence)
    } else {
        AnnotatorResponse::unanswerable("t", &w, Reason::R2, UnanswerableAnswer::A3, confidence)
    }
}

fn pool_item(i: usize, unanswerable: bool) -> EvalItem {
    EvalItem {
        id: format!("p{i:03}"),
        source_id: String::new(),
        kind: None,
        image: format!("p{i}.png"),
        question: format!("What is {i}?"),
        question_type: String::new(),
        answer_type: AnswerType::Number,
        unanswerable,
        options: vec![i.to_string(), (i + 1).to_string(), (i + 2).to_string()],
        valid_answers: vec![i.to_string()],
        reason: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_keeps_exactly_the_small_deltas(deltas in prop::collection::vec(-2.0f64..2.0, 0..16), eps in -0.5f64..1.0) {
        let candidates: Vec<ReplacementCandidate> = (0..deltas.len())
            .map(|i| ReplacementCandidate {
                anchor: "x".into(),
                anchor_position: 0,
                replacement: format!("c{i}"),
                candidate_question: format!("c{i}"),
                lm_delta: None,
            })
            .collect();
        let scorer = FnScorer(|t: &str| {
            Some(match t.strip_prefix('c') {
                Some(i) => 3.0 + deltas[i.parse::<usize>().unwrap()],
                None => 3.0,
            })
        });
        let out = filter_by_perplexity("q", candidates, &scorer, eps).unwrap();
        prop_assert_eq!(out.kept.len() + out.rejected.len(), deltas.len());
        for c in &out.kept {
            prop_assert!(c.lm_delta.unwrap() <= eps);
        }
        for (c, _) in &out.rejected {
            prop_assert!(c.lm_delta.unwrap() > eps);
        }
    }

    #[test]
    fn overlap_is_bounded(
        anchor in prop::collection::btree_set("[a-f]", 0..6),
        candidate in prop::collection::btree_set("[a-f]", 1..6),
        concepts in prop::collection::vec("[a-f]", 0..6),
        alpha in 0.0f64..4.0,
    ) {
        let s = overlap_score(&anchor, &candidate, &ConceptSet::new(&concepts), alpha).unwrap().value;
        prop_assert!(s >= 0.0 && s <= alpha + 1.0 + 1e-12);
        let disjoint: BTreeSet<String> = candidate.iter().map(|c| format!("{c}{c}")).collect();
        prop_assert_eq!(overlap_score(&anchor, &disjoint, &ConceptSet::new(&concepts), alpha).unwrap().value, 0.0);
    }

    #[test]
    fn mask_touches_only_the_box(w in 4u32..40, h in 4u32..40, seed in any::<u8>(), fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let img = RgbImage::from_fn(w, h, |x, y| Rgb([seed ^ x as u8, y as u8 | 1, 200]));
        let bw = ((w as f64 * fx) as u32).max(1);
        let bh = ((h as f64 * fy) as u32).max(1);
        let bbox = BBox::new(w - bw, h - bh, bw, bh);
        let out = mask_object(&img, bbox).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            if bbox.contains(x, y) {
                prop_assert_eq!(p.0, [0, 0, 0]);
            } else {
                prop_assert_eq!(p, img.get_pixel(x, y));
            }
        }
        prop_assert!(mask_object(&img, BBox::new(w - bw, h - bh, bw + 1, bh)).is_err());
    }

    #[test]
    fn copy_move_windows_avoid_relevant_boxes(
        w in 16u32..64, h in 16u32..64,
        boxes in prop::collection::vec((0.0f64..0.8, 0.0f64..0.8, 0.05f64..0.2, 0.05f64..0.2), 1..4),
    ) {
        let relevant: Vec<BBox> = boxes
            .iter()
            .map(|(x, y, bw, bh)| {
                let bw = ((w as f64 * bw) as u32).max(1);
                let bh = ((h as f64 * bh) as u32).max(1);
                BBox::new(((w - bw) as f64 * x) as u32, ((h - bh) as f64 * y) as u32, bw, bh)
            })
            .collect();
        for win in admissible_windows(w, h, relevant[0], &relevant, &CopyMoveConfig::default()) {
            prop_assert!(win.check_within(w, h).is_ok());
            prop_assert!(relevant.iter().all(|r| !r.intersects(&win)));
        }
    }

    #[test]
    fn split_is_a_partition(n in 0usize..400, seed in any::<u64>()) {
        let data: Vec<VqaInstance> = (0..n).map(instance).collect();
        let s = split_dataset(&data, (0.7, 0.1, 0.2), seed).unwrap();
        let (a, b, c) = s.sizes();
        prop_assert_eq!(a + b + c, n);
        prop_assert_eq!(b, (n as f64 * 0.1 + 1e-9).floor() as usize);
        prop_assert_eq!(c, (n as f64 * 0.2 + 1e-9).floor() as usize);
        let all: BTreeSet<&String> = s.train_ids.iter().chain(&s.valid_ids).chain(&s.test_ids).collect();
        prop_assert_eq!(all.len(), n);
    }

    #[test]
    fn majority_follows_the_counts(votes in prop::collection::vec((any::<bool>(), 1u8..=5), 3..9)) {
        let responses: Vec<AnnotatorResponse> = votes.iter().enumerate().map(|(i, (a, c))| response(i, *a, *c)).collect();
        let label = majority_vote(&responses).unwrap();
        let yes = votes.iter().filter(|v| v.0).count();
        let no = votes.len() - yes;
        let expected = match yes.cmp(&no) {
            std::cmp::Ordering::Greater => ConsensusOutcome::Answerable,
            std::cmp::Ordering::Less => ConsensusOutcome::Unanswerable,
            std::cmp::Ordering::Equal => ConsensusOutcome::NoConsensus,
        };
        prop_assert_eq!(label.label, expected);
        let mut reversed = responses.clone();
        reversed.reverse();
        prop_assert_eq!(majority_vote(&reversed).unwrap(), label);
    }

    #[test]
    fn weighted_f1_is_a_proportion(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let f = weighted_f1(&pred, &gold).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        prop_assert!((weighted_f1(&gold, &gold).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parsing_never_panics_and_respects_protocol(raw in ".{0,40}") {
        let opts: Vec<String> = ["red", "blue", "green", "unanswerable"].iter().map(|s| s.to_string()).collect();
        let by = parse_response(&raw, Protocol::By, None).verdict;
        prop_assert!(matches!(by, Verdict::Answerable | Verdict::Unanswerable | Verdict::OutOfScope));
        let mc = parse_response(&raw, Protocol::Mc, Some(&opts)).verdict;
        let mc_ok = matches!(mc, Verdict::Choice { .. } | Verdict::OutOfScope);
        prop_assert!(mc_ok);
        let oe = parse_response(&raw, Protocol::Oe, None).verdict;
        let oe_ok = !matches!(oe, Verdict::Choice { .. } | Verdict::Answerable);
        prop_assert!(oe_ok);
        if raw.trim().is_empty() {
            prop_assert_eq!(oe, Verdict::OutOfScope);
        }
    }

    #[test]
    fn binary_accuracy_counts_matches(pairs in prop::collection::vec((0u8..3, any::<bool>()), 1..50)) {
        let verdicts: Vec<Verdict> = pairs
            .iter()
            .map(|(v, _)| match v {
                0 => Verdict::Answerable,
                1 => Verdict::Unanswerable,
                _ => Verdict::OutOfScope,
            })
            .collect();
        let gold: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let hits = pairs.iter().filter(|(v, g)| (*v == 1 && *g) || (*v == 0 && !*g)).count();
        prop_assert!((acc_binary(&verdicts, &gold).unwrap() - hits as f64 / pairs.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn selection_is_monotone_in_theta(logits in prop::collection::vec(-5.0f64..5.0, 2..8), t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let d = AnswerDistribution::from_logits(logits).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let h = d.entropy();
        let m = d.max_logit();
        let answered = |variant, conf, theta| !select(&d, conf, &SelectiveConfig { variant, theta }).abstained();
        // Raising theta only removes answers for score-style variants and only adds them for entropy.
        prop_assert!(!answered(Variant::MaxLogit, m, hi) || answered(Variant::MaxLogit, m, lo));
        prop_assert!(!answered(Variant::Ent, h, lo) || answered(Variant::Ent, h, hi));
        prop_assert!(h >= -1e-12 && h <= (d.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn few_shot_draws_the_requested_mix(na in 0usize..5, nu in 0usize..5, seed in any::<u64>()) {
        let pool: Vec<EvalItem> = (0..20).map(|i| pool_item(i, i % 2 == 0)).collect();
        let shots = ShotConfig { n_answerable: na, n_unanswerable: nu, seed };
        let query = build_prompt("What is it?", Protocol::Oe, None, None).unwrap();
        let fs = assemble_few_shot(&query, &shots, Protocol::Oe, &pool, "p000").unwrap();
        let unanswerable = fs.exemplar_ids.iter().filter(|id| pool.iter().any(|p| &p.id == *id && p.unanswerable)).count();
        prop_assert_eq!(fs.exemplar_ids.len(), na + nu);
        prop_assert_eq!(unanswerable, nu);
        prop_assert!(!fs.exemplar_ids.contains(&"p000".to_string()));
        let again = assemble_few_shot(&query, &shots, Protocol::Oe, &pool, "p000").unwrap();
        prop_assert_eq!(again, fs);
    }

    #[test]
    fn normalization_is_idempotent(s in "[ A-Za-z0-9.,!?']{0,30}") {
        let once = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&once), once.clone());
        prop_assert!(tokenize(&s).iter().all(|t| !t.is_empty() && !t.contains(' ')));
    }
}
