use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    sigmoid, uniform_target, AnswerDistribution, BinaryHead, LabeledFeature, LinearHead, Result, SelectiveError,
    SelectiveHeads, Variant,
};

/// Mini-batch gradient descent settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub n_answers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// L2 penalty on weights (not biases).
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { variant: Variant::Ent, n_answers: 2, epochs: 300, learning_rate: 0.5, batch_size: 16, l2: 0.0, seed: 0 }
    }
}

fn init_head(rng: &mut ChaCha8Rng, n_out: usize, dim: usize) -> LinearHead {
    let mut h = LinearHead::zeros(n_out, dim);
    h.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.01..0.01));
    h
}

/// Train the heads for `config.variant`.
///
/// The answer head minimises cross-entropy against one-hot targets for
/// answerable examples. Under `ENT` / `MAXLOGIT`, unanswerable examples use
/// the uniform target; under `CLS` they are left out of the answer head and
/// a binary head is fit with logistic loss on answerability.
pub fn fit_selective(train: &[LabeledFeature], config: &TrainConfig) -> Result<SelectiveHeads> {
    let first = train.first().ok_or(SelectiveError::Empty("training set"))?;
    let dim = first.feature.x.len();
    let n = config.n_answers;
    if n == 0 {
        return Err(SelectiveError::EmptyAnswerSet);
    }
    for l in train {
        if l.feature.x.len() != dim {
            return Err(SelectiveError::DimensionMismatch { expected: dim, got: l.feature.x.len() });
        }
        if let Some(a) = l.answer.filter(|&a| a >= n) {
            return Err(SelectiveError::AnswerOutOfRange { id: a, size: n });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut answer = init_head(&mut rng, n, dim);
    let mut binary = (config.variant == Variant::Cls).then(|| BinaryHead { w: vec![0.0; dim], b: 0.0 });
    let uniform = uniform_target(n)?.probs;

    let answer_rows: Vec<usize> = (0..train.len())
        .filter(|&i| config.variant != Variant::Cls || train[i].answer.is_some())
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = config.batch_size.max(1);
    let lr = config.learning_rate;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut gw = vec![0.0; n * dim];
            let mut gb = vec![0.0; n];
            let mut count = 0usize;
            let mut bw = vec![0.0; dim];
            let mut bb = 0.0;
            for &i in chunk {
                let ex = &train[i];
                let x = &ex.feature.x;
                if answer_rows.binary_search(&i).is_ok() {
                    let p = AnswerDistribution::from_logits(answer.logits(x)?)?.probs;
                    for j in 0..n {
                        let t = match ex.answer {
                            Some(a) => (a == j) as u8 as f64,
                            None => uniform[j],
                        };
                        let g = p[j] - t;
                        gb[j] += g;
                        for (k, v) in x.iter().enumerate() {
                            gw[j * dim + k] += g * v;
                        }
                    }
                    count += 1;
                }
                if let Some(h) = &binary {
                    let g = sigmoid(h.score(x)?) - ex.answer.is_some() as u8 as f64;
                    bb += g;
                    for (k, v) in x.iter().enumerate() {
                        bw[k] += g * v;
                    }
                }
            }
            if count > 0 {
                let s = lr / count as f64;
                for (w, g) in answer.weights.iter_mut().zip(&gw) {
                    *w -= s * g + lr * config.l2 * *w;
                }
                for (b, g) in answer.bias.iter_mut().zip(&gb) {
                    *b -= s * g;
                }
            }
            if let Some(h) = &mut binary {
                let s = lr / chunk.len() as f64;
                for (w, g) in h.w.iter_mut().zip(&bw) {
                    *w -= s * g + lr * config.l2 * *w;
                }
                h.b -= s * bb;
            }
        }
    }
    if answer.weights.iter().chain(&answer.bias).any(|v| !v.is_finite()) {
        return Err(SelectiveError::NonFinite("trained answer head"));
    }
    Ok(SelectiveHeads { variant: config.variant, answer, binary })
}
