use std::collections::HashMap;
use std::path::Path;

use abstain_core::selective::{
    calibrate_scored, fit_selective, load_heads, read_features, read_labels, save_heads, Calibration, LabeledFeature,
    Prediction, Scored, SelectiveHeads, TrainConfig,
};
use abstain_core::FusedFeature;
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::{Manifest, OutputDir};

pub const HEADS: &str = "heads.json";
pub const HEADS_BLOB: &str = "heads.bin";
pub const FIT_REPORT: &str = "fit_report.json";
pub const CALIBRATION: &str = "calibration.json";
pub const PREDICTIONS: &str = "predictions.jsonl";

/// Join features with their labels by id; every feature needs a label.
pub fn labeled(features: Vec<FusedFeature>, labels_path: &Path) -> anyhow::Result<Vec<LabeledFeature>> {
    let labels: HashMap<String, Option<usize>> =
        read_labels(labels_path)?.into_iter().map(|l| (l.id, l.answer)).collect();
    features
        .into_iter()
        .map(|f| {
            let answer = *labels.get(&f.id).with_context(|| format!("no label for feature {:?}", f.id))?;
            Ok(LabeledFeature { feature: f, answer })
        })
        .collect()
}

/// Every observed confidence, plus one point beyond each end so that
/// "answer everything" and "abstain on everything" are both reachable.
pub fn data_grid(confidences: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut g: Vec<f64> = confidences.into_iter().filter(|c| c.is_finite()).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    if let (Some(&lo), Some(&hi)) = (g.first(), g.last()) {
        g.insert(0, lo - 1.0);
        g.push(hi + 1.0);
    }
    g
}

fn score_all(heads: &SelectiveHeads, data: &[LabeledFeature]) -> anyhow::Result<Vec<Scored>> {
    data.iter()
        .map(|l| {
            let (dist, confidence) = heads.score(&l.feature)?;
            Ok(Scored { dist, confidence, answer: l.answer })
        })
        .collect()
}

fn calibrate(cfg: &RunConfig, heads: &SelectiveHeads, data: &[LabeledFeature]) -> anyhow::Result<Calibration> {
    let scored = score_all(heads, data)?;
    let grid = if cfg.select.grid.is_empty() { data_grid(scored.iter().map(|s| s.confidence)) } else { cfg.select.grid.clone() };
    Ok(calibrate_scored(&scored, heads.variant, &grid)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub examples: usize,
    pub unanswerable: usize,
    pub n_answers: usize,
    pub theta: f64,
    /// Open-set accuracy on the training data at `theta`.
    pub train_accuracy: f64,
    /// Answerability accuracy (abstain iff unanswerable) at `theta`.
    pub train_acc_b: f64,
}

pub fn fit(cfg: &RunConfig, out: &OutputDir, features: &Path, labels: &Path) -> anyhow::Result<FitReport> {
    out.claim(&[HEADS, HEADS_BLOB, FIT_REPORT, "select_fit.manifest.json"])?;
    let data = labeled(read_features(features)?, labels)?;
    let s = &cfg.select;
    let n_answers = match s.n_answers {
        0 => data.iter().filter_map(|l| l.answer).max().map_or(0, |m| m + 1),
        n => n,
    };
    if n_answers == 0 {
        bail!("no answerable training example; set select.n_answers");
    }
    let train = TrainConfig {
        variant: s.variant,
        n_answers,
        epochs: s.epochs,
        learning_rate: s.learning_rate,
        batch_size: s.batch_size,
        l2: s.l2,
        seed: s.seed,
    };
    let heads = fit_selective(&data, &train)?;
    save_heads(&heads, &out.path(HEADS))?;

    let cal = calibrate(cfg, &heads, &data)?;
    let mut agree = 0;
    for l in &data {
        if heads.infer(&l.feature, cal.theta)?.abstained() == l.answer.is_none() {
            agree += 1;
        }
    }
    let report = FitReport {
        examples: data.len(),
        unanswerable: data.iter().filter(|l| l.answer.is_none()).count(),
        n_answers,
        theta: cal.theta,
        train_accuracy: cal.accuracy,
        train_acc_b: agree as f64 / data.len() as f64,
    };
    out.write_json(FIT_REPORT, &report)?;

    let mut manifest = Manifest::new("select fit", cfg);
    manifest.seed("select", s.seed);
    manifest.input("features", features)?;
    manifest.input("labels", labels)?;
    manifest.details = serde_json::to_value(&report)?;
    out.write_manifest(manifest, &[HEADS, HEADS_BLOB, FIT_REPORT])?;
    Ok(report)
}

pub fn calibrate_cmd(cfg: &RunConfig, out: &OutputDir, heads_path: &Path, features: &Path, labels: &Path) -> anyhow::Result<Calibration> {
    out.claim(&[CALIBRATION, "select_calibrate.manifest.json"])?;
    let heads = load_heads(heads_path)?;
    let data = labeled(read_features(features)?, labels)?;
    let cal = calibrate(cfg, &heads, &data)?;
    out.write_json(CALIBRATION, &cal)?;
    let mut manifest = Manifest::new("select calibrate", cfg);
    manifest.input("heads", heads_path)?;
    manifest.input("features", features)?;
    manifest.input("labels", labels)?;
    manifest.details = serde_json::json!({ "theta": cal.theta, "accuracy": cal.accuracy });
    out.write_manifest(manifest, &[CALIBRATION])?;
    Ok(cal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub result: Prediction,
    pub confidence: f64,
}

/// Threshold from a calibration file when given, else `select.theta`.
pub fn infer(
    cfg: &RunConfig,
    out: &OutputDir,
    heads_path: &Path,
    features: &Path,
    calibration: Option<&Path>,
) -> anyhow::Result<Vec<PredictionRow>> {
    out.claim(&[PREDICTIONS, "select_infer.manifest.json"])?;
    let theta = match calibration {
        Some(p) => {
            let raw = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<Calibration>(&raw).with_context(|| format!("parsing {}", p.display()))?.theta
        }
        None => cfg.select.theta.context("no threshold: pass --theta or --calibration")?,
    };
    let heads = load_heads(heads_path)?;
    let rows = read_features(features)?
        .into_iter()
        .map(|f| {
            let o = heads.infer(&f, theta)?;
            Ok(PredictionRow { id: f.id, result: o.result, confidence: o.confidence })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    abstain_core::data::write_jsonl(&out.path(PREDICTIONS), &rows)?;
    let mut manifest = Manifest::new("select infer", cfg);
    manifest.input("heads", heads_path)?;
    manifest.input("features", features)?;
    manifest.optional_input("calibration", calibration)?;
    manifest.details = serde_json::json!({
        "theta": theta,
        "rows": rows.len(),
        "abstained": rows.iter().filter(|r| r.result == Prediction::Abstain).count(),
    });
    out.write_manifest(manifest, &[PREDICTIONS])?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_grid_brackets_observations() {
        assert_eq!(data_grid([0.5, 0.2, 0.5, f64::NAN]), vec![-0.8, 0.2, 0.5, 1.5]);
        assert!(data_grid([]).is_empty());
    }
}
