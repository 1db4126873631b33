use serde::{Deserialize, Serialize};

use super::metrics::MetricReport;
use super::{Protocol, ShotConfig};

/// One evaluation run as listed in a rendered table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub protocol: Protocol,
    pub shots: ShotConfig,
    pub report: MetricReport,
}

impl RunSummary {
    /// Binary accuracy for BY, open-set accuracy otherwise.
    pub fn headline(&self) -> f64 {
        match self.protocol {
            Protocol::By => self.report.acc_b,
            _ => self.report.acc_o.unwrap_or(self.report.acc_b),
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Plain-text table: one row per model and shot composition, one accuracy
/// column per protocol present, then one out-of-scope column per protocol.
pub fn render_table(runs: &[RunSummary]) -> String {
    let mut protocols: Vec<Protocol> = runs.iter().map(|r| r.protocol).collect();
    protocols.sort();
    protocols.dedup();
    let mut keys: Vec<(String, usize, usize)> = Vec::new();
    for r in runs {
        let k = (r.model.clone(), r.shots.n_answerable, r.shots.n_unanswerable);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }

    let mut header = vec!["Model".to_string(), "#Shots".into(), "#Ans".into(), "#Una".into()];
    header.extend(protocols.iter().map(|p| format!("{p} (%)")));
    header.extend(protocols.iter().map(|p| format!("{p} OoS (%)")));
    let mut rows = vec![header];
    for (model, na, nu) in &keys {
        let mut row = vec![model.clone(), (na + nu).to_string(), na.to_string(), nu.to_string()];
        let find = |p: Protocol| {
            runs.iter().rev().find(|r| &r.model == model && r.shots.n_answerable == *na && r.shots.n_unanswerable == *nu && r.protocol == p)
        };
        row.extend(protocols.iter().map(|p| find(*p).map(|r| pct(r.headline())).unwrap_or_else(|| "-".into())));
        row.extend(protocols.iter().map(|p| find(*p).map(|r| pct(r.report.oos_ratio)).unwrap_or_else(|| "-".into())));
        rows.push(row);
    }

    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let line = |r: &Vec<String>| {
        r.iter()
            .enumerate()
            .map(|(c, cell)| if c == 0 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = String::new();
    out.push_str(&line(&rows[0]));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in &rows[1..] {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}
