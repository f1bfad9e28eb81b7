use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use super::protocol::{
    missing_inputs, plan_losocv, run_splits, standard_cv_split, ExcludedWalk, FoldPlan, FoldResult, Method, WalkPrediction,
    WalkRecord, WalkSplit,
};
use super::wilcoxon::{on_off_analysis, wilcoxon_signed_rank, Aggregation, OnOffAnalysis, WilcoxonMethod, WilcoxonResult};
use crate::dataset::MedicationState;
use crate::error::{Error, Result};
use crate::models::NUM_CLASSES;

pub const REPORT_SCHEMA: &str = "gaitbench.report.v1";
pub const GROUND_TRUTH_ROW: &str = "Ground-truth";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Losocv,
    StandardCv,
}

impl Protocol {
    pub fn split_label(self) -> &'static str {
        match self {
            Protocol::Losocv => "leave-one-subject-out",
            Protocol::StandardCv => "70/15/15",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "losocv" => Ok(Self::Losocv),
            "standard_cv" => Ok(Self::StandardCv),
            other => Err(Error::validation(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub parallel: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { protocol: Protocol::Losocv, seed: 0, aggregation: Aggregation::Mean, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTables {
    pub overall: MetricsReport,
    pub off: Option<MetricsReport>,
    pub on: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrices {
    pub overall: ConfusionMatrix,
    pub off: ConfusionMatrix,
    pub on: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub pipeline: String,
    /// Set when the method could not be evaluated; the other fields are then empty.
    pub error: Option<String>,
    pub folds: Vec<FoldResult>,
    pub metrics: Option<MetricsTables>,
    pub confusion: Option<ConfusionMatrices>,
    pub on_off: Option<OnOffAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub method: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonRow {
    pub method: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub n_effective: usize,
    pub test: Option<WilcoxonMethod>,
    pub note: Option<String>,
}

impl WilcoxonRow {
    fn from_result(method: &str, r: &Result<WilcoxonResult>) -> Self {
        match r {
            Ok(w) => Self {
                method: method.to_string(),
                statistic: Some(w.statistic),
                p_value: Some(w.p_value),
                n_effective: w.n_effective,
                test: Some(w.method),
                note: None,
            },
            Err(e) => Self {
                method: method.to_string(),
                statistic: None,
                p_value: None,
                n_effective: 0,
                test: None,
                note: Some(format!("{}: {e}", e.kind())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: String,
    pub protocol: Protocol,
    pub split: String,
    /// Everything needed to rerun: command-line settings, seeds, inputs.
    pub config: serde_json::Value,
    pub folds: Vec<FoldPlan>,
    pub splits: Vec<WalkSplit>,
    pub methods: Vec<MethodReport>,
    /// Ascending by weighted F1.
    pub leaderboard: Vec<LeaderboardRow>,
    pub wilcoxon: Vec<WilcoxonRow>,
    pub excluded: Vec<ExcludedWalk>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::parse("report serialization", e))?;
        s.push('\n');
        Ok(s)
    }

    pub fn failed_methods(&self) -> impl Iterator<Item = &MethodReport> {
        self.methods.iter().filter(|m| m.error.is_some())
    }
}

fn state_pairs(preds: &[WalkPrediction], state: Option<MedicationState>) -> (Vec<usize>, Vec<usize>) {
    preds
        .iter()
        .filter(|p| state.is_none_or(|s| p.medication == s))
        .map(|p| (p.truth, p.predicted))
        .unzip()
}

fn evaluate_predictions(preds: &[WalkPrediction]) -> Result<(MetricsTables, ConfusionMatrices)> {
    let (t, p) = state_pairs(preds, None);
    let (overall, cm) = compute_metrics(NUM_CLASSES, &t, &p)?;
    let by_state = |s| -> Result<(Option<MetricsReport>, ConfusionMatrix)> {
        let (t, p) = state_pairs(preds, Some(s));
        if t.is_empty() {
            return Ok((None, ConfusionMatrix::zeros(NUM_CLASSES)));
        }
        let (m, cm) = compute_metrics(NUM_CLASSES, &t, &p)?;
        Ok((Some(m), cm))
    };
    let (off, off_cm) = by_state(MedicationState::Off)?;
    let (on, on_cm) = by_state(MedicationState::On)?;
    Ok((MetricsTables { overall, off, on }, ConfusionMatrices { overall: cm, off: off_cm, on: on_cm }))
}

/// Evaluates every method under the chosen protocol. A method that fails is
/// reported with its error and the others still run.
pub fn run_benchmark(
    walks: &[WalkRecord],
    methods: &[Method],
    cfg: &BenchmarkConfig,
    config_snapshot: serde_json::Value,
) -> Result<BenchmarkReport> {
    let mut walks = walks.to_vec();
    walks.sort();
    let (folds, splits) = match cfg.protocol {
        Protocol::Losocv => {
            let plans = plan_losocv(&walks, cfg.seed)?;
            let splits = plans.iter().map(|p| p.walk_split(&walks)).collect();
            (plans, splits)
        }
        Protocol::StandardCv => (Vec::new(), vec![standard_cv_split(&walks, cfg.seed)?]),
    };

    let mut reports = Vec::with_capacity(methods.len());
    let mut excluded = Vec::new();
    for method in methods {
        let mut method_excluded = method.excluded.clone();
        method_excluded.extend(missing_inputs(&walks, method));
        excluded.extend(method_excluded.iter().map(|e| ExcludedWalk {
            reason: format!("[{}] {}", method.name, e.reason),
            ..e.clone()
        }));
        let outcome = run_splits(&splits, &walks, method, cfg.seed, cfg.parallel).and_then(|folds| {
            let preds: Vec<WalkPrediction> = folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
            let (metrics, confusion) = evaluate_predictions(&preds)?;
            Ok((folds, metrics, confusion, preds))
        });
        reports.push(match outcome {
            Ok((folds, metrics, confusion, preds)) => {
                let on_off = match on_off_analysis(&preds, cfg.aggregation) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        warn!("{}: no ON/OFF analysis: {e}", method.name);
                        None
                    }
                };
                MethodReport {
                    name: method.name.clone(),
                    pipeline: method.pipeline.kind().to_string(),
                    error: None,
                    folds,
                    metrics: Some(metrics),
                    confusion: Some(confusion),
                    on_off,
                }
            }
            Err(e) => {
                warn!("method {} failed: {e}", method.name);
                MethodReport {
                    name: method.name.clone(),
                    pipeline: method.pipeline.kind().to_string(),
                    error: Some(format!("{}: {e}", e.kind())),
                    folds: Vec::new(),
                    metrics: None,
                    confusion: None,
                    on_off: None,
                }
            }
        });
    }

    let mut leaderboard: Vec<LeaderboardRow> = reports
        .iter()
        .filter_map(|m| {
            let o = &m.metrics.as_ref()?.overall;
            Some(LeaderboardRow {
                method: m.name.clone(),
                accuracy: o.accuracy,
                precision: o.weighted_precision,
                recall: o.weighted_recall,
                f1: o.weighted_f1,
            })
        })
        .collect();
    leaderboard.sort_by(|a, b| a.f1.total_cmp(&b.f1).then_with(|| a.method.cmp(&b.method)));

    let mut wilcoxon = vec![WilcoxonRow::from_result(GROUND_TRUTH_ROW, &ground_truth_test(&walks, cfg.aggregation))];
    for m in reports.iter().filter(|m| m.error.is_none()) {
        let row = match &m.on_off {
            Some(a) => WilcoxonRow::from_result(&m.name, &Ok(a.predicted.clone())),
            None => {
                let preds: Vec<WalkPrediction> = m.folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
                WilcoxonRow::from_result(&m.name, &on_off_analysis(&preds, cfg.aggregation).map(|a| a.predicted))
            }
        };
        wilcoxon.push(row);
    }

    Ok(BenchmarkReport {
        schema: REPORT_SCHEMA.to_string(),
        protocol: cfg.protocol,
        split: cfg.protocol.split_label().to_string(),
        config: config_snapshot,
        folds,
        splits,
        methods: reports,
        leaderboard,
        wilcoxon,
        excluded,
    })
}

/// Signed-rank test on the clinical labels of all walks, for reference.
fn ground_truth_test(walks: &[WalkRecord], how: Aggregation) -> Result<WilcoxonResult> {
    let as_predictions: Vec<WalkPrediction> = walks
        .iter()
        .map(|w| WalkPrediction {
            fold_id: 0,
            walk_id: w.walk_id.clone(),
            participant: w.participant.clone(),
            medication: w.medication,
            truth: w.label,
            predicted: w.label,
            probabilities: [0.0; NUM_CLASSES],
            clips: 0,
        })
        .collect();
    let pairs = super::wilcoxon::pair_on_off(&as_predictions, how)?;
    wilcoxon_signed_rank(&pairs.iter().map(|p| (p.on_truth, p.off_truth)).collect::<Vec<_>>())
}

/// `.0198*` style: four decimals without the leading zero, `*` below 0.05
/// and `**` below 0.01.
pub fn format_p_value(p: f64) -> String {
    let digits = format!("{p:.4}");
    let body = digits.strip_prefix('0').unwrap_or(&digits).to_string();
    let stars = if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    };
    format!("{body}{stars}")
}

fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

/// Method × weighted metrics, two decimals, in leaderboard order.
pub fn leaderboard_table(rows: &[LeaderboardRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                format!("{:.2}", r.accuracy),
                format!("{:.2}", r.precision),
                format!("{:.2}", r.recall),
                format!("{:.2}", r.f1),
            ]
        })
        .collect();
    markdown_table(&["Method", "Accuracy", "Precision", "Recall", "F1-Score"], &body)
}

pub fn wilcoxon_table(rows: &[WilcoxonRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| match (r.statistic, r.p_value) {
            (Some(t), Some(p)) => vec![r.method.clone(), format!("{t:.1}"), format_p_value(p)],
            _ => vec![r.method.clone(), "n/a".into(), "n/a".into()],
        })
        .collect();
    markdown_table(&["Method", "Test Statistic", "p-value"], &body)
}

/// Per-score precision / recall / F1 with support, then the weighted row.
pub fn classification_table(m: &MetricsReport) -> String {
    let mut body: Vec<Vec<String>> = m
        .per_class
        .iter()
        .enumerate()
        .map(|(c, r)| {
            vec![c.to_string(), format!("{:.2}", r.precision), format!("{:.2}", r.recall), format!("{:.2}", r.f1), r.support.to_string()]
        })
        .collect();
    body.push(vec![
        "Weighted Avg".into(),
        format!("{:.2}", m.weighted_precision),
        format!("{:.2}", m.weighted_recall),
        format!("{:.2}", m.weighted_f1),
        m.total.to_string(),
    ]);
    markdown_table(&["Score", "Precision", "Recall", "F1-Score", "Support"], &body)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Row-normalized confusion matrix as a standalone SVG heat map: true score
/// on the vertical axis, predicted score on the horizontal axis.
pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    const CELL: usize = 80;
    const LEFT: usize = 90;
    const TOP: usize = 60;
    let k = cm.classes();
    let width = LEFT + k * CELL + 20;
    let height = TOP + k * CELL + 60;
    let norm = cm.normalized();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        width / 2,
        xml_escape(title)
    );
    for (t, row) in norm.iter().enumerate() {
        for (p, &v) in row.iter().enumerate() {
            let x = LEFT + p * CELL;
            let y = TOP + t * CELL;
            // white → dark blue
            let shade = |lo: f64, hi: f64| (lo + (hi - lo) * v).round() as u8;
            let (r, g, b) = (shade(247.0, 8.0), shade(251.0, 48.0), shade(255.0, 107.0));
            let ink = if v > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#999999"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="14" fill="{ink}">{v:.2}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 5
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="10" fill="{ink}">n={}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 20,
                cm.counts[t][p]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="14">{t}</text>"#,
            LEFT - 10,
            TOP + t * CELL + CELL / 2 + 5
        );
    }
    for p in 0..k {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{p}</text>"#,
            LEFT + p * CELL + CELL / 2,
            TOP + k * CELL + 20
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">Predicted score</text>"#,
        LEFT + k * CELL / 2,
        TOP + k * CELL + 45
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {})">True score</text>"#,
        TOP + k * CELL / 2,
        TOP + k * CELL / 2
    );
    s.push_str("</svg>\n");
    s
}

/// The three figures of a method: overall, OFF and ON, keyed by a file stem.
pub fn method_figures(m: &MethodReport) -> Vec<(String, String)> {
    let Some(c) = &m.confusion else { return Vec::new() };
    [("overall", "all walks", &c.overall), ("off", "OFF medication", &c.off), ("on", "ON medication", &c.on)]
        .into_iter()
        .map(|(stem, label, cm)| (stem.to_string(), confusion_svg(cm, &format!("{} ({label})", m.name))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_formatting() {
        assert_eq!(format_p_value(0.0198), ".0198*");
        assert_eq!(format_p_value(0.0049), ".0049**");
        assert_eq!(format_p_value(0.05), ".0500");
        assert_eq!(format_p_value(0.25), ".2500");
        assert_eq!(format_p_value(1.0), "1.0000");
    }

    #[test]
    fn svg_is_well_formed() {
        let cm = ConfusionMatrix::from_pairs(3, &[0, 1, 2, 2], &[0, 1, 1, 2]).unwrap();
        let svg = confusion_svg(&cm, "a & b");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &amp; b"));
        assert_eq!(svg.matches("<rect").count(), 10);
        assert!(svg.contains(">0.50<"));
    }

    #[test]
    fn protocol_labels() {
        assert_eq!("standard_cv".parse::<Protocol>().unwrap().split_label(), "70/15/15");
        assert!("kfold".parse::<Protocol>().is_err());
    }
}
