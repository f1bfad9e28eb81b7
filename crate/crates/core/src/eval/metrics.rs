use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square confusion matrix, `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_pairs(classes: usize, y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::validation(format!(
                "{} truths for {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut cm = Self::zeros(classes);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= classes || p >= classes {
                return Err(Error::validation(format!("class pair ({t}, {p}) outside 0..{classes}")));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Rows divided by their true-class support; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> BigRational {
    if den == 0 {
        BigRational::zero()
    } else {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("metric ratios are bounded")
}

/// Metrics of a confusion matrix. Everything is computed in exact rational
/// arithmetic and rounded once, so the result does not depend on class order
/// or summation order. Undefined precision (no predictions of a class) is 0.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::validation("metrics over no predictions"));
    }
    let k = cm.classes();
    let mut correct = 0;
    let mut per_class = Vec::with_capacity(k);
    let (mut wp, mut wr, mut wf) = (BigRational::zero(), BigRational::zero(), BigRational::zero());
    for c in 0..k {
        let tp = cm.counts[c][c];
        correct += tp;
        let support = cm.support(c);
        let predicted = cm.predicted(c);
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        // 2PR/(P+R) reduces to 2tp/(support + predicted); 0 when tp = 0
        let f = ratio(2 * tp, support + predicted);
        let w = ratio(support, total);
        wp += &w * &p;
        wr += &w * &r;
        wf += &w * &f;
        per_class.push(ClassMetrics { precision: to_f64(&p), recall: to_f64(&r), f1: to_f64(&f), support });
    }
    Ok(MetricsReport {
        accuracy: to_f64(&ratio(correct, total)),
        per_class,
        weighted_precision: to_f64(&wp),
        weighted_recall: to_f64(&wr),
        weighted_f1: to_f64(&wf),
        total,
    })
}

/// Confusion matrix and metrics of paired labels over `classes` classes.
pub fn compute_metrics(
    classes: usize,
    y_true: &[usize],
    y_pred: &[usize],
) -> Result<(MetricsReport, ConfusionMatrix)> {
    if y_true.is_empty() {
        return Err(Error::validation("metrics over no predictions"));
    }
    let cm = ConfusionMatrix::from_pairs(classes, y_true, y_pred)?;
    Ok((metrics_from_confusion(&cm)?, cm))
}

/// Support-weighted F1 over the modelled scores; 0 for empty input.
pub fn weighted_f1(y_true: &[usize], y_pred: &[usize]) -> f64 {
    compute_metrics(crate::models::NUM_CLASSES, y_true, y_pred)
        .map(|(m, _)| m.weighted_f1)
        .unwrap_or(0.0)
}
