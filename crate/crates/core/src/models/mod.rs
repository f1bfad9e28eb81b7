//! Score classifiers: a random forest over gait features, a linear head over
//! clip embeddings, the built-in statistical encoder and clip-level voting.

mod embeddings;
mod forest;
mod linear;

pub use embeddings::{baseline_encoder, clip_plan, load_embeddings, read_embeddings, write_embeddings, ClipPlan, ClipRef, Embedding, EmbeddingSet, BASELINE_PROVIDER};
pub use forest::{predict_forest, train_random_forest, ForestConfig, Node, RandomForestModel, FOREST_SCHEMA};
pub use linear::{
    loss_and_gradient, train_linear_head, LinearHeadConfig, LinearHeadModel, TrainingTrace, LINEAR_HEAD_SCHEMA,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores 0, 1 and 2 are modelled; the cohort has no higher gait scores.
pub const NUM_CLASSES: usize = 3;

pub type Probabilities = [f64; NUM_CLASSES];

/// Per-class loss / impurity weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; NUM_CLASSES]);

impl ClassWeights {
    pub fn uniform() -> Self {
        Self([1.0; NUM_CLASSES])
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

pub(crate) fn check_labels(labels: &[usize]) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&y| y >= NUM_CLASSES) {
        return Err(Error::validation(format!(
            "label {bad} outside the modelled scores 0..{NUM_CLASSES}"
        )));
    }
    Ok(())
}

pub fn class_counts(labels: &[usize]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for &y in labels {
        counts[y] += 1;
    }
    counts
}

/// `w_c = n / (k n_c)`; every class must occur.
pub fn class_weights_from_labels(labels: &[usize]) -> Result<ClassWeights> {
    if labels.is_empty() {
        return Err(Error::validation("class weights need at least one label"));
    }
    check_labels(labels)?;
    let counts = class_counts(labels);
    if let Some(absent) = counts.iter().position(|&c| c == 0) {
        return Err(Error::validation(format!("class {absent} absent from training labels")));
    }
    let n = labels.len() as f64;
    Ok(ClassWeights(counts.map(|c| n / (NUM_CLASSES as f64 * c as f64))))
}

/// Index of the largest probability; ties go to the lower score.
pub fn argmax(p: &Probabilities) -> usize {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

/// Mode of the clip scores. Tied modes are separated by the summed clip
/// probabilities when they are given, and otherwise (or if still tied) the
/// lower score wins.
pub fn majority_vote(scores: &[usize], probabilities: Option<&[Probabilities]>) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::validation("majority vote over no predictions"));
    }
    check_labels(scores)?;
    let counts = class_counts(scores);
    let top = *counts.iter().max().expect("NUM_CLASSES > 0");
    let tied: Vec<usize> = (0..NUM_CLASSES).filter(|&c| counts[c] == top).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let Some(probs) = probabilities else {
        return Ok(tied[0]);
    };
    if probs.len() != scores.len() {
        return Err(Error::validation(format!(
            "{} probability vectors for {} scores",
            probs.len(),
            scores.len()
        )));
    }
    let mut sums = [0.0; NUM_CLASSES];
    for p in probs {
        for c in 0..NUM_CLASSES {
            sums[c] += p[c];
        }
    }
    // the tolerance keeps the result independent of summation order
    let mut best = tied[0];
    for &c in &tied[1..] {
        if sums[c] > sums[best] + 1e-12 * (1.0 + sums[best].abs()) {
            best = c;
        }
    }
    Ok(best)
}
