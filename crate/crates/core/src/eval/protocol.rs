use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, MedicationState, ParticipantId};
use crate::error::{Error, Result};
use crate::features::{walk_features, FeatureConfig, FeatureRow};
use crate::models::{
    argmax, class_counts, majority_vote, train_linear_head, train_random_forest, ClassWeights, EmbeddingSet,
    ForestConfig, LinearHeadConfig, Probabilities, NUM_CLASSES,
};
use crate::seeding::{derive_seed, rng_for};
use crate::skeleton::{to_h36m17, JointMapping};

use super::metrics::weighted_f1;

/// Validation participants per fold in a 23-participant cohort.
const REFERENCE_VALIDATION: usize = 6;
const REFERENCE_COHORT: usize = 23;

/// Metadata of one walk taking part in an evaluation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WalkRecord {
    pub walk_id: String,
    pub participant: ParticipantId,
    pub medication: MedicationState,
    pub label: usize,
}

impl WalkRecord {
    pub fn from_manifest(manifest: &DatasetManifest) -> Vec<WalkRecord> {
        manifest
            .walks
            .iter()
            .map(|d| WalkRecord {
                walk_id: d.walk_id.clone(),
                participant: d.participant.clone(),
                medication: d.medication,
                label: d.label.index(),
            })
            .collect()
    }

    pub fn from_feature_rows(rows: &[FeatureRow]) -> Vec<WalkRecord> {
        rows.iter()
            .map(|r| WalkRecord {
                walk_id: r.walk_id.clone(),
                participant: r.participant.clone(),
                medication: r.medication,
                label: r.label.index(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_id: usize,
    pub test_participant: ParticipantId,
    pub validation_participants: Vec<ParticipantId>,
    pub training_participants: Vec<ParticipantId>,
}

/// Walk-level partition a fold is trained and scored on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkSplit {
    pub fold_id: usize,
    pub training: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl FoldPlan {
    pub fn walk_split(&self, walks: &[WalkRecord]) -> WalkSplit {
        let val: BTreeSet<&ParticipantId> = self.validation_participants.iter().collect();
        let train: BTreeSet<&ParticipantId> = self.training_participants.iter().collect();
        let mut split = WalkSplit { fold_id: self.fold_id, training: BTreeSet::new(), validation: BTreeSet::new(), test: BTreeSet::new() };
        for w in walks {
            let id = w.walk_id.clone();
            if w.participant == self.test_participant {
                split.test.insert(id);
            } else if val.contains(&w.participant) {
                split.validation.insert(id);
            } else if train.contains(&w.participant) {
                split.training.insert(id);
            }
        }
        split
    }
}

/// A participant's label for balancing: their most frequent walk label,
/// ties to the lower score.
pub fn participant_labels(walks: &[WalkRecord]) -> BTreeMap<ParticipantId, usize> {
    let mut counts: BTreeMap<&ParticipantId, BTreeMap<usize, usize>> = BTreeMap::new();
    for w in walks {
        *counts.entry(&w.participant).or_default().entry(w.label).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(p, c)| {
            let mut best = (0, 0);
            for (&label, &n) in &c {
                if n > best.1 {
                    best = (label, n);
                }
            }
            (p.clone(), best.0)
        })
        .collect()
}

/// Validation set size: 6 of 23 scaled to the cohort, at least one, and
/// leaving at least one training participant.
pub fn validation_size(participants: usize) -> usize {
    let scaled = (participants as f64 * REFERENCE_VALIDATION as f64 / REFERENCE_COHORT as f64).round() as usize;
    scaled.clamp(1, participants.saturating_sub(2).max(1))
}

/// One fold per participant, in participant order. Validation participants
/// are taken round-robin over labels from seeded per-label shuffles, never
/// taking the last training participant of a label while others remain.
pub fn plan_losocv(walks: &[WalkRecord], seed: u64) -> Result<Vec<FoldPlan>> {
    let labels = participant_labels(walks);
    if labels.len() < 3 {
        return Err(Error::validation(format!(
            "leave-one-subject-out needs at least 3 participants, found {}",
            labels.len()
        )));
    }
    let distinct: BTreeSet<usize> = walks.iter().map(|w| w.label).collect();
    if distinct.len() < 2 {
        return Err(Error::validation("leave-one-subject-out needs at least 2 labels"));
    }
    let n_val = validation_size(labels.len());
    let participants: Vec<&ParticipantId> = labels.keys().collect();
    let mut plans = Vec::with_capacity(participants.len());
    for (fold_id, &test) in participants.iter().enumerate() {
        let mut groups: BTreeMap<usize, Vec<&ParticipantId>> = BTreeMap::new();
        for &p in &participants {
            if p != test {
                groups.entry(labels[p]).or_default().push(p);
            }
        }
        let mut rng = rng_for(seed, &["fold".into(), fold_id.into()]);
        for g in groups.values_mut() {
            g.shuffle(&mut rng);
        }
        let mut chosen: Vec<&ParticipantId> = Vec::with_capacity(n_val);
        let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
        // first pass keeps one participant of every label for training
        for keep in [1usize, 0] {
            loop {
                let before = chosen.len();
                for (label, g) in &groups {
                    if chosen.len() == n_val {
                        break;
                    }
                    let t = taken.entry(*label).or_default();
                    if *t + keep < g.len() {
                        chosen.push(g[*t]);
                        *t += 1;
                    }
                }
                if chosen.len() == n_val || chosen.len() == before {
                    break;
                }
            }
        }
        let val: BTreeSet<&ParticipantId> = chosen.iter().copied().collect();
        plans.push(FoldPlan {
            fold_id,
            test_participant: test.clone(),
            validation_participants: val.iter().map(|p| (*p).clone()).collect(),
            training_participants: participants
                .iter()
                .filter(|p| **p != test && !val.contains(*p))
                .map(|p| (*p).clone())
                .collect(),
        });
    }
    Ok(plans)
}

/// Shares of the walk-level split used by the standard protocol.
pub const STANDARD_SPLIT: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// One seeded 70/15/15 split over walks, ignoring participants.
pub fn standard_cv_split(walks: &[WalkRecord], seed: u64) -> Result<WalkSplit> {
    if walks.len() < 3 {
        return Err(Error::validation("standard split needs at least 3 walks"));
    }
    let mut ids: Vec<&str> = walks.iter().map(|w| w.walk_id.as_str()).collect();
    ids.sort_unstable();
    ids.shuffle(&mut rng_for(seed, &["standard_cv".into()]));
    let n = ids.len();
    let n_train = ((n as f64 * STANDARD_SPLIT.0).round() as usize).clamp(1, n - 2);
    let n_val = ((n as f64 * STANDARD_SPLIT.1).round() as usize).clamp(1, n - n_train - 1);
    let set = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
    Ok(WalkSplit {
        fold_id: 0,
        training: set(&ids[..n_train]),
        validation: set(&ids[n_train..n_train + n_val]),
        test: set(&ids[n_train + n_val..]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPrediction {
    pub fold_id: usize,
    pub walk_id: String,
    pub participant: ParticipantId,
    pub medication: MedicationState,
    pub truth: usize,
    pub predicted: usize,
    /// Mean of the clip probabilities.
    pub probabilities: Probabilities,
    pub clips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedWalk {
    pub walk_id: String,
    pub participant: ParticipantId,
    pub kind: String,
    pub reason: String,
}

impl ExcludedWalk {
    pub fn new(walk: &WalkRecord, err: &Error) -> Self {
        Self {
            walk_id: walk.walk_id.clone(),
            participant: walk.participant.clone(),
            kind: err.kind().to_string(),
            reason: err.to_string(),
        }
    }
}

/// Classifier and the inputs it consumes.
#[derive(Debug, Clone)]
pub enum Pipeline {
    RandomForest { config: ForestConfig, rows: Vec<FeatureRow> },
    LinearHead { config: LinearHeadConfig, embeddings: EmbeddingSet },
}

impl Pipeline {
    pub fn kind(&self) -> &'static str {
        match self {
            Pipeline::RandomForest { .. } => "random_forest",
            Pipeline::LinearHead { .. } => "linear_head",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Method {
    pub name: String,
    pub pipeline: Pipeline,
    /// Walks already dropped upstream (e.g. failed feature extraction).
    pub excluded: Vec<ExcludedWalk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_id: usize,
    pub training_samples: usize,
    pub validation_samples: usize,
    pub validation_weighted_f1: Option<f64>,
    /// Kept epoch of the linear head.
    pub best_epoch: Option<usize>,
    pub predictions: Vec<WalkPrediction>,
}

/// `n / (k n_c)` over the classes present; absent classes have no samples
/// and keep weight 1.
pub fn fold_class_weights(labels: &[usize]) -> ClassWeights {
    let counts = class_counts(labels);
    let present = counts.iter().filter(|&&c| c > 0).count().max(1) as f64;
    let n = labels.len() as f64;
    ClassWeights(counts.map(|c| if c == 0 { 1.0 } else { n / (present * c as f64) }))
}

struct Samples {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

fn mean_probabilities(ps: &[Probabilities]) -> Probabilities {
    let mut m = [0.0; NUM_CLASSES];
    for p in ps {
        for c in 0..NUM_CLASSES {
            m[c] += p[c] / ps.len() as f64;
        }
    }
    m
}

/// Trains on the split's training walks, early-stops on its validation
/// walks and predicts every test walk by majority vote over its clips.
/// Errors carry the fold id.
pub fn run_fold(split: &WalkSplit, walks: &[WalkRecord], method: &Method, seed: u64) -> Result<FoldResult> {
    run_fold_inner(split, walks, method, seed).map_err(|e| e.in_fold(split.fold_id))
}

fn run_fold_inner(split: &WalkSplit, walks: &[WalkRecord], method: &Method, seed: u64) -> Result<FoldResult> {
    let fold_seed = |base: u64| derive_seed(base, &["fold".into(), split.fold_id.into(), seed.into()]);
    let meta: BTreeMap<&str, &WalkRecord> = walks.iter().map(|w| (w.walk_id.as_str(), w)).collect();
    // samples of one walk, one row per clip
    let walk_samples = |id: &str| -> Vec<Vec<f64>> {
        match &method.pipeline {
            Pipeline::RandomForest { rows, .. } => rows
                .iter()
                .filter(|r| r.walk_id == id)
                .map(|r| r.features.to_array().to_vec())
                .collect(),
            Pipeline::LinearHead { embeddings, .. } => embeddings.walk_clips(id).map(|(_, v)| v.to_vec()).collect(),
        }
    };
    let gather = |ids: &BTreeSet<String>| -> Samples {
        let mut s = Samples { x: Vec::new(), y: Vec::new() };
        for id in ids {
            let Some(w) = meta.get(id.as_str()) else { continue };
            for row in walk_samples(id) {
                s.x.push(row);
                s.y.push(w.label);
            }
        }
        s
    };
    let train = gather(&split.training);
    let val = gather(&split.validation);
    if train.x.is_empty() {
        return Err(Error::validation("fold has no training samples"));
    }
    let weights = fold_class_weights(&train.y);

    enum Trained {
        Forest(crate::models::RandomForestModel),
        Head(crate::models::LinearHeadModel),
    }
    let (model, best_epoch) = match &method.pipeline {
        Pipeline::RandomForest { config, .. } => {
            let cfg = ForestConfig { seed: fold_seed(config.seed), ..*config };
            (Trained::Forest(train_random_forest(&train.x, &train.y, &weights, &cfg)?), None)
        }
        Pipeline::LinearHead { config, .. } => {
            let cfg = LinearHeadConfig { seed: fold_seed(config.seed), ..*config };
            let validation = (!val.x.is_empty()).then_some((val.x.as_slice(), val.y.as_slice()));
            let (m, trace) = train_linear_head(&train.x, &train.y, &weights, validation, &cfg)?;
            (Trained::Head(m), Some(trace.best_epoch))
        }
    };
    let predict = |x: &[f64]| match &model {
        Trained::Forest(m) => m.predict(x),
        Trained::Head(m) => m.predict(x),
    };

    let validation_weighted_f1 = if val.x.is_empty() {
        None
    } else {
        let preds = val.x.iter().map(|x| predict(x).map(|p| argmax(&p))).collect::<Result<Vec<_>>>()?;
        Some(weighted_f1(&val.y, &preds))
    };

    let mut predictions = Vec::new();
    for id in &split.test {
        let Some(w) = meta.get(id.as_str()) else { continue };
        let rows = walk_samples(id);
        if rows.is_empty() {
            continue;
        }
        let probs = rows.iter().map(|x| predict(x)).collect::<Result<Vec<_>>>()?;
        let scores: Vec<usize> = probs.iter().map(argmax).collect();
        predictions.push(WalkPrediction {
            fold_id: split.fold_id,
            walk_id: id.clone(),
            participant: w.participant.clone(),
            medication: w.medication,
            truth: w.label,
            predicted: majority_vote(&scores, Some(&probs))?,
            probabilities: mean_probabilities(&probs),
            clips: rows.len(),
        });
    }
    Ok(FoldResult {
        fold_id: split.fold_id,
        training_samples: train.x.len(),
        validation_samples: val.x.len(),
        validation_weighted_f1,
        best_epoch,
        predictions,
    })
}

/// Walks of `walks` the method has no samples for, in walk order, besides
/// those it already lists as excluded.
pub fn missing_inputs(walks: &[WalkRecord], method: &Method) -> Vec<ExcludedWalk> {
    let known: BTreeSet<&str> = method.excluded.iter().map(|e| e.walk_id.as_str()).collect();
    let present: BTreeSet<&str> = match &method.pipeline {
        Pipeline::RandomForest { rows, .. } => rows.iter().map(|r| r.walk_id.as_str()).collect(),
        Pipeline::LinearHead { embeddings, .. } => embeddings.by_clip.keys().map(|k| k.walk_id.as_str()).collect(),
    };
    walks
        .iter()
        .filter(|w| !present.contains(w.walk_id.as_str()) && !known.contains(w.walk_id.as_str()))
        .map(|w| {
            let reason = match &method.pipeline {
                Pipeline::RandomForest { .. } => "no feature row for walk",
                Pipeline::LinearHead { .. } => "no embeddings for walk",
            };
            ExcludedWalk::new(w, &Error::validation(reason))
        })
        .collect()
}

/// Runs every split, in parallel or serially; results are in split order
/// and identical either way. The first failing split (in order) is returned
/// as the error.
pub fn run_splits(
    splits: &[WalkSplit],
    walks: &[WalkRecord],
    method: &Method,
    seed: u64,
    parallel: bool,
) -> Result<Vec<FoldResult>> {
    let results: Vec<Result<FoldResult>> = if parallel {
        splits.par_iter().map(|s| run_fold(s, walks, method, seed)).collect()
    } else {
        splits.iter().map(|s| run_fold(s, walks, method, seed)).collect()
    };
    let out = results.into_iter().collect::<Result<Vec<_>>>()?;
    info!("{}: {} folds complete", method.name, out.len());
    Ok(out)
}

/// Features for every manifest walk; walks whose extraction fails are
/// returned as exclusions instead of aborting.
/// Walks in another layout are mapped to 17 joints first.
pub fn extract_feature_rows(
    manifest: &DatasetManifest,
    cfg: &FeatureConfig,
    mapping: Option<&JointMapping>,
) -> (Vec<FeatureRow>, Vec<ExcludedWalk>) {
    let results: Vec<(WalkRecord, Result<FeatureRow>)> = manifest
        .walks
        .par_iter()
        .map(|d| {
            let record = WalkRecord {
                walk_id: d.walk_id.clone(),
                participant: d.participant.clone(),
                medication: d.medication,
                label: d.label.index(),
            };
            let row = manifest.load_walk(d).and_then(|walk| {
                let walk = to_h36m17(&walk, mapping)?;
                let (_, features) = walk_features(&walk, cfg)?;
                Ok(FeatureRow {
                    walk_id: walk.walk_id,
                    participant: walk.participant,
                    medication: walk.medication,
                    label: walk.label,
                    features,
                })
            });
            (record, row)
        })
        .collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (record, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                warn!("walk {} excluded: {e}", record.walk_id);
                excluded.push(ExcludedWalk::new(&record, &e));
            }
        }
    }
    (rows, excluded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn cohort(participants: usize, walks_each: usize) -> Vec<WalkRecord> {
        (0..participants)
            .flat_map(|p| {
                (0..walks_each).map(move |w| WalkRecord {
                    walk_id: format!("p{p:02}-w{w:02}"),
                    participant: ParticipantId::new(format!("p{p:02}")).unwrap(),
                    medication: if w % 2 == 0 { MedicationState::Off } else { MedicationState::On },
                    label: p % 3,
                })
            })
            .collect()
    }

    #[test]
    fn validation_sizes() {
        assert_eq!(validation_size(23), 6);
        assert_eq!(validation_size(3), 1);
        assert_eq!(validation_size(4), 1);
        assert_eq!(validation_size(12), 3);
        assert_eq!(validation_size(24), 6);
    }

    #[test]
    fn twenty_three_folds() {
        let walks = cohort(23, 4);
        let plans = plan_losocv(&walks, 7).unwrap();
        assert_eq!(plans.len(), 23);
        for p in &plans {
            assert_eq!(p.validation_participants.len(), 6);
            assert_eq!(p.training_participants.len(), 16);
            // two participants of every label in validation
            let labels = participant_labels(&walks);
            let mut counts = [0; 3];
            for v in &p.validation_participants {
                counts[labels[v]] += 1;
            }
            assert_eq!(counts, [2, 2, 2]);
        }
        assert_eq!(plans, plan_losocv(&walks, 7).unwrap());
        assert_ne!(plans, plan_losocv(&walks, 8).unwrap());
    }

    #[test]
    fn minimal_cohort() {
        let plans = plan_losocv(&cohort(3, 1), 0).unwrap();
        assert_eq!(plans.len(), 3);
        assert!(plans.iter().all(|p| p.validation_participants.len() == 1 && p.training_participants.len() == 1));
    }

    #[test]
    fn infeasible_cohorts_are_rejected() {
        assert!(matches!(plan_losocv(&cohort(2, 3), 0), Err(Error::Validation(_))));
        let single_label: Vec<_> = cohort(5, 2).into_iter().map(|w| WalkRecord { label: 1, ..w }).collect();
        assert!(plan_losocv(&single_label, 0).is_err());
    }

    #[test]
    fn rare_label_stays_in_training() {
        // labels 0,0,0,0,0,0,1,1,1,1,1,2,2: the last label-2 participant is
        // never moved to validation
        let mut walks = cohort(13, 1);
        for (i, w) in walks.iter_mut().enumerate() {
            w.label = if i < 6 { 0 } else if i < 11 { 1 } else { 2 };
        }
        let labels = participant_labels(&walks);
        for plan in plan_losocv(&walks, 3).unwrap() {
            let train: BTreeSet<usize> = plan.training_participants.iter().map(|p| labels[p]).collect();
            let remaining: BTreeSet<usize> = labels.iter().filter(|(p, _)| **p != plan.test_participant).map(|(_, l)| *l).collect();
            assert_eq!(train, remaining);
        }
    }

    #[test]
    fn standard_split_shares() {
        let walks = cohort(10, 10);
        let s = standard_cv_split(&walks, 1).unwrap();
        assert_eq!((s.training.len(), s.validation.len(), s.test.len()), (70, 15, 15));
        assert!(s.training.is_disjoint(&s.test) && s.validation.is_disjoint(&s.test));
        assert_eq!(s, standard_cv_split(&walks, 1).unwrap());
    }

    #[test]
    fn fold_weights_skip_absent_classes() {
        let w = fold_class_weights(&[0, 0, 0, 1]);
        assert_eq!(w.0, [4.0 / 6.0, 2.0, 1.0]);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint(n in 3usize..30, walks_each in 1usize..3, seed in any::<u64>()) {
            let walks = cohort(n, walks_each);
            let plans = plan_losocv(&walks, seed).unwrap();
            let mut tested = BTreeSet::new();
            for p in &plans {
                let val: BTreeSet<_> = p.validation_participants.iter().collect();
                let train: BTreeSet<_> = p.training_participants.iter().collect();
                prop_assert!(!val.contains(&p.test_participant) && !train.contains(&p.test_participant));
                prop_assert!(val.is_disjoint(&train));
                prop_assert_eq!(val.len() + train.len() + 1, n);
                prop_assert!(tested.insert(p.test_participant.clone()));
                let split = p.walk_split(&walks);
                prop_assert!(split.test.is_disjoint(&split.training) && split.test.is_disjoint(&split.validation));
                prop_assert_eq!(split.test.len(), walks_each);
            }
            prop_assert_eq!(tested.len(), n);
        }
    }
}
