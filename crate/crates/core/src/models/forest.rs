use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_labels, ClassWeights, Probabilities, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::seeding::rng_for;

pub const FOREST_SCHEMA: &str = "gaitbench.random_forest.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features drawn per split.
    pub mtry: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: 4,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf { probabilities: Probabilities },
}

impl Node {
    fn predict(&self, x: &[f64]) -> &Probabilities {
        let mut node = self;
        loop {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
                Node::Leaf { probabilities } => return probabilities,
            }
        }
    }

    fn check(&self, n_features: usize) -> Result<()> {
        match self {
            Node::Split { feature, threshold, left, right } => {
                if *feature >= n_features || !threshold.is_finite() {
                    return Err(Error::validation(format!(
                        "split on feature {feature} at {threshold} is invalid for {n_features} features"
                    )));
                }
                left.check(n_features)?;
                right.check(n_features)
            }
            Node::Leaf { probabilities } => {
                let sum: f64 = probabilities.iter().sum();
                if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::validation(format!("leaf probabilities {probabilities:?} do not sum to 1")));
                }
                Ok(())
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            Node::Leaf { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub schema: String,
    pub n_features: usize,
    pub config: ForestConfig,
    pub class_weights: ClassWeights,
    pub trees: Vec<Node>,
}

impl RandomForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<Probabilities> {
        predict_forest(self, x)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict(x)?))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::parse("forest serialization", e))
    }

    /// Parses and checks a serialized forest. Trees may be deeper than
    /// serde_json's default nesting limit.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let model = Self::deserialize(&mut de).map_err(|e| Error::parse("forest model", e))?;
        de.end().map_err(|e| Error::parse("forest model", e))?;
        if model.schema != FOREST_SCHEMA {
            return Err(Error::parse("forest model", format!("unknown schema {:?}", model.schema)));
        }
        if model.trees.is_empty() {
            return Err(Error::validation("forest has no trees"));
        }
        for tree in &model.trees {
            tree.check(model.n_features)?;
        }
        Ok(model)
    }
}

/// Mean of the leaf distributions reached in every tree.
pub fn predict_forest(model: &RandomForestModel, x: &[f64]) -> Result<Probabilities> {
    if x.len() != model.n_features {
        return Err(Error::validation(format!(
            "forest expects {} features, got {}",
            model.n_features,
            x.len()
        )));
    }
    let mut sum = [0.0; NUM_CLASSES];
    for tree in &model.trees {
        for (s, p) in sum.iter_mut().zip(tree.predict(x)) {
            *s += p;
        }
    }
    let n = model.trees.len() as f64;
    Ok(sum.map(|s| s / n))
}

struct Grower<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a ClassWeights,
    cfg: &'a ForestConfig,
    rng: R,
}

fn class_totals(idx: &[usize], y: &[usize], w: &ClassWeights) -> Probabilities {
    let mut t = [0.0; NUM_CLASSES];
    for &i in idx {
        t[y[i]] += w.get(y[i]);
    }
    t
}

/// `sum_c t_c^2 / T`, the part of `T * gini` that a split can change.
fn purity(t: &Probabilities) -> f64 {
    let total: f64 = t.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    t.iter().map(|v| v * v).sum::<f64>() / total
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Grower<'_, R> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let t = class_totals(idx, self.y, self.w);
        let total: f64 = t.iter().sum();
        Node::Leaf { probabilities: t.map(|v| v / total) }
    }

    /// Best threshold on one feature, maximizing the summed child purity.
    fn best_on_feature(&self, idx: &mut [usize], feature: usize) -> Option<SplitChoice> {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let total = class_totals(idx, self.y, self.w);
        let min_leaf = self.cfg.min_samples_leaf;
        let mut left = [0.0; NUM_CLASSES];
        let mut best: Option<SplitChoice> = None;
        for k in 0..idx.len() - 1 {
            let i = idx[k];
            left[self.y[i]] += self.w.get(self.y[i]);
            let (lo, hi) = (x[i][feature], x[idx[k + 1]][feature]);
            if k + 1 < min_leaf || idx.len() - k - 1 < min_leaf || lo >= hi {
                continue;
            }
            let mut right = total;
            for c in 0..NUM_CLASSES {
                right[c] -= left[c];
            }
            let score = purity(&left) + purity(&right);
            if best.as_ref().map_or(true, |b| score > b.score) {
                let mid = lo + (hi - lo) / 2.0;
                // adjacent floats: keep `lo` on the left
                let threshold = if mid < hi { mid } else { lo };
                best = Some(SplitChoice { feature, threshold, score });
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize]) -> Node {
        let t = class_totals(idx, self.y, self.w);
        let pure = t.iter().filter(|&&v| v > 0.0).count() <= 1;
        if pure || idx.len() < 2 * self.cfg.min_samples_leaf {
            return self.leaf(idx);
        }
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.rng);
        // Look at `mtry` features; if none of them can split (all constant
        // here), keep drawing from the rest before giving up.
        let mut best: Option<SplitChoice> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= self.cfg.mtry && best.is_some() {
                break;
            }
            if let Some(c) = self.best_on_feature(idx, f) {
                if best.as_ref().map_or(true, |b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else {
            return self.leaf(idx);
        };
        let x = self.x;
        idx.sort_by(|&a, &b| {
            (x[a][split.feature] > split.threshold)
                .cmp(&(x[b][split.feature] > split.threshold))
                .then(a.cmp(&b))
        });
        let n_left = idx.iter().filter(|&&i| x[i][split.feature] <= split.threshold).count();
        let (l, r) = idx.split_at_mut(n_left);
        let left = self.grow(l);
        let right = self.grow(r);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Bagged CART trees on class-weighted Gini impurity. Each tree draws its
/// bootstrap sample and feature subsets from its own seeded stream, so the
/// forest does not depend on the thread schedule.
pub fn train_random_forest(
    x: &[Vec<f64>],
    labels: &[usize],
    weights: &ClassWeights,
    cfg: &ForestConfig,
) -> Result<RandomForestModel> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(Error::validation(format!(
            "forest training needs matching samples and labels, got {} and {}",
            x.len(),
            labels.len()
        )));
    }
    check_labels(labels)?;
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::validation("forest training rows must share a non-zero dimension"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("forest training features must be finite"));
    }
    let present = super::class_counts(labels).iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::validation("forest training needs at least two classes"));
    }
    if cfg.n_trees == 0 || cfg.mtry == 0 || cfg.mtry > d || cfg.min_samples_leaf == 0 {
        return Err(Error::validation(format!(
            "invalid forest config {cfg:?} for {d} features"
        )));
    }
    if weights.0.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::validation("class weights must be positive"));
    }

    let n = x.len();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(cfg.seed, &["tree".into(), t.into()]);
            let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut g = Grower { x, y: labels, w: weights, cfg, rng };
            g.grow(&mut idx)
        })
        .collect();
    Ok(RandomForestModel {
        schema: FOREST_SCHEMA.to_string(),
        n_features: d,
        config: *cfg,
        class_weights: *weights,
        trees,
    })
}
