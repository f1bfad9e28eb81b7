use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{argmax, check_labels, class_counts, ClassWeights, Probabilities, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::eval::weighted_f1;
use crate::seeding::rng_for;

pub const LINEAR_HEAD_SCHEMA: &str = "gaitbench.linear_head.v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearHeadConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs without a validation weighted-F1 improvement before stopping.
    pub patience: usize,
    /// Standard deviation of the initial weights.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for LinearHeadConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 300,
            patience: 30,
            init_std: 0.01,
            seed: 0,
        }
    }
}

/// Softmax regression on standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHeadModel {
    pub schema: String,
    /// `NUM_CLASSES` rows of input weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Probabilities,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub config: LinearHeadConfig,
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Training loss at the parameters each epoch starts from.
    pub losses: Vec<f64>,
    /// Validation weighted F1 after each epoch's update.
    pub validation_f1: Vec<f64>,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn softmax(z: &Probabilities) -> Probabilities {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn logits(w: &[Vec<f64>], b: &Probabilities, x: &[f64]) -> Probabilities {
    let mut z = *b;
    for (zc, wc) in z.iter_mut().zip(w) {
        *zc += wc.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
    z
}

/// Class-weighted cross-entropy averaged over the samples,
/// `mean_i w_{y_i} (log sum_c exp z_ic - z_{i y_i})`, with its gradient.
pub fn loss_and_gradient(
    w: &[Vec<f64>],
    b: &Probabilities,
    x: &[Vec<f64>],
    y: &[usize],
    class_weights: &ClassWeights,
) -> (f64, Vec<Vec<f64>>, Probabilities) {
    let d = w.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![vec![0.0; d]; NUM_CLASSES];
    let mut gb = [0.0; NUM_CLASSES];
    for (xi, &yi) in x.iter().zip(y) {
        let z = logits(w, b, xi);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let wy = class_weights.get(yi);
        loss += wy * (lse - z[yi]);
        let p = softmax(&z);
        for c in 0..NUM_CLASSES {
            let g = wy * (p[c] - if c == yi { 1.0 } else { 0.0 }) / n;
            gb[c] += g;
            for (gwc, v) in gw[c].iter_mut().zip(xi) {
                *gwc += g * v;
            }
        }
    }
    (loss / n, gw, gb)
}

impl LinearHeadModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Probabilities> {
        if x.len() != self.dim() {
            return Err(Error::validation(format!(
                "linear head expects dimension {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(softmax(&logits(&self.weights, &self.bias, &self.standardize(x))))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict(x)?))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::parse("linear head serialization", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::parse("linear head model", e))?;
        if m.schema != LINEAR_HEAD_SCHEMA {
            return Err(Error::parse("linear head model", format!("unknown schema {:?}", m.schema)));
        }
        let d = m.mean.len();
        if m.std.len() != d || m.weights.len() != NUM_CLASSES || m.weights.iter().any(|r| r.len() != d) {
            return Err(Error::validation("linear head parameter shapes disagree"));
        }
        let finite = m.weights.iter().flatten().chain(&m.bias).chain(&m.mean).all(|v| v.is_finite());
        if !finite || m.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation("linear head parameters must be finite"));
        }
        Ok(m)
    }
}

fn check_matrix(x: &[Vec<f64>], y: &[usize], what: &str) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::validation(format!(
            "{what} needs matching samples and labels, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    check_labels(y)?;
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::validation(format!("{what} rows must share a non-zero dimension")));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{what} inputs must be finite")));
    }
    Ok(d)
}

/// Full-batch gradient descent with a fixed step. With a validation split
/// the parameters of the best validation weighted-F1 epoch are kept
/// (earliest on ties) and training stops after `patience` epochs without
/// improvement; otherwise the last epoch's parameters are returned.
pub fn train_linear_head(
    x: &[Vec<f64>],
    y: &[usize],
    class_weights: &ClassWeights,
    validation: Option<(&[Vec<f64>], &[usize])>,
    cfg: &LinearHeadConfig,
) -> Result<(LinearHeadModel, TrainingTrace)> {
    let d = check_matrix(x, y, "linear head training")?;
    if class_counts(y).iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::validation("linear head training needs at least two classes"));
    }
    if let Some((vx, vy)) = validation {
        if check_matrix(vx, vy, "linear head validation")? != d {
            return Err(Error::validation("validation dimension differs from training"));
        }
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) || !(cfg.init_std.is_finite() && cfg.init_std >= 0.0) {
        return Err(Error::validation(format!("invalid linear head config {cfg:?}")));
    }

    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let s = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if s > 1e-12 { s } else { 1.0 }
        })
        .collect();
    let mut model = LinearHeadModel {
        schema: LINEAR_HEAD_SCHEMA.to_string(),
        weights: vec![vec![0.0; d]; NUM_CLASSES],
        bias: [0.0; NUM_CLASSES],
        mean,
        std,
        config: *cfg,
    };
    if cfg.init_std > 0.0 {
        let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::validation(e.to_string()))?;
        let mut rng = rng_for(cfg.seed, &["linear_head".into()]);
        for v in model.weights.iter_mut().flatten() {
            *v = normal.sample(&mut rng);
        }
    }
    let xs: Vec<Vec<f64>> = x.iter().map(|r| model.standardize(r)).collect();

    let val_f1 = |m: &LinearHeadModel| -> Option<f64> {
        let (vx, vy) = validation?;
        let pred: Vec<usize> = vx.iter().map(|r| m.predict_class(r).expect("checked dimension")).collect();
        Some(weighted_f1(vy, &pred))
    };

    let mut trace = TrainingTrace::default();
    let mut best = val_f1(&model).map(|f| (f, model.clone()));
    for epoch in 1..=cfg.epochs {
        let (loss, gw, gb) = loss_and_gradient(&model.weights, &model.bias, &xs, y, class_weights);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("linear head loss diverged at epoch {epoch}")));
        }
        trace.losses.push(loss);
        for (wc, gc) in model.weights.iter_mut().zip(&gw) {
            for (v, g) in wc.iter_mut().zip(gc) {
                *v -= cfg.learning_rate * g;
            }
        }
        for (v, g) in model.bias.iter_mut().zip(&gb) {
            *v -= cfg.learning_rate * g;
        }
        if model.weights.iter().flatten().chain(&model.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("linear head parameters diverged at epoch {epoch}")));
        }
        if let Some(f1) = val_f1(&model) {
            trace.validation_f1.push(f1);
            let (best_f1, _) = best.as_ref().expect("validation present");
            if f1 > *best_f1 {
                best = Some((f1, model.clone()));
                trace.best_epoch = epoch;
            } else if epoch - trace.best_epoch >= cfg.patience {
                trace.stopped_early = true;
                break;
            }
        } else {
            trace.best_epoch = epoch;
        }
    }
    let model = match best {
        Some((_, m)) if validation.is_some() => m,
        _ => model,
    };
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_hot(n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let x = (0..n)
            .map(|i| {
                let mut v = vec![0.0; 3];
                v[i % 3] = 1.0;
                v
            })
            .collect();
        (x, (0..n).map(|i| i % 3).collect())
    }

    /// Independent loss: explicit probabilities, no log-sum-exp shortcut.
    fn oracle_loss(w: &[Vec<f64>], b: &[f64; 3], x: &[Vec<f64>], y: &[usize], cw: &[f64; 3]) -> f64 {
        let mut total = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z: Vec<f64> = (0..3).map(|c| b[c] + (0..xi.len()).map(|j| w[c][j] * xi[j]).sum::<f64>()).collect();
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            total += -cw[yi] * (z[yi].exp() / denom).ln();
        }
        total / x.len() as f64
    }

    #[test]
    fn one_hot_embeddings_are_separated() {
        let (x, y) = one_hot(30);
        let (m, _) = train_linear_head(&x, &y, &ClassWeights::uniform(), None, &LinearHeadConfig::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict_class(xi).unwrap(), yi);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (x, y) = one_hot(9);
        let cfg = LinearHeadConfig { epochs: 0, seed: 5, ..LinearHeadConfig::default() };
        let (a, trace) = train_linear_head(&x, &y, &ClassWeights::uniform(), None, &cfg).unwrap();
        assert!(trace.losses.is_empty());
        let mut rng = rng_for(5, &["linear_head".into()]);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let init: Vec<f64> = (0..9).map(|_| normal.sample(&mut rng)).collect();
        assert_eq!(a.weights.concat(), init);
        assert_eq!(a.bias, [0.0; 3]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_for(11, &[]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let d = 4;
        let x: Vec<Vec<f64>> = (0..12).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect();
        let y: Vec<usize> = (0..12).map(|i| (i * 7) % 3).collect();
        let cw = [0.8, 1.5, 1.1];
        let w: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect();
        let b = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
        let (loss, gw, gb) = loss_and_gradient(&w, &b, &x, &y, &ClassWeights(cw));
        assert_relative_eq!(loss, oracle_loss(&w, &b, &x, &y, &cw), max_relative = 1e-12);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        let mut worst: f64 = 0.0;
        for c in 0..3 {
            for j in 0..d {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[c][j] += h;
                wm[c][j] -= h;
                let num = (oracle_loss(&wp, &b, &x, &y, &cw) - oracle_loss(&wm, &b, &x, &y, &cw)) / (2.0 * h);
                worst = worst.max(rel(gw[c][j], num));
            }
            let (mut bp, mut bm) = (b, b);
            bp[c] += h;
            bm[c] -= h;
            let num = (oracle_loss(&w, &bp, &x, &y, &cw) - oracle_loss(&w, &bm, &x, &y, &cw)) / (2.0 * h);
            worst = worst.max(rel(gb[c], num));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn loss_never_increases_on_separable_data() {
        let (x, y) = one_hot(24);
        let cfg = LinearHeadConfig { learning_rate: 0.01, epochs: 200, ..LinearHeadConfig::default() };
        let (_, trace) = train_linear_head(&x, &y, &ClassWeights([1.0, 2.0, 0.5]), None, &cfg).unwrap();
        assert!(trace.losses.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(trace.losses.last().unwrap() < &trace.losses[0]);
    }

    #[test]
    fn divergence_is_a_numerical_error() {
        let (x, y) = one_hot(9);
        // inputs are standardized, so only the step size can blow up
        let cfg = LinearHeadConfig { learning_rate: f64::MAX, epochs: 50, ..LinearHeadConfig::default() };
        assert!(matches!(train_linear_head(&x, &y, &ClassWeights::uniform(), None, &cfg), Err(Error::Numerical(_))));
    }

    #[test]
    fn early_stopping_keeps_the_best_epoch() {
        let (x, y) = one_hot(30);
        let cfg = LinearHeadConfig { patience: 5, ..LinearHeadConfig::default() };
        let (m, trace) =
            train_linear_head(&x, &y, &ClassWeights::uniform(), Some((&x, &y)), &cfg).unwrap();
        // validation F1 reaches 1 almost immediately and cannot improve
        assert!(trace.stopped_early);
        assert_eq!(trace.validation_f1.len(), trace.best_epoch + 5);
        assert_eq!(trace.validation_f1[trace.best_epoch - 1], 1.0);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict_class(xi).unwrap(), yi);
        }
    }

    #[test]
    fn standardization_stats_are_stored() {
        let x = vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let (m, _) = train_linear_head(&x, &[0, 1, 2], &ClassWeights::uniform(), None, &LinearHeadConfig { epochs: 1, ..LinearHeadConfig::default() }).unwrap();
        assert_eq!(m.mean, vec![3.0, 10.0]);
        assert_relative_eq!(m.std[0], (8.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_eq!(m.std[1], 1.0, "constant column keeps unit scale");
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = one_hot(12);
        let (m, _) = train_linear_head(&x, &y, &ClassWeights::uniform(), None, &LinearHeadConfig { epochs: 10, ..LinearHeadConfig::default() }).unwrap();
        let back = LinearHeadModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = one_hot(15);
        let cfg = LinearHeadConfig { epochs: 20, seed: 3, ..LinearHeadConfig::default() };
        let a = train_linear_head(&x, &y, &ClassWeights::uniform(), None, &cfg).unwrap().0;
        let b = train_linear_head(&x, &y, &ClassWeights::uniform(), None, &cfg).unwrap().0;
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
