//! Linearized two-layer GCN: `softmax(Â² X W)` with a single weight matrix.

use serde::{Deserialize, Serialize};

use crate::dataset::DataSplit;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::normalized::{NormalizedAdjacency, SparseRow};

/// Full-batch gradient descent settings for the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            learning_rate: 0.1,
            max_epochs: 500,
            patience: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub n_features: usize,
    pub n_classes: usize,
    /// Row-major `n_features x n_classes`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

impl SurrogateModel {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        SurrogateModel {
            n_features,
            n_classes,
            weights: vec![0.0; n_features * n_classes],
        }
    }

    pub fn from_weights(n_features: usize, n_classes: usize, weights: Vec<f64>) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        if weights.len() != n_features * n_classes {
            return Err(Error::InvalidConfig(format!(
                "weight matrix has {} entries, expected {n_features} x {n_classes}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite surrogate weight".into()));
        }
        Ok(SurrogateModel {
            n_features,
            n_classes,
            weights,
        })
    }

    pub fn weight_row(&self, feature: usize) -> &[f64] {
        &self.weights[feature * self.n_classes..(feature + 1) * self.n_classes]
    }

    /// `[X W]_u`.
    pub fn node_projection(&self, g: &AttributedGraph, u: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        for &i in g.node_features(u) {
            for (o, w) in out.iter_mut().zip(self.weight_row(i)) {
                *o += w;
            }
        }
        out
    }

    /// `X W` for every node.
    pub fn projections(&self, g: &AttributedGraph) -> Vec<Vec<f64>> {
        (0..g.n_nodes()).map(|u| self.node_projection(g, u)).collect()
    }

    /// Surrogate logits `row · X W` for a given row of `Â²`.
    pub fn logits_from_row(&self, row: &SparseRow, projections: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        for (v, a) in row.iter() {
            for (o, p) in out.iter_mut().zip(&projections[v]) {
                *o += a * p;
            }
        }
        out
    }

    /// `[Â² X W]_u`.
    pub fn logits(&self, na: &NormalizedAdjacency, g: &AttributedGraph, u: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        for (v, a) in na.ahat2_row(u).iter() {
            for &i in g.node_features(v) {
                for (o, w) in out.iter_mut().zip(self.weight_row(i)) {
                    *o += a * w;
                }
            }
        }
        out
    }

    pub fn probabilities(&self, na: &NormalizedAdjacency, g: &AttributedGraph, u: usize) -> Vec<f64> {
        softmax(&self.logits(na, g, u))
    }

    pub fn predict(&self, na: &NormalizedAdjacency, g: &AttributedGraph, u: usize) -> usize {
        argmax(&self.logits(na, g, u))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the smallest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class other than `c_old` with the largest value; smallest index on ties.
pub fn best_wrong_class(values: &[f64], c_old: usize) -> usize {
    let mut best = if c_old == 0 { 1 } else { 0 };
    for (c, &v) in values.iter().enumerate() {
        if c != c_old && v > values[best] {
            best = c;
        }
    }
    best
}

/// `max_{c != c_old} z_c - z_{c_old}` for one row of logits.
pub fn surrogate_loss(logits: &[f64], c_old: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::TooFewClasses(logits.len()));
    }
    if c_old >= logits.len() {
        return Err(Error::ClassOutOfRange {
            class: c_old,
            n_classes: logits.len(),
        });
    }
    let c = best_wrong_class(logits, c_old);
    Ok(logits[c] - logits[c_old])
}

/// Surrogate loss of node `v0` on the graph described by `na` and `g`.
pub fn surrogate_loss_at(
    na: &NormalizedAdjacency,
    g: &AttributedGraph,
    model: &SurrogateModel,
    v0: usize,
    c_old: usize,
) -> Result<f64> {
    g.check_node(v0)?;
    surrogate_loss(&model.logits(na, g, v0), c_old)
}

/// Class the attack tries to move `v0` away from: the ground-truth label
/// when `v0` is labeled in `split`, otherwise the surrogate prediction.
pub fn reference_class(
    na: &NormalizedAdjacency,
    g: &AttributedGraph,
    model: &SurrogateModel,
    split: Option<&DataSplit>,
    v0: usize,
) -> usize {
    match (split, g.label(v0)) {
        (Some(s), Some(c)) if s.is_labeled(v0) => c,
        _ => model.predict(na, g, v0),
    }
}

/// Dense `[Â² X]_u`.
fn propagated_features(na: &NormalizedAdjacency, g: &AttributedGraph, u: usize) -> Vec<f64> {
    let mut out = vec![0.0; g.n_features()];
    for (v, a) in na.ahat2_row(u).iter() {
        for &i in g.node_features(v) {
            out[i] += a;
        }
    }
    out
}

struct Batch {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Batch {
    fn new(na: &NormalizedAdjacency, g: &AttributedGraph, nodes: &[usize]) -> Result<Self> {
        let labels = nodes
            .iter()
            .map(|&u| g.label(u).ok_or(Error::MissingLabel(u)))
            .collect::<Result<_>>()?;
        Ok(Batch {
            rows: nodes.iter().map(|&u| propagated_features(na, g, u)).collect(),
            labels,
        })
    }

    /// Mean cross-entropy, optionally accumulating its gradient.
    fn loss(&self, model: &SurrogateModel, mut grad: Option<&mut [f64]>) -> f64 {
        let k = model.n_classes;
        let scale = 1.0 / self.rows.len().max(1) as f64;
        let mut total = 0.0;
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            let mut logits = vec![0.0; k];
            for (i, &x) in row.iter().enumerate() {
                if x != 0.0 {
                    for (z, w) in logits.iter_mut().zip(model.weight_row(i)) {
                        *z += x * w;
                    }
                }
            }
            let p = softmax(&logits);
            total -= p[y].max(f64::MIN_POSITIVE).ln();
            if let Some(grad) = grad.as_deref_mut() {
                for (i, &x) in row.iter().enumerate() {
                    if x != 0.0 {
                        for c in 0..k {
                            let err = p[c] - if c == y { 1.0 } else { 0.0 };
                            grad[i * k + c] += scale * x * err;
                        }
                    }
                }
            }
        }
        total * scale
    }
}

/// Fits `W` by full-batch gradient descent on the training nodes with early
/// stopping on validation loss. Starts from `W = 0`, so the result does not
/// depend on any seed.
pub fn train_surrogate(
    g: &AttributedGraph,
    na: &NormalizedAdjacency,
    split: &DataSplit,
    config: &SurrogateConfig,
) -> Result<(SurrogateModel, TrainingReport)> {
    if g.n_classes() < 2 {
        return Err(Error::TooFewClasses(g.n_classes()));
    }
    if split.train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let train = Batch::new(na, g, &split.train)?;
    let validation = if split.validation.is_empty() {
        None
    } else {
        Some(Batch::new(na, g, &split.validation)?)
    };

    let mut model = SurrogateModel::zeros(g.n_features(), g.n_classes());
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut grad = vec![0.0; model.weights.len()];
    let mut epochs_run = 0;
    let mut train_loss = f64::NAN;
    for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        grad.iter_mut().for_each(|x| *x = 0.0);
        train_loss = train.loss(&model, Some(&mut grad));
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        for (w, d) in model.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * d;
        }
        if let Some(val) = &validation {
            let loss = val.loss(&model, None);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            if loss < best_val {
                best_val = loss;
                best = model.clone();
                best_epoch = epoch + 1;
            } else if epoch + 1 - best_epoch >= config.patience {
                break;
            }
        }
    }
    let (model, validation_loss) = match validation {
        Some(_) => (best, Some(best_val)),
        None => {
            best_epoch = epochs_run;
            (model, None)
        }
    };
    let train_loss = if validation_loss.is_some() {
        train.loss(&model, None)
    } else {
        train_loss
    };
    Ok((
        model,
        TrainingReport {
            epochs_run,
            best_epoch,
            train_loss,
            validation_loss,
        },
    ))
}
