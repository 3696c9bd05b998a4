//! Two-layer GCN `softmax(Â · relu(Â X W1) · W2)` trained with Adam on the
//! labeled nodes, with gradients written out by hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSplit;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::normalized::{ahat_row, SparseRow};
use crate::surrogate::softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Dropout on the hidden layer during training.
    pub dropout: f64,
    /// L2 penalty on the first-layer weights.
    pub weight_decay: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            hidden: 16,
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 30,
            dropout: 0.0,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub n_features: usize,
    pub hidden: usize,
    pub n_classes: usize,
    /// Row-major `n_features x hidden`.
    pub w1: Vec<f64>,
    /// Row-major `hidden x n_classes`.
    pub w2: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GcnTrainingReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// Rows of `Â` for one graph.
#[derive(Debug, Clone)]
pub struct Propagation {
    rows: Vec<SparseRow>,
}

impl Propagation {
    pub fn new(g: &AttributedGraph) -> Self {
        Propagation {
            rows: (0..g.n_nodes()).map(|u| ahat_row(g, u)).collect(),
        }
    }

    /// `Â M` for a dense row-major `n x width` matrix.
    fn apply(&self, m: &[f64], width: usize) -> Vec<f64> {
        let mut out = vec![0.0; m.len()];
        for (u, row) in self.rows.iter().enumerate() {
            let dst = &mut out[u * width..(u + 1) * width];
            for (v, a) in row.iter() {
                for (o, x) in dst.iter_mut().zip(&m[v * width..(v + 1) * width]) {
                    *o += a * x;
                }
            }
        }
        out
    }
}

/// `X W` for binary sparse `X` and row-major `W` with `width` columns.
fn features_times(g: &AttributedGraph, w: &[f64], width: usize, u: usize, out: &mut [f64]) {
    out.fill(0.0);
    for &i in g.node_features(u) {
        for (o, x) in out.iter_mut().zip(&w[i * width..(i + 1) * width]) {
            *o += x;
        }
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out).map(|_| rng.random_range(-r..r)).collect()
}

/// Intermediate values of one forward pass.
struct Forward {
    /// `Â X W1`, before the nonlinearity.
    pre: Vec<f64>,
    /// Hidden activations after relu and dropout.
    hidden: Vec<f64>,
    /// Dropout scale per hidden entry (1 when dropout is off).
    mask: Vec<f64>,
    /// Class probabilities.
    probs: Vec<f64>,
}

impl GcnModel {
    pub fn new(n_features: usize, hidden: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidConfig("hidden size must be at least 1".into()));
        }
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(GcnModel {
            n_features,
            hidden,
            n_classes,
            w1: glorot(&mut rng, n_features, hidden),
            w2: glorot(&mut rng, hidden, n_classes),
            seed,
        })
    }

    fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        if g.n_features() != self.n_features || g.n_classes() != self.n_classes {
            return Err(Error::InvalidConfig(format!(
                "model expects {} features and {} classes, graph has {} and {}",
                self.n_features,
                self.n_classes,
                g.n_features(),
                g.n_classes()
            )));
        }
        Ok(())
    }

    fn forward(&self, g: &AttributedGraph, prop: &Propagation, dropout: Option<(&mut ChaCha8Rng, f64)>) -> Forward {
        let (n, h, k) = (g.n_nodes(), self.hidden, self.n_classes);
        let mut xw = vec![0.0; n * h];
        for u in 0..n {
            features_times(g, &self.w1, h, u, &mut xw[u * h..(u + 1) * h]);
        }
        let pre = prop.apply(&xw, h);
        let mut mask = vec![1.0; n * h];
        if let Some((rng, p)) = dropout {
            if p > 0.0 {
                for m in &mut mask {
                    *m = if rng.random_bool(p) { 0.0 } else { 1.0 / (1.0 - p) };
                }
            }
        }
        let hidden: Vec<f64> = pre.iter().zip(&mask).map(|(&x, &m)| x.max(0.0) * m).collect();
        let mut hw = vec![0.0; n * k];
        for u in 0..n {
            for j in 0..h {
                let a = hidden[u * h + j];
                if a != 0.0 {
                    for c in 0..k {
                        hw[u * k + c] += a * self.w2[j * k + c];
                    }
                }
            }
        }
        let logits = prop.apply(&hw, k);
        let probs = logits.chunks(k).flat_map(softmax).collect();
        Forward {
            pre,
            hidden,
            mask,
            probs,
        }
    }

    /// Class probabilities of every node, row-major `n x K`.
    pub fn predict_proba(&self, g: &AttributedGraph) -> Result<Vec<f64>> {
        self.check_graph(g)?;
        Ok(self.forward(g, &Propagation::new(g), None).probs)
    }

    /// Class probabilities of a single node, touching only its two-hop ball.
    pub fn node_proba(&self, g: &AttributedGraph, v0: usize) -> Result<Vec<f64>> {
        self.check_graph(g)?;
        g.check_node(v0)?;
        let (h, k) = (self.hidden, self.n_classes);
        let first = ahat_row(g, v0);
        let mut logits = vec![0.0; k];
        let mut xw = vec![0.0; h];
        for (u, a0) in first.iter() {
            let mut pre = vec![0.0; h];
            for (v, a) in ahat_row(g, u).iter() {
                features_times(g, &self.w1, h, v, &mut xw);
                for (p, x) in pre.iter_mut().zip(&xw) {
                    *p += a * x;
                }
            }
            for (j, p) in pre.iter().enumerate() {
                let act = p.max(0.0);
                if act != 0.0 {
                    for c in 0..k {
                        logits[c] += a0 * act * self.w2[j * k + c];
                    }
                }
            }
        }
        Ok(softmax(&logits))
    }

    /// Mean cross-entropy over `nodes` (plus the weight penalty) and its
    /// gradients with respect to `w1` and `w2`.
    pub fn loss_and_gradients(
        &self,
        g: &AttributedGraph,
        prop: &Propagation,
        nodes: &[usize],
        weight_decay: f64,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check_graph(g)?;
        let fwd = self.forward(g, prop, None);
        self.backward(g, prop, nodes, weight_decay, &fwd)
    }

    fn backward(
        &self,
        g: &AttributedGraph,
        prop: &Propagation,
        nodes: &[usize],
        weight_decay: f64,
        fwd: &Forward,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (n, h, k) = (g.n_nodes(), self.hidden, self.n_classes);
        if nodes.is_empty() {
            return Err(Error::EmptyTrainSet);
        }
        let scale = 1.0 / nodes.len() as f64;
        let mut loss = 0.0;
        let mut d_logits = vec![0.0; n * k];
        for &u in nodes {
            let c = g.label(u).ok_or(Error::MissingLabel(u))?;
            let p = &fwd.probs[u * k..(u + 1) * k];
            loss -= p[c].max(f64::MIN_POSITIVE).ln() * scale;
            for (j, d) in d_logits[u * k..(u + 1) * k].iter_mut().enumerate() {
                *d += (p[j] - (j == c) as u8 as f64) * scale;
            }
        }
        loss += 0.5 * weight_decay * self.w1.iter().map(|w| w * w).sum::<f64>();
        // Â is symmetric, so its transpose is itself.
        let d_hw = prop.apply(&d_logits, k);
        let mut g2 = vec![0.0; h * k];
        let mut d_hidden = vec![0.0; n * h];
        for u in 0..n {
            for j in 0..h {
                let a = fwd.hidden[u * h + j];
                let mut acc = 0.0;
                for c in 0..k {
                    let d = d_hw[u * k + c];
                    g2[j * k + c] += a * d;
                    acc += d * self.w2[j * k + c];
                }
                d_hidden[u * h + j] = if fwd.pre[u * h + j] > 0.0 {
                    acc * fwd.mask[u * h + j]
                } else {
                    0.0
                };
            }
        }
        let d_xw = prop.apply(&d_hidden, h);
        let mut g1: Vec<f64> = self.w1.iter().map(|w| weight_decay * w).collect();
        for u in 0..n {
            let src = &d_xw[u * h..(u + 1) * h];
            for &i in g.node_features(u) {
                for (o, d) in g1[i * h..(i + 1) * h].iter_mut().zip(src) {
                    *o += d;
                }
            }
        }
        Ok((loss, g1, g2))
    }

    fn mean_loss(&self, g: &AttributedGraph, probs: &[f64], nodes: &[usize]) -> f64 {
        let k = self.n_classes;
        let total: f64 = nodes
            .iter()
            .map(|&u| {
                let c = g.label(u).expect("labeled node");
                -probs[u * k + c].max(f64::MIN_POSITIVE).ln()
            })
            .sum();
        total / nodes.len().max(1) as f64
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for ((w, g), (m, v)) in w.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains a GCN on the training nodes of `split`, stopping early on the
/// validation loss and keeping the best weights seen.
pub fn train_gcn(
    g: &AttributedGraph,
    split: &DataSplit,
    seed: u64,
    config: &GcnConfig,
) -> Result<(GcnModel, GcnTrainingReport)> {
    if split.n_nodes() != g.n_nodes() {
        return Err(Error::InvalidConfig(format!(
            "split covers {} nodes, graph has {}",
            split.n_nodes(),
            g.n_nodes()
        )));
    }
    if split.train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", config.dropout)));
    }
    let mut model = GcnModel::new(g.n_features(), config.hidden, g.n_classes(), seed)?;
    let prop = Propagation::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d20f);
    let (mut opt1, mut opt2) = (Adam::new(model.w1.len()), Adam::new(model.w2.len()));
    let mut best = (f64::INFINITY, model.clone(), 0usize, f64::NAN);
    let mut epochs_run = 0;
    for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        let fwd = model.forward(g, &prop, Some((&mut rng, config.dropout)));
        let (loss, g1, g2) = model.backward(g, &prop, &split.train, config.weight_decay, &fwd)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        opt1.step(&mut model.w1, &g1, config.learning_rate);
        opt2.step(&mut model.w2, &g2, config.learning_rate);
        let monitor = if split.validation.is_empty() {
            &split.train
        } else {
            &split.validation
        };
        let probs = model.forward(g, &prop, None).probs;
        let val = model.mean_loss(g, &probs, monitor);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch, loss: val });
        }
        if val < best.0 {
            best = (val, model.clone(), epoch, loss);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }
    let (validation_loss, model, best_epoch, train_loss) = best;
    log::debug!("gcn seed {seed}: best epoch {best_epoch} of {epochs_run}, validation loss {validation_loss:.4}");
    Ok((
        model,
        GcnTrainingReport {
            epochs_run,
            best_epoch,
            train_loss,
            validation_loss,
        },
    ))
}

/// Probability of `class` minus the largest other probability.
pub fn margin_from_proba(probs: &[f64], class: usize) -> f64 {
    let other = probs
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != class)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    probs[class] - other
}

/// Classification margin of `v0` for its true class `class`.
pub fn margin(model: &GcnModel, g: &AttributedGraph, v0: usize, class: usize) -> Result<f64> {
    if class >= model.n_classes {
        return Err(Error::ClassOutOfRange {
            class,
            n_classes: model.n_classes,
        });
    }
    Ok(margin_from_proba(&model.node_proba(g, v0)?, class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    Evasion,
    Poisoning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetMargin {
    pub target: usize,
    pub class: usize,
    /// One margin per trained model.
    pub margins: Vec<f64>,
    pub mean_margin: f64,
    /// Share of models that classify the target correctly.
    pub fraction_correct: f64,
}

impl TargetMargin {
    fn new(target: usize, class: usize, margins: Vec<f64>) -> Self {
        let runs = margins.len().max(1) as f64;
        TargetMargin {
            target,
            class,
            mean_margin: margins.iter().sum::<f64>() / runs,
            fraction_correct: margins.iter().filter(|&&m| m > 0.0).count() as f64 / runs,
            margins,
        }
    }

    pub fn correct(&self) -> bool {
        self.mean_margin > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub mode: EvaluationMode,
    pub runs: usize,
    pub targets: Vec<TargetMargin>,
    /// Per-model correctness averaged over models and targets.
    pub fraction_correct: f64,
    pub mean_margin: f64,
}

impl MarginReport {
    fn new(mode: EvaluationMode, runs: usize, targets: Vec<TargetMargin>) -> Self {
        let n = targets.len().max(1) as f64;
        MarginReport {
            mode,
            runs,
            fraction_correct: targets.iter().map(|t| t.fraction_correct).sum::<f64>() / n,
            mean_margin: targets.iter().map(|t| t.mean_margin).sum::<f64>() / n,
            targets,
        }
    }
}

fn true_class(g: &AttributedGraph, v0: usize) -> Result<usize> {
    g.check_node(v0)?;
    g.label(v0).ok_or(Error::MissingLabel(v0))
}

/// Margins of `targets` on `g` under a model trained elsewhere.
pub fn evasion_eval(model: &GcnModel, g: &AttributedGraph, targets: &[usize]) -> Result<MarginReport> {
    let rows = targets
        .iter()
        .map(|&v0| {
            let c = true_class(g, v0)?;
            Ok(TargetMargin::new(v0, c, vec![margin(model, g, v0, c)?]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginReport::new(EvaluationMode::Evasion, 1, rows))
}

/// Retrains `runs` models (seeds `seed`, `seed + 1`, ...) on `g` and reports
/// the margins of `targets` under each.
pub fn poisoning_eval(
    g: &AttributedGraph,
    split: &DataSplit,
    targets: &[usize],
    runs: usize,
    seed: u64,
    config: &GcnConfig,
) -> Result<MarginReport> {
    if runs == 0 {
        return Err(Error::InvalidConfig("at least one training run is needed".into()));
    }
    let classes = targets
        .iter()
        .map(|&v0| true_class(g, v0))
        .collect::<Result<Vec<_>>>()?;
    let per_run = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let (model, _) = train_gcn(g, split, seed.wrapping_add(r), config)?;
            targets
                .iter()
                .zip(&classes)
                .map(|(&v0, &c)| margin(&model, g, v0, c))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = targets
        .iter()
        .zip(&classes)
        .enumerate()
        .map(|(t, (&v0, &c))| TargetMargin::new(v0, c, per_run.iter().map(|m| m[t]).collect()))
        .collect();
    Ok(MarginReport::new(EvaluationMode::Poisoning, runs, rows))
}
