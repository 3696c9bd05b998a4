use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Direction, Flip, Perturbation};
use crate::normalized::{ahat2_row, ahat2_row_changes, SparseRow};
use crate::surrogate::{best_wrong_class, surrogate_loss, SurrogateModel};
use crate::unnoticeability::{CooccurrenceIndex, DegreeTestState, FeatureTestOutcome};

use super::{AttackConfig, AttackMode, FeatureScoring};

/// Everything the greedy search needs about the current graph: only the
/// target's row of `Â²` and the per-node projections `XW` are kept.
#[derive(Debug, Clone)]
pub struct AttackState<'a> {
    config: AttackConfig,
    model: &'a SurrogateModel,
    cooccurrence: &'a CooccurrenceIndex,
    graph: AttributedGraph,
    class: usize,
    row: SparseRow,
    projections: Vec<Vec<f64>>,
    logits: Vec<f64>,
    degree: DegreeTestState,
    /// Per attacker (same order as `config.attackers`), features whose
    /// insertion passes the co-occurrence test.
    allowed: Vec<Vec<bool>>,
}

impl<'a> AttackState<'a> {
    pub fn new(
        g0: &AttributedGraph,
        model: &'a SurrogateModel,
        cooccurrence: &'a CooccurrenceIndex,
        config: &AttackConfig,
    ) -> Result<Self> {
        config.validate(g0)?;
        if model.n_features != g0.n_features() || model.n_classes != g0.n_classes() {
            return Err(Error::InvalidConfig(format!(
                "model is {}x{} but graph has {} features and {} classes",
                model.n_features,
                model.n_classes,
                g0.n_features(),
                g0.n_classes()
            )));
        }
        if cooccurrence.n_nodes() != g0.n_nodes() || cooccurrence.n_features() != g0.n_features() {
            return Err(Error::InvalidConfig("co-occurrence index built for another graph".into()));
        }
        let v0 = config.target;
        let row = ahat2_row(g0, v0);
        let projections = model.projections(g0);
        let logits = model.logits_from_row(&row, &projections);
        let class = match config.class.or(g0.label(v0)) {
            Some(c) => c,
            None => crate::surrogate::argmax(&logits),
        };
        if class >= g0.n_classes() {
            return Err(Error::ClassOutOfRange {
                class,
                n_classes: g0.n_classes(),
            });
        }
        let allowed = config
            .attackers
            .iter()
            .map(|&u| {
                let mut mask = vec![false; g0.n_features()];
                for i in cooccurrence.allowed_additions(u) {
                    mask[i] = true;
                }
                mask
            })
            .collect();
        Ok(AttackState {
            config: config.clone(),
            model,
            cooccurrence,
            graph: g0.clone(),
            class,
            row,
            projections,
            logits,
            degree: DegreeTestState::new(g0, config.degree_test.clone())?,
            allowed,
        })
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    pub fn graph(&self) -> &AttributedGraph {
        &self.graph
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn target_row(&self) -> &SparseRow {
        &self.row
    }

    pub fn projections(&self) -> &[Vec<f64>] {
        &self.projections
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn degree_state(&self) -> &DegreeTestState {
        &self.degree
    }

    pub fn model(&self) -> &SurrogateModel {
        self.model
    }

    pub fn loss(&self) -> f64 {
        surrogate_loss(&self.logits, self.class).expect("validated class")
    }

    /// Removing this edge would leave the target without neighbors.
    fn isolates_target(&self, m: usize, n: usize) -> bool {
        let v0 = self.config.target;
        (m == v0 || n == v0) && self.graph.deg(v0) == 1 && self.graph.has_edge(m, n)
    }

    /// Structural candidates: every pair touching an attacker (and, for an
    /// influencer attack, not the target), minus removals that isolate the
    /// target, minus flips failing the degree test when constrained.
    /// Sorted by `(u, v)`.
    pub fn candidate_edges(&self) -> Vec<Flip> {
        let v0 = self.config.target;
        let n_nodes = self.graph.n_nodes();
        let mut out = Vec::new();
        for &a in &self.config.attackers {
            for u in 0..n_nodes {
                if u == a || (self.config.mode == AttackMode::Influencer && u == v0) {
                    continue;
                }
                // pairs of two attackers are visited twice; keep one
                if u < a && self.config.attackers.binary_search(&u).is_ok() {
                    continue;
                }
                if self.isolates_target(a, u) {
                    continue;
                }
                if self.config.constrained {
                    let outcome = self.degree.evaluate_edge(&self.graph, a, u);
                    if !self.degree.accepts(&outcome) {
                        continue;
                    }
                }
                out.push(Flip::edge(a, u));
            }
        }
        out.sort_unstable_by_key(|f| match *f {
            Flip::Edge { u, v } => (u, v),
            Flip::Feature { .. } => unreachable!(),
        });
        out
    }

    /// Feature candidates: every removal on an attacker, plus the insertions
    /// the co-occurrence test allows (all of them when unconstrained).
    /// Sorted by `(node, feature)`.
    pub fn candidate_features(&self) -> Vec<Flip> {
        let mut out = Vec::new();
        for (k, &u) in self.config.attackers.iter().enumerate() {
            for i in 0..self.graph.n_features() {
                if self.graph.has_feature(u, i) || !self.config.constrained || self.allowed[k][i] {
                    out.push(Flip::feature(u, i));
                }
            }
        }
        out
    }

    fn loss_with_delta(&self, delta: impl Fn(usize) -> f64) -> f64 {
        let shifted: Vec<f64> = self.logits.iter().enumerate().map(|(c, z)| z + delta(c)).collect();
        surrogate_loss(&shifted, self.class).expect("validated class")
    }

    /// Surrogate loss after flipping edge `(m, n)`, using the incremental
    /// update of the target's `Â²` row.
    pub fn score_edge(&self, m: usize, n: usize) -> f64 {
        let changes = ahat2_row_changes(&self.graph, self.config.target, &self.row, m, n);
        let mut shifted = self.logits.clone();
        for (v, new) in changes {
            let d = new - self.row.get(v);
            if d != 0.0 {
                for (z, p) in shifted.iter_mut().zip(&self.projections[v]) {
                    *z += d * p;
                }
            }
        }
        surrogate_loss(&shifted, self.class).expect("validated class")
    }

    /// Surrogate loss after flipping feature `i` of node `u`.
    pub fn score_feature(&self, u: usize, i: usize) -> f64 {
        let coef = self.row.get(u);
        if coef == 0.0 {
            return self.loss();
        }
        let sign = if self.graph.has_feature(u, i) { -1.0 } else { 1.0 };
        let w = self.model.weight_row(i);
        self.loss_with_delta(|c| sign * coef * w[c])
    }

    /// First-order feature scores with the best wrong class frozen: the
    /// current loss plus the gradient magnitude when the flip moves along the
    /// gradient, otherwise the current loss.
    pub fn gradient_feature_scores(&self, candidates: &[Flip]) -> Vec<f64> {
        let loss = self.loss();
        let c = best_wrong_class(&self.logits, self.class);
        candidates
            .iter()
            .map(|f| match *f {
                Flip::Feature { node, feature } => {
                    let w = self.model.weight_row(feature);
                    let grad = self.row.get(node) * (w[c] - w[self.class]);
                    let x = if self.graph.has_feature(node, feature) { 1.0 } else { -1.0 };
                    if x * grad < 0.0 {
                        loss + grad.abs()
                    } else {
                        loss
                    }
                }
                Flip::Edge { .. } => panic!("not a feature flip"),
            })
            .collect()
    }

    pub fn score(&self, flip: Flip) -> f64 {
        match flip {
            Flip::Edge { u, v } => self.score_edge(u, v),
            Flip::Feature { node, feature } => self.score_feature(node, feature),
        }
    }

    /// Scores of every candidate, evaluated in parallel.
    pub fn score_all(&self, candidates: &[Flip]) -> Vec<f64> {
        let features_by_gradient = self.config.feature_scoring == FeatureScoring::Gradient;
        if features_by_gradient && candidates.iter().all(|f| !f.is_edge()) {
            return self.gradient_feature_scores(candidates);
        }
        candidates.par_iter().map(|&f| self.score(f)).collect()
    }

    /// Applies a flip, updating the target row, projections, logits and the
    /// degree test state.
    pub fn apply(&mut self, flip: Flip, score: f64) -> Result<(Perturbation, Option<FeatureTestOutcome>)> {
        let mut audit = None;
        let direction = match flip {
            Flip::Edge { u, v } => {
                self.graph.check_node(u)?;
                self.graph.check_node(v)?;
                let changes = ahat2_row_changes(&self.graph, self.config.target, &self.row, u, v);
                self.degree
                    .commit(self.graph.deg(u), self.graph.deg(v), self.graph.has_edge(u, v));
                let direction = self.graph.flip_edge(u, v)?;
                self.row = self.row.with_updates(&changes);
                direction
            }
            Flip::Feature { node, feature } => {
                let direction = self.graph.flip_feature(node, feature)?;
                let sign = if direction == Direction::Insert { 1.0 } else { -1.0 };
                for (p, w) in self.projections[node].iter_mut().zip(self.model.weight_row(feature)) {
                    *p += sign * w;
                }
                if direction == Direction::Insert {
                    audit = Some(self.cooccurrence.evaluate_addition(node, feature)?);
                }
                direction
            }
        };
        self.logits = self.model.logits_from_row(&self.row, &self.projections);
        if cfg!(debug_assertions) {
            self.verify(1e-9)?;
        }
        Ok((
            Perturbation {
                flip,
                direction,
                score,
            },
            audit,
        ))
    }

    /// Compares the cached row and degree state with a from-scratch rebuild.
    pub fn verify(&self, tol: f64) -> Result<()> {
        let fresh = ahat2_row(&self.graph, self.config.target);
        let cols = fresh.columns().chain(self.row.columns());
        for v in cols {
            if (fresh.get(v) - self.row.get(v)).abs() > tol {
                return Err(Error::InconsistentCache(format!(
                    "target row entry {v}: cached {} vs rebuilt {}",
                    self.row.get(v),
                    fresh.get(v)
                )));
            }
        }
        self.degree.verify(&self.graph, tol)
    }
}
