use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Flip};
use crate::surrogate::{best_wrong_class, SurrogateModel};
use crate::unnoticeability::CooccurrenceIndex;

use super::{AttackConfig, AttackMode, AttackResult, AttackState};

fn empty_result(state: &AttackState<'_>, config: &AttackConfig) -> AttackResult {
    AttackResult {
        target: config.target,
        class: state.class(),
        mode: config.mode,
        budget: config.budget,
        perturbations: Vec::new(),
        initial_loss: state.loss(),
        loss_trace: Vec::new(),
        lambda_trace: Vec::new(),
        feature_audit: Vec::new(),
        starved: false,
    }
}

fn record(result: &mut AttackResult, state: &mut AttackState<'_>, flip: Flip, score: f64) -> Result<()> {
    let (p, audit) = state.apply(flip, score)?;
    result.perturbations.push(p);
    result.loss_trace.push(state.loss());
    result.lambda_trace.push(state.degree_state().lambda());
    result.feature_audit.extend(audit);
    Ok(())
}

/// Inserts up to `budget` edges from the target to uniformly drawn nodes
/// whose label differs from the target's. No constraint is checked.
pub fn rnd_baseline(g0: &AttributedGraph, model: &SurrogateModel, config: &AttackConfig) -> Result<AttackResult> {
    let index = CooccurrenceIndex::build(g0);
    let mut state = AttackState::new(g0, model, &index, config)?;
    let v0 = config.target;
    let own = g0.label(v0).ok_or(Error::MissingLabel(v0))?;
    let mut pool: Vec<usize> = (0..g0.n_nodes())
        .filter(|&u| u != v0 && !g0.has_edge(v0, u))
        .filter(|&u| g0.label(u).is_some_and(|c| c != own))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    pool.shuffle(&mut rng);
    let mut result = empty_result(&state, config);
    for u in pool.into_iter().take(config.budget) {
        record(&mut result, &mut state, Flip::edge(v0, u), 0.0)?;
    }
    result.starved = result.perturbations.len() < config.budget;
    Ok(result)
}

/// Derivatives of `[Â² X W]_{v0,c} − [Â² X W]_{v0,c_old}` with respect to the
/// symmetric edge entries `(v0, u)` and the target's features.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGradients {
    /// Indexed by `u`; the entry for `v0` itself is zero.
    pub edges: Vec<f64>,
    pub features: Vec<f64>,
}

/// Gradients of the logit gap between classes `c` and `c_old` at the target.
pub fn surrogate_gradients(
    g: &AttributedGraph,
    model: &SurrogateModel,
    v0: usize,
    c_old: usize,
    c: usize,
) -> Result<SurrogateGradients> {
    g.check_node(v0)?;
    for class in [c, c_old] {
        if class >= model.n_classes {
            return Err(Error::ClassOutOfRange {
                class,
                n_classes: model.n_classes,
            });
        }
    }
    let n = g.n_nodes();
    let dt: Vec<f64> = (0..n).map(|u| (g.deg(u) + 1) as f64).collect();
    let gap: Vec<f64> = (0..n)
        .map(|u| {
            g.node_features(u)
                .iter()
                .map(|&i| {
                    let w = model.weight_row(i);
                    w[c] - w[c_old]
                })
                .sum()
        })
        .collect();
    // q = Â gap
    let q: Vec<f64> = (0..n)
        .map(|j| {
            let own = gap[j] / dt[j];
            own + g.neighbors(j).iter().map(|&k| gap[k] / (dt[j] * dt[k]).sqrt()).sum::<f64>()
        })
        .collect();
    // p = row v0 of Â, r = row v0 of Â²
    let p = |a: usize| -> f64 {
        if a == v0 || g.has_edge(v0, a) {
            1.0 / (dt[v0] * dt[a]).sqrt()
        } else {
            0.0
        }
    };
    let r = crate::normalized::ahat2_row(g, v0);
    let f: f64 = std::iter::once(v0)
        .chain(g.neighbors(v0).iter().copied())
        .map(|a| p(a) * q[a])
        .sum();
    let (p0, y0, q0) = (p(v0), gap[v0], q[v0]);
    let edges = (0..n)
        .map(|u| {
            if u == v0 {
                return 0.0;
            }
            let pu = p(u);
            let s = 1.0 / (dt[v0] * dt[u]).sqrt();
            let direct = s * (q[u] + p0 * gap[u] + pu * y0);
            let rows = 0.5 * ((f + p0 * q0) / dt[v0] + pu * q[u] / dt[u]);
            let cols = 0.5 * ((p0 * q0 + y0 * r.get(v0)) / dt[v0] + (pu * q[u] + gap[u] * r.get(u)) / dt[u]);
            direct - rows - cols
        })
        .collect();
    let self_weight = r.get(v0);
    let features = (0..g.n_features())
        .map(|i| {
            let w = model.weight_row(i);
            self_weight * (w[c] - w[c_old])
        })
        .collect();
    Ok(SurrogateGradients { edges, features })
}

/// Gradient-sign baseline on the target's own edges and features: each step
/// flips the not-yet-flipped entry with the largest gradient magnitude whose
/// sign points towards the other binary value.
pub fn fgsm_baseline(g0: &AttributedGraph, model: &SurrogateModel, config: &AttackConfig) -> Result<AttackResult> {
    if config.mode != AttackMode::Direct {
        return Err(Error::InvalidConfig("the gradient-sign baseline is a direct attack".into()));
    }
    let index = CooccurrenceIndex::build(g0);
    let mut state = AttackState::new(g0, model, &index, config)?;
    let v0 = config.target;
    let mut result = empty_result(&state, config);
    let mut used: HashSet<Flip> = HashSet::new();
    while result.perturbations.len() < config.budget {
        let g = state.graph();
        let c = best_wrong_class(state.logits(), state.class());
        let grads = surrogate_gradients(g, model, v0, state.class(), c)?;
        let mut best: Option<(Flip, f64)> = None;
        let mut consider = |flip: Flip, grad: f64, present: bool| {
            let magnitude = if present { -grad } else { grad };
            if magnitude > 0.0 && !used.contains(&flip) && best.is_none_or(|(_, b)| magnitude > b) {
                best = Some((flip, magnitude));
            }
        };
        if config.perturb_structure {
            for (u, &grad) in grads.edges.iter().enumerate() {
                let present = g.has_edge(v0, u);
                if u == v0 || (present && g.deg(v0) == 1) {
                    continue;
                }
                consider(Flip::edge(v0, u), grad, present);
            }
        }
        if config.perturb_features {
            for (i, &grad) in grads.features.iter().enumerate() {
                consider(Flip::feature(v0, i), grad, g.has_feature(v0, i));
            }
        }
        let Some((flip, magnitude)) = best else {
            result.starved = true;
            break;
        };
        used.insert(flip);
        record(&mut result, &mut state, flip, magnitude)?;
    }
    Ok(result)
}
