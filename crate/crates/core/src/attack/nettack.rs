use crate::error::Result;
use crate::graph::{AttributedGraph, Flip};
use crate::surrogate::SurrogateModel;
use crate::unnoticeability::CooccurrenceIndex;

use super::{AttackConfig, AttackResult, AttackState};

/// Highest-scoring candidate; the earliest one wins ties, so sorted
/// candidate lists break ties lexicographically.
fn best(candidates: &[Flip], scores: &[f64]) -> Option<(Flip, f64)> {
    let mut out: Option<(Flip, f64)> = None;
    for (&f, &s) in candidates.iter().zip(scores) {
        if out.is_none_or(|(_, b)| s > b) {
            out = Some((f, s));
        }
    }
    out
}

/// Greedy attack on the surrogate: at every step the best structural flip
/// and the best feature flip are scored and the higher one is applied, until
/// the budget is spent or no candidate is left.
pub fn run_nettack(g0: &AttributedGraph, model: &SurrogateModel, config: &AttackConfig) -> Result<AttackResult> {
    let index = CooccurrenceIndex::build(g0);
    run_nettack_with(g0, model, &index, config)
}

/// Same as [`run_nettack`] with a co-occurrence index built once for `g0`.
pub fn run_nettack_with(
    g0: &AttributedGraph,
    model: &SurrogateModel,
    index: &CooccurrenceIndex,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let mut state = AttackState::new(g0, model, index, config)?;
    let mut result = AttackResult {
        target: config.target,
        class: state.class(),
        mode: config.mode,
        budget: config.budget,
        perturbations: Vec::with_capacity(config.budget),
        initial_loss: state.loss(),
        loss_trace: Vec::with_capacity(config.budget),
        lambda_trace: Vec::with_capacity(config.budget),
        feature_audit: Vec::new(),
        starved: false,
    };
    while result.perturbations.len() < config.budget {
        let structural = if config.perturb_structure {
            let cands = state.candidate_edges();
            best(&cands, &state.score_all(&cands))
        } else {
            None
        };
        let feature = if config.perturb_features {
            let cands = state.candidate_features();
            best(&cands, &state.score_all(&cands))
        } else {
            None
        };
        let chosen = match (structural, feature) {
            (Some(s), Some(f)) => Some(if s.1 >= f.1 { s } else { f }),
            (s, f) => s.or(f),
        };
        let Some((flip, score)) = chosen else {
            result.starved = true;
            log::warn!(
                "target {}: no candidates left after {} perturbations",
                config.target,
                result.perturbations.len()
            );
            break;
        };
        let (p, audit) = state.apply(flip, score)?;
        log::debug!("target {}: {:?} {:?} -> loss {:.4}", config.target, p.direction, flip, state.loss());
        result.perturbations.push(p);
        result.loss_trace.push(state.loss());
        result.lambda_trace.push(state.degree_state().lambda());
        result.feature_audit.extend(audit);
    }
    Ok(result)
}
