//! Statistical gates that every attack perturbation has to pass.

mod cooccurrence;
mod degree;

pub use cooccurrence::{CooccurrenceIndex, FeatureTestOutcome};
pub use degree::{
    estimate_alpha, lambda_from_summaries, lambda_statistic, loglik_from_summary,
    powerlaw_loglikelihood, DegreeSummary, DegreeTestConfig, DegreeTestOutcome, DegreeTestState,
    LogLikForm,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Direction, Flip, Perturbation};

/// One replayed step of a perturbation log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayStep {
    pub flip: Flip,
    pub lambda: Option<f64>,
    pub feature_test: Option<FeatureTestOutcome>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayAudit {
    pub steps: Vec<ReplayStep>,
    pub final_lambda: f64,
}

impl ReplayAudit {
    pub fn all_accepted(&self) -> bool {
        self.steps.iter().all(|s| s.accepted)
    }
}

/// Re-checks a perturbation log against the clean graph from scratch: the
/// degree test recounts every degree after each edge flip, and the feature
/// test is rebuilt from `g0`.
pub fn replay_constraints(
    g0: &AttributedGraph,
    log: &[Perturbation],
    config: &DegreeTestConfig,
) -> Result<ReplayAudit> {
    let index = CooccurrenceIndex::build(g0);
    let reference = g0.degrees();
    let mut g = g0.clone();
    let mut steps = Vec::with_capacity(log.len());
    for p in log {
        let direction = g.apply(p.flip)?;
        if direction != p.direction {
            return Err(Error::InconsistentCache(format!(
                "log says {:?} for {:?} but replay applied {:?}",
                p.direction, p.flip, direction
            )));
        }
        let step = match p.flip {
            Flip::Edge { .. } => {
                let lambda = lambda_statistic(&reference, &g.degrees(), config.d_min, config.form)?;
                ReplayStep {
                    flip: p.flip,
                    lambda: Some(lambda),
                    feature_test: None,
                    accepted: lambda < config.tau,
                }
            }
            Flip::Feature { node, feature } => {
                let test = (direction == Direction::Insert)
                    .then(|| index.evaluate_addition(node, feature))
                    .transpose()?;
                ReplayStep {
                    flip: p.flip,
                    lambda: None,
                    accepted: test.is_none_or(|t| t.allowed),
                    feature_test: test,
                }
            }
        };
        steps.push(step);
    }
    let final_lambda = lambda_statistic(&reference, &g.degrees(), config.d_min, config.form)?;
    Ok(ReplayAudit { steps, final_lambda })
}
