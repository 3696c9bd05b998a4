//! Greedy surrogate attack and the random / gradient-sign baselines.

mod baselines;
mod nettack;
mod state;

pub use baselines::{fgsm_baseline, rnd_baseline, surrogate_gradients, SurrogateGradients};
pub use nettack::{run_nettack, run_nettack_with};
pub use state::AttackState;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Perturbation};
use crate::unnoticeability::{DegreeTestConfig, FeatureTestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Direct,
    Influencer,
}

/// How feature flips are ranked during the greedy search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScoring {
    /// Re-evaluate the surrogate loss after the flip (linear in the flip, so
    /// this costs `O(K)` per candidate).
    #[default]
    Exact,
    /// First-order score with the wrong class frozen for the whole step.
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target: usize,
    /// Sorted, unique.
    pub attackers: Vec<usize>,
    pub budget: usize,
    pub mode: AttackMode,
    pub perturb_structure: bool,
    pub perturb_features: bool,
    pub constrained: bool,
    pub degree_test: DegreeTestConfig,
    pub feature_scoring: FeatureScoring,
    /// Class to push the target away from; defaults to its label, then to
    /// the surrogate prediction.
    pub class: Option<usize>,
    pub seed: u64,
}

impl AttackConfig {
    pub fn direct(target: usize, budget: usize) -> Self {
        AttackConfig {
            target,
            attackers: vec![target],
            budget,
            mode: AttackMode::Direct,
            perturb_structure: true,
            perturb_features: true,
            constrained: true,
            degree_test: DegreeTestConfig::default(),
            feature_scoring: FeatureScoring::Exact,
            class: None,
            seed: 0,
        }
    }

    pub fn influencer(target: usize, mut attackers: Vec<usize>, budget: usize) -> Self {
        attackers.sort_unstable();
        attackers.dedup();
        AttackConfig {
            attackers,
            mode: AttackMode::Influencer,
            ..AttackConfig::direct(target, budget)
        }
    }

    pub fn structure_only(mut self) -> Self {
        self.perturb_structure = true;
        self.perturb_features = false;
        self
    }

    pub fn features_only(mut self) -> Self {
        self.perturb_structure = false;
        self.perturb_features = true;
        self
    }

    pub fn unconstrained(mut self) -> Self {
        self.constrained = false;
        self
    }

    pub fn validate(&self, g: &AttributedGraph) -> Result<()> {
        g.check_node(self.target)?;
        for &a in &self.attackers {
            g.check_node(a)?;
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        if !self.attackers.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("attackers must be sorted and unique".into()));
        }
        match self.mode {
            AttackMode::Direct if self.attackers != [self.target] => Err(Error::InvalidConfig(
                "a direct attack uses the target as its only attacker".into(),
            )),
            AttackMode::Influencer if self.attackers.is_empty() => {
                Err(Error::InvalidConfig("an influencer attack needs attackers".into()))
            }
            AttackMode::Influencer if self.attackers.contains(&self.target) => Err(Error::InvalidConfig(
                "an influencer attack must leave the target untouched".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub target: usize,
    pub class: usize,
    pub mode: AttackMode,
    pub budget: usize,
    pub perturbations: Vec<Perturbation>,
    pub initial_loss: f64,
    /// Surrogate loss after each applied perturbation.
    pub loss_trace: Vec<f64>,
    /// Degree test statistic against the clean graph after each perturbation.
    pub lambda_trace: Vec<f64>,
    /// Co-occurrence test outcome for every applied feature insertion.
    pub feature_audit: Vec<FeatureTestOutcome>,
    /// Fewer than `budget` perturbations were possible.
    pub starved: bool,
}

impl AttackResult {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(self.initial_loss)
    }

    pub fn final_lambda(&self) -> f64 {
        self.lambda_trace.last().copied().unwrap_or(0.0)
    }

    pub fn n_structure(&self) -> usize {
        self.perturbations.iter().filter(|p| p.flip.is_edge()).count()
    }

    pub fn n_features(&self) -> usize {
        self.perturbations.len() - self.n_structure()
    }

    /// Number of perturbations after which the surrogate loss first became
    /// positive, if it did.
    pub fn steps_to_positive_loss(&self) -> Option<usize> {
        if self.initial_loss > 0.0 {
            return Some(0);
        }
        self.loss_trace.iter().position(|&l| l > 0.0).map(|i| i + 1)
    }
}

/// Applies a perturbation log to a copy of `g0`.
pub fn apply_perturbations(g0: &AttributedGraph, log: &[Perturbation]) -> Result<AttributedGraph> {
    let mut g = g0.clone();
    for p in log {
        g.apply(p.flip)?;
    }
    Ok(g)
}

/// Up to `k` random neighbors of `target`; when it has fewer, the rest are
/// drawn from nodes at distance two.
pub fn select_influencers(g: &AttributedGraph, target: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    g.check_node(target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut near = g.neighbors(target).to_vec();
    near.shuffle(&mut rng);
    near.truncate(k);
    if near.len() < k {
        let mut ring: Vec<usize> = g
            .two_hop_neighborhood(target)?
            .into_iter()
            .filter(|&u| u != target && !g.has_edge(target, u))
            .collect();
        ring.shuffle(&mut rng);
        near.extend(ring.into_iter().take(k - near.len()));
    }
    near.sort_unstable();
    Ok(near)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> AttributedGraph {
        AttributedGraph::from_parts(n, 1, 2, (0..n - 1).map(|u| (u, u + 1)), [], vec![Some(0); n]).unwrap()
    }

    #[test]
    fn config_validation() {
        let g = path(6);
        assert!(AttackConfig::direct(2, 3).validate(&g).is_ok());
        assert!(AttackConfig::direct(2, 0).validate(&g).is_err());
        assert!(AttackConfig::direct(9, 1).validate(&g).is_err());
        assert!(AttackConfig::influencer(2, vec![1, 3], 2).validate(&g).is_ok());
        assert!(AttackConfig::influencer(2, vec![2, 3], 2).validate(&g).is_err());
        assert!(AttackConfig::influencer(2, vec![], 2).validate(&g).is_err());
        let mut bad = AttackConfig::direct(2, 1);
        bad.attackers = vec![1];
        assert!(bad.validate(&g).is_err());
    }

    #[test]
    fn influencers_fill_from_second_ring() {
        let g = path(7);
        let a = select_influencers(&g, 3, 5, 1).unwrap();
        assert_eq!(a, vec![1, 2, 4, 5]);
        let a = select_influencers(&g, 3, 1, 1).unwrap();
        assert!(a == [2] || a == [4]);
        assert_eq!(select_influencers(&g, 3, 3, 9).unwrap(), select_influencers(&g, 3, 3, 9).unwrap());
    }

    #[test]
    fn steps_to_positive_loss() {
        let mut r = AttackResult {
            target: 0,
            class: 0,
            mode: AttackMode::Direct,
            budget: 3,
            perturbations: vec![],
            initial_loss: -1.0,
            loss_trace: vec![-0.5, 0.2, 0.4],
            lambda_trace: vec![],
            feature_audit: vec![],
            starved: false,
        };
        assert_eq!(r.steps_to_positive_loss(), Some(2));
        r.loss_trace = vec![-0.5];
        assert_eq!(r.steps_to_positive_loss(), None);
        assert_eq!(r.final_loss(), -0.5);
    }
}
