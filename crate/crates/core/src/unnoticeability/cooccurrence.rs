//! Feature co-occurrence test.
//!
//! Two features are linked when some node of the clean graph carries both.
//! Adding feature `i` to node `u` is accepted if a one-step random walk on
//! that co-occurrence graph, started uniformly from `u`'s original features,
//! lands on `i` with probability above half of the largest achievable value.
//! Removing a feature is always accepted.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

#[derive(Debug, Clone)]
pub struct CooccurrenceIndex {
    /// Sorted co-occurrence neighbors per feature.
    neighbors: Vec<Vec<usize>>,
    /// Features of each node in the clean graph.
    original: Vec<Vec<usize>>,
    /// `Σ_{j ∈ S_u} 1/d_j` per node, over features with nonzero degree.
    inverse_degree_mass: Vec<f64>,
}

/// Audit record for one feature-addition decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureTestOutcome {
    pub node: usize,
    pub feature: usize,
    pub originally_present: bool,
    pub probability: f64,
    pub threshold: f64,
    pub allowed: bool,
}

impl CooccurrenceIndex {
    pub fn build(g0: &AttributedGraph) -> Self {
        let d = g0.n_features();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); d];
        for u in 0..g0.n_nodes() {
            let feats = g0.node_features(u);
            for (a, &i) in feats.iter().enumerate() {
                for &j in &feats[a + 1..] {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        for row in &mut neighbors {
            row.sort_unstable();
            row.dedup();
        }
        let original: Vec<Vec<usize>> = (0..g0.n_nodes()).map(|u| g0.node_features(u).to_vec()).collect();
        let inverse_degree_mass = original
            .iter()
            .map(|s| {
                s.iter()
                    .filter(|&&j| !neighbors[j].is_empty())
                    .map(|&j| 1.0 / neighbors[j].len() as f64)
                    .sum()
            })
            .collect();
        CooccurrenceIndex {
            neighbors,
            original,
            inverse_degree_mass,
        }
    }

    pub fn n_features(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.original.len()
    }

    pub fn cooccur(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn feature_degree(&self, j: usize) -> usize {
        self.neighbors[j].len()
    }

    pub fn feature_neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    pub fn n_links(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn original_features(&self, u: usize) -> &[usize] {
        &self.original[u]
    }

    fn check(&self, u: usize, i: usize) -> Result<()> {
        if u >= self.n_nodes() {
            return Err(Error::NodeOutOfRange {
                node: u,
                n_nodes: self.n_nodes(),
            });
        }
        if i >= self.n_features() {
            return Err(Error::FeatureOutOfRange {
                feature: i,
                n_features: self.n_features(),
            });
        }
        Ok(())
    }

    /// Acceptance threshold `σ_u`: half the largest achievable walk probability.
    pub fn threshold(&self, u: usize) -> f64 {
        match self.original[u].len() {
            0 => 0.0,
            s => 0.5 * self.inverse_degree_mass[u] / s as f64,
        }
    }

    /// `Σ_{j ∈ S_u, (i,j) ∈ E} 1/d_j`, summed in ascending `j`.
    fn reach_mass(&self, u: usize, i: usize) -> f64 {
        self.original[u]
            .iter()
            .filter(|&&j| self.cooccur(i, j))
            .map(|&j| 1.0 / self.neighbors[j].len() as f64)
            .sum()
    }

    /// One-step walk probability `p(i | S_u)`.
    pub fn walk_probability(&self, u: usize, i: usize) -> Result<f64> {
        self.check(u, i)?;
        Ok(match self.original[u].len() {
            0 => 0.0,
            s => self.reach_mass(u, i) / s as f64,
        })
    }

    pub fn evaluate_addition(&self, u: usize, i: usize) -> Result<FeatureTestOutcome> {
        self.check(u, i)?;
        let originally_present = self.original[u].binary_search(&i).is_ok();
        let probability = self.walk_probability(u, i)?;
        let allowed = originally_present
            || (!self.original[u].is_empty() && self.reach_mass(u, i) > 0.5 * self.inverse_degree_mass[u]);
        if self.original[u].is_empty() {
            log::debug!("node {u} has no original features; additions are rejected");
        }
        Ok(FeatureTestOutcome {
            node: u,
            feature: i,
            originally_present,
            probability,
            threshold: self.threshold(u),
            allowed,
        })
    }

    pub fn addition_allowed(&self, u: usize, i: usize) -> Result<bool> {
        Ok(self.evaluate_addition(u, i)?.allowed)
    }

    /// Every feature that may be set to one on node `u`, sorted.
    pub fn allowed_additions(&self, u: usize) -> Vec<usize> {
        let s = &self.original[u];
        if s.is_empty() {
            return Vec::new();
        }
        let mut mass = vec![0.0f64; self.n_features()];
        let mut touched = Vec::new();
        for &j in s {
            let w = match self.neighbors[j].len() {
                0 => continue,
                d => 1.0 / d as f64,
            };
            for &i in &self.neighbors[j] {
                if mass[i] == 0.0 {
                    touched.push(i);
                }
                mass[i] += w;
            }
        }
        let bar = 0.5 * self.inverse_degree_mass[u];
        let mut out: Vec<usize> = touched.into_iter().filter(|&i| mass[i] > bar).collect();
        out.extend_from_slice(s);
        out.sort_unstable();
        out.dedup();
        out
    }
}
