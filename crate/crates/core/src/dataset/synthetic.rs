use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

/// Degree-heterogeneous planted-partition graph with class-correlated
/// binary features.
///
/// Each node draws a propensity weight from a Pareto tail, so degrees spread
/// over several orders of magnitude instead of concentrating around the mean.
/// Every class owns a contiguous block of "topic" features; nodes switch on
/// their own topic features with probability `topic_rate` and any other
/// feature with probability `noise_rate`. The output is always connected:
/// stray components are attached to a same-class node of the largest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPartition {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub mean_degree: f64,
    /// Expected fraction of edges that join nodes of the same class.
    pub homophily: f64,
    /// Pareto shape of the propensity weights; smaller means heavier tail.
    pub weight_shape: f64,
    pub topic_rate: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        PlantedPartition {
            n_nodes: 500,
            n_classes: 4,
            n_features: 200,
            mean_degree: 5.0,
            homophily: 0.85,
            weight_shape: 2.5,
            topic_rate: 0.08,
            noise_rate: 0.015,
            seed: 0,
        }
    }
}

impl PlantedPartition {
    pub fn generate(&self) -> Result<AttributedGraph> {
        let n = self.n_nodes;
        let k = self.n_classes;
        if n < 2 || k < 2 || self.n_features < k {
            return Err(Error::InvalidConfig(format!(
                "planted partition needs n_nodes >= 2, n_classes >= 2, n_features >= n_classes; got {n}, {k}, {}",
                self.n_features
            )));
        }
        if !(0.0..=1.0).contains(&self.homophily) || self.weight_shape <= 1.0 {
            return Err(Error::InvalidConfig(
                "homophily must lie in [0, 1] and weight_shape must exceed 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let labels: Vec<usize> = (0..n).map(|u| u % k).collect();
        let mut weights: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = rng.random::<f64>();
                (1.0 - x).powf(-1.0 / self.weight_shape)
            })
            .collect();
        let mean = weights.iter().sum::<f64>() / n as f64;
        weights.iter_mut().for_each(|w| *w /= mean);

        let n_edges = self.mean_degree * n as f64 / 2.0;
        let per_class = n as f64 / k as f64;
        let same_pairs = k as f64 * per_class * (per_class - 1.0) / 2.0;
        let cross_pairs = n as f64 * (n as f64 - 1.0) / 2.0 - same_pairs;
        let rho_same = self.homophily * n_edges / same_pairs;
        let rho_cross = (1.0 - self.homophily) * n_edges / cross_pairs;

        let mut g = AttributedGraph::new(n, self.n_features, k);
        for u in 0..n {
            for v in (u + 1)..n {
                let rho = if labels[u] == labels[v] { rho_same } else { rho_cross };
                let p = (weights[u] * weights[v] * rho).min(1.0);
                if rng.random::<f64>() < p {
                    g.flip_edge(u, v)?;
                }
            }
        }

        let block = self.n_features / k;
        for u in 0..n {
            let topic = labels[u] * block..(labels[u] + 1) * block;
            for i in 0..self.n_features {
                let rate = if topic.contains(&i) {
                    self.topic_rate
                } else {
                    self.noise_rate
                };
                if rng.random::<f64>() < rate {
                    g.flip_feature(u, i)?;
                }
            }
        }
        for (u, &c) in labels.iter().enumerate() {
            g.set_label(u, Some(c))?;
        }

        connect_components(&mut g, &labels, &mut rng)?;
        Ok(g)
    }
}

fn connect_components(g: &mut AttributedGraph, labels: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
    let components = g.connected_components();
    let main = components
        .iter()
        .enumerate()
        .max_by_key(|(i, c)| (c.len(), std::cmp::Reverse(*i)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let anchors = components[main].clone();
    for (idx, component) in components.iter().enumerate() {
        if idx == main {
            continue;
        }
        let u = component[0];
        let same: Vec<usize> = anchors
            .iter()
            .copied()
            .filter(|&v| labels[v] == labels[u])
            .collect();
        let pool = if same.is_empty() { &anchors } else { &same };
        let v = pool[rng.random_range(0..pool.len())];
        g.flip_edge(u, v)?;
    }
    Ok(())
}
