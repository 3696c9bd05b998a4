use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSplit;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::normalized::NormalizedAdjacency;
use crate::surrogate::{softmax, SurrogateModel};
use crate::victim::margin_from_proba;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetRule {
    pub high_margin: usize,
    pub low_margin: usize,
    pub random: usize,
}

impl Default for TargetRule {
    fn default() -> Self {
        TargetRule {
            high_margin: 10,
            low_margin: 10,
            random: 20,
        }
    }
}

impl TargetRule {
    pub fn total(&self) -> usize {
        self.high_margin + self.low_margin + self.random
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetGroup {
    High,
    Low,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSelection {
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    pub random: Vec<usize>,
    /// Margin of every selected node under the model used for selection.
    pub margins: Vec<(usize, f64)>,
    /// The rule asked for more targets than there were correctly classified
    /// unlabeled nodes.
    pub shortfall: bool,
}

impl TargetSelection {
    /// All targets with their group, in group order.
    pub fn all(&self) -> Vec<(usize, TargetGroup)> {
        let tag = |v: &[usize], t: TargetGroup| v.iter().map(move |&u| (u, t)).collect::<Vec<_>>();
        let mut out = tag(&self.high, TargetGroup::High);
        out.extend(tag(&self.low, TargetGroup::Low));
        out.extend(tag(&self.random, TargetGroup::Random));
        out
    }

    pub fn len(&self) -> usize {
        self.high.len() + self.low.len() + self.random.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Picks attack targets among correctly classified unlabeled nodes: the
/// highest margins, the lowest margins, and a random draw from the rest.
/// Margin ties go to the smaller node id.
pub fn select_targets(
    model: &SurrogateModel,
    g: &AttributedGraph,
    split: &DataSplit,
    seed: u64,
    rule: &TargetRule,
) -> Result<TargetSelection> {
    if split.n_nodes() != g.n_nodes() {
        return Err(Error::InvalidConfig("split does not match the graph".into()));
    }
    let na = NormalizedAdjacency::build(g);
    let mut pool: Vec<(usize, f64)> = split
        .unlabeled
        .iter()
        .filter_map(|&u| {
            let c = g.label(u)?;
            let m = margin_from_proba(&softmax(&model.logits(&na, g, u)), c);
            (m > 0.0).then_some((u, m))
        })
        .collect();
    let shortfall = pool.len() < rule.total();
    if shortfall {
        log::warn!(
            "only {} correctly classified unlabeled nodes for {} requested targets",
            pool.len(),
            rule.total()
        );
    }
    pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n_high = rule.high_margin.min(pool.len());
    let high: Vec<(usize, f64)> = pool.drain(..n_high).collect();
    pool.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n_low = rule.low_margin.min(pool.len());
    let low: Vec<(usize, f64)> = pool.drain(..n_low).collect();
    pool.sort_by_key(|&(u, _)| u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool.truncate(rule.random);
    let ids = |v: &[(usize, f64)]| v.iter().map(|&(u, _)| u).collect::<Vec<_>>();
    let mut margins: Vec<(usize, f64)> = high.iter().chain(&low).chain(&pool).copied().collect();
    margins.sort_by_key(|&(u, _)| u);
    Ok(TargetSelection {
        high: ids(&high),
        low: ids(&low),
        random: ids(&pool),
        margins,
        shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_split;

    /// Two classes, node features equal to the class; class-0 nodes form a
    /// clique and so do class-1 nodes.
    fn confident_graph(n: usize) -> AttributedGraph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if u % 2 == v % 2 {
                    edges.push((u, v));
                }
            }
        }
        let feats = (0..n).map(|u| (u, u % 2));
        AttributedGraph::from_parts(n, 2, 2, edges, feats, (0..n).map(|u| Some(u % 2)).collect()).unwrap()
    }

    fn sharp_model() -> SurrogateModel {
        SurrogateModel::from_weights(2, 2, vec![100.0, -100.0, -100.0, 100.0]).unwrap()
    }

    #[test]
    fn confident_ties_go_to_small_ids() {
        let g = confident_graph(300);
        let split = make_split(&g, 1).unwrap();
        let sel = select_targets(&sharp_model(), &g, &split, 1, &TargetRule::default()).unwrap();
        let mut expected = split.unlabeled.clone();
        expected.sort_unstable();
        assert_eq!(sel.high, expected[..10]);
        assert_eq!(sel.len(), 40);
        assert!(!sel.shortfall);
    }

    #[test]
    fn groups_are_disjoint_and_seeded() {
        let g = confident_graph(300);
        let split = make_split(&g, 2).unwrap();
        let model = SurrogateModel::from_weights(2, 2, vec![1.0, 0.2, 0.1, 1.3]).unwrap();
        let a = select_targets(&model, &g, &split, 5, &TargetRule::default()).unwrap();
        let mut all: Vec<usize> = a.all().into_iter().map(|(u, _)| u).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 40);
        assert_eq!(a, select_targets(&model, &g, &split, 5, &TargetRule::default()).unwrap());
        assert_ne!(a.random, select_targets(&model, &g, &split, 6, &TargetRule::default()).unwrap().random);
    }

    #[test]
    fn shortfall_takes_everything() {
        let g = confident_graph(30);
        let split = make_split(&g, 1).unwrap();
        let sel = select_targets(&sharp_model(), &g, &split, 1, &TargetRule::default()).unwrap();
        assert!(sel.shortfall);
        assert_eq!(sel.len(), split.unlabeled.len());
    }
}
