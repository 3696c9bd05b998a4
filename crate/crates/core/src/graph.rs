//! Sparse undirected attributed graph.
//!
//! Adjacency and feature rows are kept as sorted id vectors: row iteration is
//! `O(deg)`, membership is a binary search, and the degree of a node is the
//! length of its row. Every edge is stored in both endpoint rows and both
//! entries are mutated together.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributedGraph {
    adjacency: Vec<Vec<usize>>,
    features: Vec<Vec<usize>>,
    labels: Vec<Option<usize>>,
    n_features: usize,
    n_classes: usize,
    n_edges: usize,
}

/// A single binary entry of the graph that an attack may toggle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flip {
    /// Undirected edge, stored with `u < v`.
    Edge { u: usize, v: usize },
    Feature { node: usize, feature: usize },
}

impl Flip {
    pub fn edge(a: usize, b: usize) -> Self {
        Flip::Edge {
            u: a.min(b),
            v: a.max(b),
        }
    }

    pub fn feature(node: usize, feature: usize) -> Self {
        Flip::Feature { node, feature }
    }

    pub fn is_edge(&self) -> bool {
        matches!(self, Flip::Edge { .. })
    }

    /// Nodes whose rows the flip touches.
    pub fn nodes(&self) -> (usize, Option<usize>) {
        match *self {
            Flip::Edge { u, v } => (u, Some(v)),
            Flip::Feature { node, .. } => (node, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Insert,
    Remove,
}

/// A flip as applied during an attack, with the score that selected it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub flip: Flip,
    pub direction: Direction,
    pub score: f64,
}

impl AttributedGraph {
    pub fn new(n_nodes: usize, n_features: usize, n_classes: usize) -> Self {
        AttributedGraph {
            adjacency: vec![Vec::new(); n_nodes],
            features: vec![Vec::new(); n_nodes],
            labels: vec![None; n_nodes],
            n_features,
            n_classes,
            n_edges: 0,
        }
    }

    /// Builds a graph from raw parts. Duplicate edges and feature entries are
    /// merged; self-loops are rejected.
    pub fn from_parts(
        n_nodes: usize,
        n_features: usize,
        n_classes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<Option<usize>>,
    ) -> Result<Self> {
        let mut g = AttributedGraph::new(n_nodes, n_features, n_classes);
        if labels.len() != n_nodes {
            return Err(Error::InvalidConfig(format!(
                "{} labels for {} nodes",
                labels.len(),
                n_nodes
            )));
        }
        for (u, v) in edges {
            g.check_node(u)?;
            g.check_node(v)?;
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            g.adjacency[u].push(v);
            g.adjacency[v].push(u);
        }
        for (u, i) in features {
            g.check_node(u)?;
            g.check_feature(i)?;
            g.features[u].push(i);
        }
        for row in g.adjacency.iter_mut().chain(g.features.iter_mut()) {
            row.sort_unstable();
            row.dedup();
        }
        g.n_edges = g.adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        if let Some(&c) = labels.iter().flatten().find(|&&c| c >= n_classes) {
            return Err(Error::ClassOutOfRange {
                class: c,
                n_classes,
            });
        }
        g.labels = labels;
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn check_node(&self, u: usize) -> Result<()> {
        if u < self.n_nodes() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node: u,
                n_nodes: self.n_nodes(),
            })
        }
    }

    pub fn check_feature(&self, i: usize) -> Result<()> {
        if i < self.n_features {
            Ok(())
        } else {
            Err(Error::FeatureOutOfRange {
                feature: i,
                n_features: self.n_features,
            })
        }
    }

    /// Sorted neighbors of `u`. Panics on an out-of-range id.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    /// Sorted active feature ids of `u`. Panics on an out-of-range id.
    pub fn node_features(&self, u: usize) -> &[usize] {
        &self.features[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn has_feature(&self, u: usize, i: usize) -> bool {
        self.features[u].binary_search(&i).is_ok()
    }

    /// Degree of `u` without self-loops.
    pub fn degree(&self, u: usize) -> Result<usize> {
        self.check_node(u)?;
        Ok(self.adjacency[u].len())
    }

    /// Unchecked degree for hot loops.
    #[inline]
    pub fn deg(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn label(&self, u: usize) -> Option<usize> {
        self.labels[u]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn set_label(&mut self, u: usize, class: Option<usize>) -> Result<()> {
        self.check_node(u)?;
        if let Some(c) = class {
            if c >= self.n_classes {
                return Err(Error::ClassOutOfRange {
                    class: c,
                    n_classes: self.n_classes,
                });
            }
        }
        self.labels[u] = class;
        Ok(())
    }

    /// Every undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Every `(node, feature)` pair with value one, in sorted order.
    pub fn feature_entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.features
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&i| (u, i)))
    }

    pub fn n_feature_entries(&self) -> usize {
        self.features.iter().map(Vec::len).sum()
    }

    /// Toggles the undirected edge `(u, v)` and returns the direction applied.
    pub fn flip_edge(&mut self, u: usize, v: usize) -> Result<Direction> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        let direction = match self.adjacency[u].binary_search(&v) {
            Ok(pos) => {
                self.adjacency[u].remove(pos);
                let back = self.adjacency[v]
                    .binary_search(&u)
                    .expect("adjacency rows out of sync");
                self.adjacency[v].remove(back);
                self.n_edges -= 1;
                Direction::Remove
            }
            Err(pos) => {
                self.adjacency[u].insert(pos, v);
                let back = self.adjacency[v]
                    .binary_search(&u)
                    .expect_err("adjacency rows out of sync");
                self.adjacency[v].insert(back, u);
                self.n_edges += 1;
                Direction::Insert
            }
        };
        Ok(direction)
    }

    pub fn flip_feature(&mut self, u: usize, i: usize) -> Result<Direction> {
        self.check_node(u)?;
        self.check_feature(i)?;
        let row = &mut self.features[u];
        Ok(match row.binary_search(&i) {
            Ok(pos) => {
                row.remove(pos);
                Direction::Remove
            }
            Err(pos) => {
                row.insert(pos, i);
                Direction::Insert
            }
        })
    }

    pub fn apply(&mut self, flip: Flip) -> Result<Direction> {
        match flip {
            Flip::Edge { u, v } => self.flip_edge(u, v),
            Flip::Feature { node, feature } => self.flip_feature(node, feature),
        }
    }

    /// Direction a flip would take on the current graph.
    pub fn direction_of(&self, flip: Flip) -> Direction {
        let present = match flip {
            Flip::Edge { u, v } => self.has_edge(u, v),
            Flip::Feature { node, feature } => self.has_feature(node, feature),
        };
        if present {
            Direction::Remove
        } else {
            Direction::Insert
        }
    }

    /// Nodes within two hops of `u`, including `u`, sorted.
    pub fn two_hop_neighborhood(&self, u: usize) -> Result<Vec<usize>> {
        self.check_node(u)?;
        let mut out: Vec<usize> = Vec::with_capacity(1 + self.deg(u) * 4);
        out.push(u);
        for &k in &self.adjacency[u] {
            out.push(k);
            out.extend_from_slice(&self.adjacency[k]);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Hop distance from `source` to every node, `None` when unreachable.
    pub fn bfs_distances(&self, source: usize) -> Result<Vec<Option<usize>>> {
        self.check_node(source)?;
        let mut dist = vec![None; self.n_nodes()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut component = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        component.push(v);
                        queue.push_back(v);
                    }
                }
            }
            component.sort_unstable();
            components.push(component);
        }
        components
    }

    /// Node-induced subgraph. `nodes` gives the new-to-old id mapping.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<AttributedGraph> {
        let mut old_to_new = vec![usize::MAX; self.n_nodes()];
        for (new, &old) in nodes.iter().enumerate() {
            self.check_node(old)?;
            old_to_new[old] = new;
        }
        let mut sub = AttributedGraph::new(nodes.len(), self.n_features, self.n_classes);
        for (new, &old) in nodes.iter().enumerate() {
            let mut row: Vec<usize> = self.adjacency[old]
                .iter()
                .map(|&v| old_to_new[v])
                .filter(|&v| v != usize::MAX)
                .collect();
            row.sort_unstable();
            sub.adjacency[new] = row;
            sub.features[new] = self.features[old].clone();
            sub.labels[new] = self.labels[old];
        }
        sub.n_edges = sub.adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        Ok(sub)
    }

    /// Number of entries in which two graphs over the same node set differ,
    /// counting each undirected edge once.
    pub fn difference_count(&self, other: &AttributedGraph) -> usize {
        fn sym_diff(a: &[usize], b: &[usize]) -> usize {
            let (mut i, mut j, mut count) = (0, 0, 0);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    std::cmp::Ordering::Less => {
                        count += 1;
                        i += 1;
                    }
                    std::cmp::Ordering::Greater => {
                        count += 1;
                        j += 1;
                    }
                    std::cmp::Ordering::Equal => {
                        i += 1;
                        j += 1;
                    }
                }
            }
            count + (a.len() - i) + (b.len() - j)
        }
        let edges: usize = (0..self.n_nodes())
            .map(|u| sym_diff(&self.adjacency[u], &other.adjacency[u]))
            .sum::<usize>()
            / 2;
        let feats: usize = (0..self.n_nodes())
            .map(|u| sym_diff(&self.features[u], &other.features[u]))
            .sum();
        edges + feats
    }
}
