use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Flip, Perturbation};

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

/// Subgraph seen by an attacker who knows only the nodes closest to `v0`:
/// whole distance rings are taken until `ceil(fraction * N)` nodes are
/// collected, the last ring being cut by node id. Returns the induced
/// subgraph and, for each of its nodes, the id in `g`.
pub fn limited_knowledge_subgraph(
    g: &AttributedGraph,
    v0: usize,
    fraction: f64,
) -> Result<(AttributedGraph, Vec<usize>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("knowledge fraction {fraction} outside (0, 1]")));
    }
    let dist = g.bfs_distances(v0)?;
    let n = g.n_nodes();
    let keep = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&u| (dist[u].unwrap_or(usize::MAX), u));
    let mut nodes = order[..keep].to_vec();
    nodes.sort_unstable();
    let sub = g.induced_subgraph(&nodes)?;
    Ok((sub, nodes))
}

/// Maps flips made on a subgraph back to the ids of the full graph.
pub fn lift_perturbations(log: &[Perturbation], mapping: &[usize]) -> Result<Vec<Perturbation>> {
    let map = |u: usize| {
        mapping.get(u).copied().ok_or(Error::NodeOutOfRange {
            node: u,
            n_nodes: mapping.len(),
        })
    };
    log.iter()
        .map(|p| {
            let flip = match p.flip {
                Flip::Edge { u, v } => Flip::edge(map(u)?, map(v)?),
                Flip::Feature { node, feature } => Flip::feature(map(node)?, feature),
            };
            Ok(Perturbation { flip, ..p.clone() })
        })
        .collect()
}
