//! Symmetric normalized adjacency `Â = D̃^{-1/2} (A + I) D̃^{-1/2}` and its
//! square, with constant-time per-entry updates of `Â²` after an edge flip.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Direction};

/// Entries of `Â²` with magnitude below this are dropped after an update.
pub const PRUNE_EPS: f64 = 1e-12;

/// Sparse real row, sorted by column.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SparseRow {
    entries: Vec<(usize, f64)>,
}

impl SparseRow {
    pub fn from_sorted(entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SparseRow { entries }
    }

    pub fn get(&self, col: usize) -> f64 {
        match self.entries.binary_search_by_key(&col, |&(c, _)| c) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(c, _)| c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overwrites the given columns (sorted, unique) and prunes near-zeros.
    pub fn with_updates(&self, updates: &[(usize, f64)]) -> SparseRow {
        let mut out = Vec::with_capacity(self.entries.len() + updates.len());
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() || j < updates.len() {
            let take_update = match (self.entries.get(i), updates.get(j)) {
                (Some(&(a, _)), Some(&(b, _))) if a == b => {
                    i += 1;
                    true
                }
                (Some(&(a, _)), Some(&(b, _))) => b < a,
                (None, Some(_)) => true,
                _ => false,
            };
            if take_update {
                let (c, v) = updates[j];
                j += 1;
                if v.abs() >= PRUNE_EPS {
                    out.push((c, v));
                }
            } else {
                out.push(self.entries[i]);
                i += 1;
            }
        }
        SparseRow { entries: out }
    }
}

#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    dtilde: Vec<f64>,
    ahat: Vec<SparseRow>,
    ahat2: Vec<SparseRow>,
}

impl NormalizedAdjacency {
    pub fn build(g: &AttributedGraph) -> Self {
        let n = g.n_nodes();
        let dtilde: Vec<f64> = (0..n).map(|u| (g.deg(u) + 1) as f64).collect();
        let ahat: Vec<SparseRow> = (0..n).map(|u| ahat_row(g, u)).collect();
        let mut scratch = vec![0.0; n];
        let mut touched = Vec::new();
        let ahat2 = (0..n)
            .map(|u| {
                for (k, a_uk) in ahat[u].iter() {
                    for (v, a_kv) in ahat[k].iter() {
                        if scratch[v] == 0.0 {
                            touched.push(v);
                        }
                        scratch[v] += a_uk * a_kv;
                    }
                }
                touched.sort_unstable();
                let row = touched.iter().map(|&v| (v, scratch[v])).collect();
                for &v in &touched {
                    scratch[v] = 0.0;
                }
                touched.clear();
                SparseRow::from_sorted(row)
            })
            .collect();
        NormalizedAdjacency {
            dtilde,
            ahat,
            ahat2,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.dtilde.len()
    }

    pub fn dtilde(&self, u: usize) -> f64 {
        self.dtilde[u]
    }

    pub fn ahat_row(&self, u: usize) -> &SparseRow {
        &self.ahat[u]
    }

    pub fn ahat2_row(&self, u: usize) -> &SparseRow {
        &self.ahat2[u]
    }

    /// Flips `(m, n)` in `g` and updates every cached entry that can change.
    pub fn flip_edge(&mut self, g: &mut AttributedGraph, m: usize, n: usize) -> Result<Direction> {
        g.check_node(m)?;
        g.check_node(n)?;
        if m == n {
            return Err(Error::SelfLoop(m));
        }
        if self.n_nodes() != g.n_nodes() {
            return Err(Error::InconsistentCache(format!(
                "cache has {} nodes, graph has {}",
                self.n_nodes(),
                g.n_nodes()
            )));
        }
        let mut rows = g.two_hop_neighborhood(m)?;
        rows.extend(g.two_hop_neighborhood(n)?);
        rows.sort_unstable();
        rows.dedup();
        let updated: Vec<SparseRow> = rows
            .iter()
            .map(|&u| ahat2_row_after_flip(g, u, &self.ahat2[u], m, n))
            .collect();

        let direction = g.flip_edge(m, n)?;
        for (u, row) in rows.into_iter().zip(updated) {
            self.ahat2[u] = row;
        }
        for k in [m, n] {
            self.dtilde[k] = (g.deg(k) + 1) as f64;
        }
        let mut ahat_rows: Vec<usize> = [m, n]
            .into_iter()
            .chain(g.neighbors(m).iter().copied())
            .chain(g.neighbors(n).iter().copied())
            .collect();
        ahat_rows.sort_unstable();
        ahat_rows.dedup();
        for u in ahat_rows {
            self.ahat[u] = ahat_row(g, u);
        }
        if cfg!(debug_assertions) && g.n_nodes() <= 64 {
            self.verify(g, 1e-9)?;
        }
        Ok(direction)
    }

    /// Recomputes everything from `g` and compares.
    pub fn verify(&self, g: &AttributedGraph, tol: f64) -> Result<()> {
        let fresh = NormalizedAdjacency::build(g);
        for u in 0..g.n_nodes() {
            if fresh.dtilde[u] != self.dtilde[u] {
                return Err(Error::InconsistentCache(format!("degree of node {u}")));
            }
            for (name, a, b) in [
                ("Â", &self.ahat[u], &fresh.ahat[u]),
                ("Â²", &self.ahat2[u], &fresh.ahat2[u]),
            ] {
                if !rows_close(a, b, tol) {
                    return Err(Error::InconsistentCache(format!("{name} row {u}")));
                }
            }
        }
        Ok(())
    }
}

fn rows_close(a: &SparseRow, b: &SparseRow, tol: f64) -> bool {
    let cols: std::collections::BTreeSet<usize> = a.columns().chain(b.columns()).collect();
    cols.into_iter().all(|c| (a.get(c) - b.get(c)).abs() <= tol)
}

/// Row `u` of `Â` computed from the graph.
pub fn ahat_row(g: &AttributedGraph, u: usize) -> SparseRow {
    let du = (g.deg(u) + 1) as f64;
    let mut row: Vec<(usize, f64)> = g
        .neighbors(u)
        .iter()
        .map(|&v| (v, 1.0 / (du * (g.deg(v) + 1) as f64).sqrt()))
        .collect();
    let pos = row.partition_point(|&(v, _)| v < u);
    row.insert(pos, (u, 1.0 / du));
    SparseRow::from_sorted(row)
}

/// Row `u` of `Â²` computed from the graph.
pub fn ahat2_row(g: &AttributedGraph, u: usize) -> SparseRow {
    let mut acc = std::collections::BTreeMap::new();
    let row_u = ahat_row(g, u);
    for (k, a_uk) in row_u.iter() {
        for (v, a_kv) in ahat_row(g, k).iter() {
            *acc.entry(v).or_insert(0.0) += a_uk * a_kv;
        }
    }
    SparseRow::from_sorted(acc.into_iter().collect())
}

/// Pre-flip quantities for a single edge flip `(m, n)`.
struct FlipContext<'g> {
    g: &'g AttributedGraph,
    m: usize,
    n: usize,
    /// `+1` for an insertion, `-1` for a removal.
    x: f64,
}

impl<'g> FlipContext<'g> {
    fn new(g: &'g AttributedGraph, m: usize, n: usize) -> Self {
        let x = if g.has_edge(m, n) { -1.0 } else { 1.0 };
        FlipContext { g, m, n, x }
    }

    fn is_flipped(&self, k: usize, l: usize) -> bool {
        (k == self.m && l == self.n) || (k == self.n && l == self.m)
    }

    fn a(&self, k: usize, l: usize) -> f64 {
        if k != l && self.g.has_edge(k, l) {
            1.0
        } else {
            0.0
        }
    }

    fn a_new(&self, k: usize, l: usize) -> f64 {
        let a = self.a(k, l);
        if self.is_flipped(k, l) {
            1.0 - a
        } else {
            a
        }
    }

    fn a_tilde(&self, k: usize, l: usize) -> f64 {
        if k == l {
            1.0
        } else {
            self.a(k, l)
        }
    }

    fn a_tilde_new(&self, k: usize, l: usize) -> f64 {
        if k == l {
            1.0
        } else {
            self.a_new(k, l)
        }
    }

    fn d(&self, k: usize) -> f64 {
        (self.g.deg(k) + 1) as f64
    }

    fn d_new(&self, k: usize) -> f64 {
        if k == self.m || k == self.n {
            self.d(k) + self.x
        } else {
            self.d(k)
        }
    }

    /// `[Â'²]_{uv}` from the pre-flip entry `old`.
    fn entry(&self, u: usize, v: usize, old: f64) -> f64 {
        let (m, n) = (self.m, self.n);
        let scaled = (self.d(u) * self.d(v)).sqrt() * old - self.a_tilde(u, v) / self.d(u)
            - self.a(u, v) / self.d(v)
            + self.a_new(u, v) / self.d_new(v)
            + self.a_tilde_new(u, v) / self.d_new(u)
            - self.a(u, m) * self.a(m, v) / self.d(m)
            + self.a_new(u, m) * self.a_new(m, v) / self.d_new(m)
            - self.a(u, n) * self.a(n, v) / self.d(n)
            + self.a_new(u, n) * self.a_new(n, v) / self.d_new(n);
        scaled / (self.d_new(u) * self.d_new(v)).sqrt()
    }
}

/// New values of every entry of row `u` of `Â²` that can change when edge
/// `(m, n)` is flipped in `g`. `row` is the current row `u`; `g` is the
/// graph before the flip. Returned columns are sorted and unique.
pub fn ahat2_row_changes(
    g: &AttributedGraph,
    u: usize,
    row: &SparseRow,
    m: usize,
    n: usize,
) -> Vec<(usize, f64)> {
    let ctx = FlipContext::new(g, m, n);
    let mut cols: Vec<usize> = vec![m, n];
    if u == m || u == n {
        cols.extend(row.columns());
        cols.extend_from_slice(g.neighbors(m));
        cols.extend_from_slice(g.neighbors(n));
    } else {
        if g.has_edge(u, m) {
            cols.extend_from_slice(g.neighbors(m));
        }
        if g.has_edge(u, n) {
            cols.extend_from_slice(g.neighbors(n));
        }
    }
    cols.sort_unstable();
    cols.dedup();
    cols.into_iter()
        .map(|v| (v, ctx.entry(u, v, row.get(v))))
        .collect()
}

/// Row `u` of `Â²` after flipping `(m, n)`; `g` is the pre-flip graph.
pub fn ahat2_row_after_flip(
    g: &AttributedGraph,
    u: usize,
    row: &SparseRow,
    m: usize,
    n: usize,
) -> SparseRow {
    row.with_updates(&ahat2_row_changes(g, u, row, m, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{dense_ahat, dense_square, random_graph};
    use rand::{Rng, SeedableRng};

    #[test]
    fn isolated_node_and_single_edge() {
        let g = AttributedGraph::new(1, 0, 1);
        let na = NormalizedAdjacency::build(&g);
        assert_eq!(na.ahat_row(0).entries(), &[(0, 1.0)]);
        assert_eq!(na.ahat2_row(0).entries(), &[(0, 1.0)]);

        let g = AttributedGraph::from_parts(2, 0, 1, [(0, 1)], [], vec![None; 2]).unwrap();
        let na = NormalizedAdjacency::build(&g);
        assert_eq!(na.dtilde(0), 2.0);
        for u in 0..2 {
            for v in 0..2 {
                assert!((na.ahat_row(u).get(v) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ahat2_matches_dense_square() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let g = random_graph(&mut rng, 15, 0.3, 0, 1);
        let na = NormalizedAdjacency::build(&g);
        let sq = dense_square(&dense_ahat(&g));
        for u in 0..15 {
            for v in 0..15 {
                assert!((na.ahat2_row(u).get(v) - sq[u][v]).abs() < 1e-10);
                assert_eq!(na.ahat_row(u).get(v), na.ahat_row(v).get(u));
            }
        }
    }

    #[test]
    fn spectral_radius_at_most_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let g = random_graph(&mut rng, 12, 0.35, 0, 1);
            let dense = dense_ahat(&g);
            let m = nalgebra::DMatrix::from_fn(12, 12, |i, j| dense[i][j]);
            let eig = m.symmetric_eigenvalues();
            assert!(eig.iter().all(|l| l.abs() <= 1.0 + 1e-12), "{eig}");
        }
    }

    #[test]
    fn flip_then_flip_back_restores_row() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut g = random_graph(&mut rng, 30, 0.15, 0, 1);
        let row = ahat2_row(&g, 4);
        let after = ahat2_row_after_flip(&g, 4, &row, 4, 9);
        g.flip_edge(4, 9).unwrap();
        let back = ahat2_row_after_flip(&g, 4, &after, 4, 9);
        assert!(rows_close(&row, &back, 1e-12));
    }

    #[test]
    fn far_away_flip_leaves_entry_unchanged() {
        // 0-1-2 and 3-4-5, flip (3, 5): row 0 touches nothing of it.
        let g = AttributedGraph::from_parts(6, 0, 1, [(0, 1), (1, 2), (3, 4), (4, 5)], [], vec![None; 6])
            .unwrap();
        let row = ahat2_row(&g, 0);
        let changes = ahat2_row_changes(&g, 0, &row, 3, 5);
        assert_eq!(changes, vec![(3, 0.0), (5, 0.0)]);
        assert_eq!(ahat2_row_after_flip(&g, 0, &row, 3, 5), row);
    }

    #[test]
    fn random_flips_match_dense_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        let mut g = random_graph(&mut rng, 50, 0.15, 0, 1);
        let v0 = 0;
        let mut row = ahat2_row(&g, v0);
        for _ in 0..1000 {
            let m = rng.random_range(0..50);
            let n = rng.random_range(0..50);
            if m == n {
                continue;
            }
            let (m, n) = if rng.random_bool(0.5) { (v0, n.max(1)) } else { (m, n) };
            if m == n {
                continue;
            }
            row = ahat2_row_after_flip(&g, v0, &row, m, n);
            g.flip_edge(m, n).unwrap();
            let sq = dense_square(&dense_ahat(&g));
            for v in 0..50 {
                assert!((row.get(v) - sq[v0][v]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_cache_flip_matches_rebuild() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut g = random_graph(&mut rng, 40, 0.1, 0, 1);
        let mut na = NormalizedAdjacency::build(&g);
        for _ in 0..200 {
            let m = rng.random_range(0..40);
            let n = rng.random_range(0..40);
            if m != n {
                na.flip_edge(&mut g, m, n).unwrap();
            }
        }
        na.verify(&g, 1e-10).unwrap();
    }

    #[test]
    fn pruning_does_not_move_entries_beyond_1e8() {
        // Insert and remove the same far edge many times: any pruned residue
        // must stay far below the score tolerance.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut g = random_graph(&mut rng, 25, 0.2, 0, 1);
        let mut row = ahat2_row(&g, 0);
        for _ in 0..100 {
            for (m, n) in [(0, 7), (3, 11), (0, 7), (3, 11)] {
                row = ahat2_row_after_flip(&g, 0, &row, m, n);
                g.flip_edge(m, n).unwrap();
            }
        }
        assert!(rows_close(&row, &ahat2_row(&g, 0), 1e-8));
    }

    #[test]
    fn with_updates_merges_and_prunes() {
        let row = SparseRow::from_sorted(vec![(1, 0.5), (3, 0.25), (8, 0.1)]);
        let out = row.with_updates(&[(0, 0.2), (3, 1e-14), (8, 0.3), (9, 0.4)]);
        assert_eq!(out.entries(), &[(0, 0.2), (1, 0.5), (8, 0.3), (9, 0.4)]);
    }
}
