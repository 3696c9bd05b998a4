//! Dense reference computations for unit tests.

use rand::Rng;

use crate::graph::AttributedGraph;

pub fn random_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    p: f64,
    n_features: usize,
    n_classes: usize,
) -> AttributedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let mut features = Vec::new();
    for u in 0..n {
        for i in 0..n_features {
            if rng.random_bool(0.2) {
                features.push((u, i));
            }
        }
    }
    let labels = (0..n).map(|_| Some(rng.random_range(0..n_classes))).collect();
    AttributedGraph::from_parts(n, n_features, n_classes, edges, features, labels).unwrap()
}

pub fn dense_ahat(g: &AttributedGraph) -> Vec<Vec<f64>> {
    let n = g.n_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (u, row) in a.iter_mut().enumerate() {
        row[u] = 1.0;
        for &v in g.neighbors(u) {
            row[v] = 1.0;
        }
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for u in 0..n {
        for v in 0..n {
            a[u][v] /= (d[u] * d[v]).sqrt();
        }
    }
    a
}

pub fn dense_square(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * a[k][j];
            }
        }
    }
    out
}

pub fn random_model<R: Rng>(rng: &mut R, n_features: usize, n_classes: usize) -> crate::surrogate::SurrogateModel {
    let w = (0..n_features * n_classes).map(|_| rng.random_range(-1.0..1.0)).collect();
    crate::surrogate::SurrogateModel::from_weights(n_features, n_classes, w).unwrap()
}
