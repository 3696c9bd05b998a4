//! On-disk graph bundles.
//!
//! A bundle is a directory holding four files:
//!
//! * `edges.tsv`: one `u<TAB>v` line per undirected edge, 0-based, `u < v`.
//! * `features.tsv`: one `u<TAB>i` line per nonzero feature entry. An optional
//!   third column carries the value, which must be `0` or `1`.
//! * `labels.tsv`: one `u<TAB>c` line per labeled node, `c` in `0..n_classes`.
//! * `meta.json`: `{"n_nodes": .., "n_features": .., "n_classes": ..}`.
//!
//! Blank lines and lines starting with `#` are ignored.

mod split;
mod synthetic;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

pub use split::{make_split, DataSplit};
pub use synthetic::PlantedPartition;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

/// What the loader cleaned up while reading a bundle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
    pub zero_valued_features: usize,
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<AttributedGraph> {
    let (g, report) = load_bundle_with_report(dir)?;
    if report.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop(s)", report.self_loops_dropped);
    }
    if report.duplicate_edges > 0 {
        log::warn!("merged {} duplicate edge(s)", report.duplicate_edges);
    }
    Ok(g)
}

pub fn load_bundle_with_report(dir: impl AsRef<Path>) -> Result<(AttributedGraph, LoadReport)> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let mut report = LoadReport::default();

    let edges_path = dir.join(EDGES_FILE);
    let mut edges = Vec::new();
    for (line, cols) in read_table(&edges_path)? {
        let [u, v] = parse_ids::<2>(&edges_path, line, &cols)?;
        check_id(&edges_path, line, u, meta.n_nodes, "node")?;
        check_id(&edges_path, line, v, meta.n_nodes, "node")?;
        if u == v {
            report.self_loops_dropped += 1;
            continue;
        }
        edges.push((u.min(v), u.max(v)));
    }
    let raw = edges.len();
    edges.sort_unstable();
    edges.dedup();
    report.duplicate_edges = raw - edges.len();

    let features_path = dir.join(FEATURES_FILE);
    let mut features = Vec::new();
    for (line, cols) in read_table(&features_path)? {
        let [u, i] = parse_ids::<2>(&features_path, line, &cols)?;
        check_id(&features_path, line, u, meta.n_nodes, "node")?;
        check_id(&features_path, line, i, meta.n_features, "feature")?;
        match cols.get(2).map(String::as_str) {
            None | Some("1") => features.push((u, i)),
            Some("0") => report.zero_valued_features += 1,
            Some(other) => {
                return Err(Error::Parse {
                    path: features_path.clone(),
                    line,
                    message: format!("feature value must be 0 or 1, got {other:?}"),
                })
            }
        }
    }

    let labels_path = dir.join(LABELS_FILE);
    let mut labels = vec![None; meta.n_nodes];
    for (line, cols) in read_table(&labels_path)? {
        let [u, c] = parse_ids::<2>(&labels_path, line, &cols)?;
        check_id(&labels_path, line, u, meta.n_nodes, "node")?;
        check_id(&labels_path, line, c, meta.n_classes, "class")?;
        labels[u] = Some(c);
    }

    let g = AttributedGraph::from_parts(
        meta.n_nodes,
        meta.n_features,
        meta.n_classes,
        edges,
        features,
        labels,
    )?;
    Ok((g, report))
}

pub fn save_bundle(g: &AttributedGraph, dir: impl AsRef<Path>) -> Result<()> {
    save_bundle_with_names(g, dir, None)
}

pub fn save_bundle_with_names(
    g: &AttributedGraph,
    dir: impl AsRef<Path>,
    class_names: Option<Vec<String>>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    write_lines(dir.join(EDGES_FILE), g.edges().map(|(u, v)| format!("{u}\t{v}")))?;
    write_lines(
        dir.join(FEATURES_FILE),
        g.feature_entries().map(|(u, i)| format!("{u}\t{i}")),
    )?;
    write_lines(
        dir.join(LABELS_FILE),
        g.labels()
            .iter()
            .enumerate()
            .filter_map(|(u, c)| c.map(|c| format!("{u}\t{c}"))),
    )?;
    let meta = BundleMeta {
        n_nodes: g.n_nodes(),
        n_features: g.n_features(),
        n_classes: g.n_classes(),
        class_names,
    };
    let meta_path = dir.join(META_FILE);
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    fs::write(&meta_path, json).map_err(|e| Error::io(meta_path, e))
}

pub fn read_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Largest connected component with ids remapped densely.
///
/// Returns the subgraph and the new-to-old id mapping. Ties between equally
/// large components go to the one containing the smallest original id.
pub fn extract_lcc(g: &AttributedGraph) -> Result<(AttributedGraph, Vec<usize>)> {
    if g.n_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    let components = g.connected_components();
    let mut best = &components[0];
    for c in &components[1..] {
        if c.len() > best.len() {
            best = c;
        }
    }
    let mapping = best.clone();
    Ok((g.induced_subgraph(&mapping)?, mapping))
}

fn read_table(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| (i + 1, l.split_whitespace().map(str::to_owned).collect()))
        .collect())
}

fn parse_ids<const K: usize>(path: &Path, line: usize, cols: &[String]) -> Result<[usize; K]> {
    if cols.len() < K {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected {K} columns, found {}", cols.len()),
        });
    }
    let mut out = [0usize; K];
    for (slot, col) in out.iter_mut().zip(cols) {
        *slot = col.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("not a non-negative integer: {col:?}"),
        })?;
    }
    Ok(out)
}

fn check_id(path: &Path, line: usize, id: usize, bound: usize, what: &str) -> Result<()> {
    if id < bound {
        Ok(())
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{what} id {id} out of range (< {bound} required)"),
        })
    }
}

fn write_lines(path: PathBuf, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_bundle(dir: &Path, edges: &str, features: &str, labels: &str, meta: &str) {
        fs::write(dir.join(EDGES_FILE), edges).unwrap();
        fs::write(dir.join(FEATURES_FILE), features).unwrap();
        fs::write(dir.join(LABELS_FILE), labels).unwrap();
        fs::write(dir.join(META_FILE), meta).unwrap();
    }

    const META4: &str = r#"{"n_nodes": 4, "n_features": 3, "n_classes": 2}"#;

    #[test]
    fn self_loop_is_dropped_with_warning_count() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(tmp.path(), "0\t1\n3\t3\n1\t0\n", "0\t2\n", "0\t1\n", META4);
        let (g, report) = load_bundle_with_report(tmp.path()).unwrap();
        assert_eq!(report.self_loops_dropped, 1);
        assert_eq!(report.duplicate_edges, 1);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.label(0), Some(1));
        assert_eq!(g.label(1), None);
    }

    #[test]
    fn non_binary_feature_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(tmp.path(), "0\t1\n", "0\t2\t2\n", "", META4);
        let err = load_bundle(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_and_missing_files_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(tmp.path(), "0\t4\n", "", "", META4);
        assert!(load_bundle(tmp.path()).is_err());
        write_bundle(tmp.path(), "0\t1\n", "", "2\t2\n", META4);
        assert!(load_bundle(tmp.path()).is_err());
        fs::remove_file(tmp.path().join(FEATURES_FILE)).unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn save_then_load_round_trips() {
        let g = AttributedGraph::from_parts(
            5,
            4,
            3,
            [(0, 1), (1, 2), (3, 4), (0, 4)],
            [(0, 0), (0, 3), (2, 1), (4, 2)],
            vec![Some(0), Some(2), None, Some(1), Some(1)],
        )
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        save_bundle(&g, tmp.path()).unwrap();
        assert_eq!(load_bundle(tmp.path()).unwrap(), g);
        let edges = fs::read_to_string(tmp.path().join(EDGES_FILE)).unwrap();
        assert_eq!(edges, "0\t1\n0\t4\n1\t2\n3\t4\n");
    }

    #[test]
    fn lcc_two_triangles_plus_isolated_picks_first() {
        let g = AttributedGraph::from_parts(
            7,
            0,
            1,
            [(1, 2), (2, 3), (1, 3), (4, 5), (5, 6), (4, 6)],
            [],
            vec![None; 7],
        )
        .unwrap();
        let (lcc, mapping) = extract_lcc(&g).unwrap();
        assert_eq!(mapping, vec![1, 2, 3]);
        assert_eq!(lcc.n_nodes(), 3);
        assert_eq!(lcc.n_edges(), 3);
    }

    #[test]
    fn lcc_of_connected_graph_is_identity() {
        let g = AttributedGraph::from_parts(4, 1, 1, [(0, 1), (1, 2), (2, 3)], [(2, 0)], vec![None; 4])
            .unwrap();
        let (lcc, mapping) = extract_lcc(&g).unwrap();
        assert_eq!(mapping, vec![0, 1, 2, 3]);
        assert_eq!(lcc, g);
        assert!(matches!(
            extract_lcc(&AttributedGraph::new(0, 0, 1)),
            Err(Error::EmptyGraph)
        ));
    }
}
