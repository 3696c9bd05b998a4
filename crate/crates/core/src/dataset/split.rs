use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

/// Fraction of nodes whose labels are visible to training (train + validation).
pub const LABELED_FRACTION: f64 = 0.2;

/// Train / validation / unlabeled partition of the node set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl DataSplit {
    pub fn n_nodes(&self) -> usize {
        self.train.len() + self.validation.len() + self.unlabeled.len()
    }

    pub fn is_labeled(&self, u: usize) -> bool {
        self.train.binary_search(&u).is_ok() || self.validation.binary_search(&u).is_ok()
    }

    /// Restricts the split to `nodes` (new-to-old mapping) and renumbers.
    pub fn restrict(&self, nodes: &[usize]) -> DataSplit {
        let pick = |ids: &[usize]| -> Vec<usize> {
            nodes
                .iter()
                .enumerate()
                .filter(|(_, old)| ids.binary_search(old).is_ok())
                .map(|(new, _)| new)
                .collect()
        };
        DataSplit {
            seed: self.seed,
            train: pick(&self.train),
            validation: pick(&self.validation),
            unlabeled: pick(&self.unlabeled),
        }
    }
}

/// 10% train / 10% validation / 80% unlabeled, uniformly at random.
pub fn make_split(g: &AttributedGraph, seed: u64) -> Result<DataSplit> {
    let n = g.n_nodes();
    if n < 10 {
        return Err(Error::TooFewNodes {
            n_nodes: n,
            required: 10,
        });
    }
    if let Some(u) = (0..n).find(|&u| g.label(u).is_none()) {
        return Err(Error::MissingLabel(u));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_labeled = ((n as f64) * LABELED_FRACTION).round() as usize;
    let n_train = n_labeled.div_ceil(2);
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..n_labeled].to_vec();
    let mut unlabeled = order[n_labeled..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    unlabeled.sort_unstable();
    Ok(DataSplit {
        seed,
        train,
        validation,
        unlabeled,
    })
}
