use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node id {node} out of range (graph has {n_nodes} nodes)")]
    NodeOutOfRange { node: usize, n_nodes: usize },

    #[error("feature id {feature} out of range (graph has {n_features} features)")]
    FeatureOutOfRange { feature: usize, n_features: usize },

    #[error("class id {class} out of range (graph has {n_classes} classes)")]
    ClassOutOfRange { class: usize, n_classes: usize },

    #[error("self-loop ({0}, {0}) is not a valid edge")]
    SelfLoop(usize),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("graph has {n_nodes} nodes, at least {required} required")]
    TooFewNodes { n_nodes: usize, required: usize },

    #[error("node {0} has no label")]
    MissingLabel(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("degree sample is empty after filtering with d_min = {d_min}")]
    EmptyDegreeSample { d_min: usize },

    #[error("power-law scaling parameter must be positive, got {0}")]
    InvalidAlpha(f64),

    #[error("at least two classes are required, got {0}")]
    TooFewClasses(usize),

    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("cached state is inconsistent with the graph: {0}")]
    InconsistentCache(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
