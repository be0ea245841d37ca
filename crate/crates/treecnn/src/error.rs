use crate::tree::{ClassLabel, NodeId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in layer {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        got: String,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("label {label} out of range for {classes} output classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value produced during {0}")]
    NonFinite(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unknown layer block {0:?} in weight-count subset")]
    UnknownLayerBlock(String),

    #[error("class {0} is already present in the tree")]
    DuplicateClass(ClassLabel),

    #[error("class {0} is not known to the model")]
    UnknownClass(ClassLabel),

    #[error("node {node}: {reason}")]
    NodeCapacity { node: NodeId, reason: String },

    #[error("malformed tree at node {node}: {reason}")]
    MalformedTree { node: NodeId, reason: String },

    #[error("no such node {0}")]
    NoSuchNode(NodeId),

    #[error("all candidate branches are full; caller must place the class as a new leaf")]
    AllBranchesFull,

    #[error("checkpoint is corrupt or mismatched: {0}")]
    Checkpoint(String),

    #[error("malformed data file {path}: {reason}")]
    DataFormat { path: String, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("run directory problem: {0}")]
    RunDir(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::DataFormat {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}
