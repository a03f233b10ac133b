use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("workflow `{workflow}` references undeclared service `{service}`")]
    UnknownServiceReference { workflow: String, service: String },

    #[error("cycle detected: [{}]", nodes.join(","))]
    Cycle { nodes: Vec<String> },

    #[error("duplicate workflow id `{0}`")]
    DuplicateWorkflow(String),

    #[error("workflow `{workflow}` declares service `{service}` more than once")]
    DuplicateService { workflow: String, service: String },

    #[error("duplicate edge {source_id} -> {sink} in `{workflow}`")]
    DuplicateEdge {
        workflow: String,
        source_id: String,
        sink: String,
    },

    #[error("service `{id}` has inconsistent names `{first}` and `{second}`")]
    InconsistentServiceName {
        id: String,
        first: String,
        second: String,
    },

    #[error("service `{0}` has an empty name")]
    EmptyServiceName(String),

    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("at least 2 workflows are required to split, got {0}")]
    TooFewWorkflows(usize),

    #[error("unknown service `{0}`")]
    UnknownService(String),

    #[error("unknown workflow `{0}`")]
    UnknownWorkflow(String),

    #[error("anchor `{0}` is not part of the workflow")]
    UnknownAnchor(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("negative sample constraint violated: {0}")]
    NegativeConstraint(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at epoch {epoch}, instance {instance}")]
    NonFinite { epoch: usize, instance: usize },

    #[error("ground truth set is empty")]
    EmptyGroundTruth,

    #[error("no test anchors left after holding out unseen services")]
    EmptyTestSet,

    #[error("unsupported model format version {0}")]
    UnsupportedFormat(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
