use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point depth {depth} is at or behind the camera plane")]
    DepthNonPositive { depth: f64 },

    #[error("camera rig has no ground->LiDAR extrinsics")]
    MissingLidarExtrinsics,

    #[error("invalid camera rig: {0}")]
    InvalidRig(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch { context: String, expected: String, actual: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("ground-truth lane has no visible points")]
    AllInvisible,

    #[error("proposal {proposal} assigns probability {prob:e} to its label")]
    ProbabilityUnderflow { proposal: usize, prob: f64 },

    #[error("zero y-spacing after sample {index}")]
    DegenerateSegment { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid lane: {0}")]
    InvalidLane(String),

    #[error("stage {stage}: {source}")]
    Stage { stage: usize, source: Box<Error> },

    #[error("{path}: malformed tensor file at byte {offset}: {reason}")]
    MalformedTensor { path: String, offset: u64, reason: String },

    #[error("{path}: {reason}")]
    MalformedJson { path: String, reason: String },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch { context: context.into(), expected: expected.to_string(), actual: actual.to_string() }
    }

    /// `MalformedJson` with the position first and without serde's trailing
    /// "at line .. column ..".
    pub fn malformed_json(path: &str, e: &serde_json::Error) -> Self {
        let msg = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let msg = msg.strip_suffix(&suffix).unwrap_or(&msg);
        Error::MalformedJson {
            path: path.to_string(),
            reason: format!("line {} column {}: {msg}", e.line(), e.column()),
        }
    }

    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Whether the error originates from malformed or inconsistent user input
    /// (as opposed to a numerical condition hit during evaluation).
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::AllInvisible | Error::ProbabilityUnderflow { .. } | Error::DepthNonPositive { .. } => false,
            _ => true,
        }
    }
}
