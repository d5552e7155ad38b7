//! Crate-wide error type.
//!
//! Inadmissible elastic states get their own variant so that line searches
//! can backtrack on them instead of aborting the solve.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    ObjParse { line: usize, message: String },

    #[error("line {line}: face with {count} vertices, only triangles are supported")]
    UnsupportedFace { line: usize, count: usize },

    #[error("line {line}: vertex index {index} out of range 1..={count}")]
    VertexIndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("shells are not in correspondence (different topologies)")]
    TopologyMismatch,

    #[error("mesh has a boundary edge (closed manifolds only)")]
    BoundaryMesh,

    #[error("vertex {vertex} has unsupported valence {valence} (supported: 3..=12)")]
    UnsupportedValence { vertex: usize, valence: usize },

    #[error("face {face} has more than one extraordinary corner")]
    MultipleExtraordinaryCorners { face: usize },

    #[error("evaluation exactly at an extraordinary corner")]
    ExtraordinaryCorner,

    #[error("inadmissible state: {0}")]
    InadmissibleState(String),

    #[error("singular linear system in {0}")]
    SingularSystem(String),

    #[error("no convergence in {context}")]
    NonConvergence { context: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors a line search may recover from by shortening the step.
    pub fn is_inadmissible(&self) -> bool {
        matches!(self, Error::InadmissibleState(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
