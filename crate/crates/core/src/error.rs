use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("orientation lies in the excluded neighborhood of the south pole")]
    SingularOrientation,
    #[error("invalid contact face id {0}")]
    InvalidFace(usize),
    #[error("shape has no occupied cells")]
    EmptyShape,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("cannot graft object {v} onto {u}: target is in the severed subtree")]
    InvalidGraft { v: usize, u: String },
    #[error("scene graph is invalid: {0}")]
    InvalidGraph(String),
    #[error("icp needs at least three non-collinear correspondences")]
    DegenerateCorrespondences,
    #[error("no pose hypotheses for any object")]
    NoHypotheses,
    #[error("conflicting free/occupied evidence at voxel {0:?}")]
    InconsistentObservation([usize; 3]),
    #[error("particle weights do not match posteriors: {0}")]
    WeightMismatch(String),
    #[error("could not place objects for scene after {0} attempts")]
    PlacementFailure(usize),
    #[error("model point set is empty")]
    EmptyModel,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for bad input, 3 when inference itself fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoHypotheses
            | Error::InconsistentObservation(_)
            | Error::PlacementFailure(_)
            | Error::DegenerateCorrespondences
            | Error::SingularOrientation => 3,
            _ => 2,
        }
    }
}
