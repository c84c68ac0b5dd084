use crate::forms::OrientedPlane;
use crate::prelude::*;

/// Errors raised when an operation's contract cannot be met.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty point set")]
    EmptySet,
    #[error("degenerate fit: {points} points in ball, need at least {needed}")]
    DegenerateFit {
        points: usize,
        needed: usize,
        fallback: Box<OrientedPlane>,
    },
    #[error("resolution too coarse: scale {scale} is below the floor {floor} (h = {resolution})")]
    ResolutionTooCoarse {
        scale: f64,
        floor: f64,
        resolution: f64,
    },
    #[error("ball of radius {radius} escapes the domain")]
    BallEscapesDomain { radius: f64 },
    #[error("grid under-resolves the ball: {cells} cells across, need {needed}")]
    UnderResolved { cells: usize, needed: usize },
    #[error("gluing aborted: cover ball {ball} at Grassmann distance {distance} from the surface")]
    GluePrecondition {
        ball: usize,
        center: Vec<f64>,
        distance: f64,
    },
    #[error("perturbation magnitude {measured} exceeds recorded epsilon {epsilon}")]
    PerturbationTooLarge { measured: f64, epsilon: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize, context: &'static str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            found,
            context,
        })
    }
}
