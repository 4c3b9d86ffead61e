use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("at least two tasks are required, got {0}")]
    TooFewTasks(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weights violate the {constraint} constraint: {detail}")]
    ConstraintViolated {
        constraint: &'static str,
        detail: String,
    },

    #[error("linear system is singular (pivot {pivot:e} below threshold)")]
    SingularSystem { pivot: f64 },

    #[error("expected {expected} gradients")]
    WrongGradientLevel { expected: &'static str },

    #[error("trajectory has no snapshots")]
    EmptyTrajectory,

    #[error("rankings are over different item sets")]
    ItemSetMismatch,

    #[error("cannot plant disjoint supports for {tasks} tasks in {features} features")]
    InfeasibleDisjointSupports { tasks: usize, features: usize },

    #[error("training diverged at iteration {iteration}")]
    DivergenceDetected { iteration: usize },
}
