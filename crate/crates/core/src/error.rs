use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing mandatory key `{0}`")]
    MissingKey(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("guide-vane opening beyond kinematic limit (kappa*sin(alpha_1R) = {0})")]
    KinematicLimit(f64),

    #[error("singular opening: gate closed (kappa = 0) against flow q_t = {0}")]
    SingularOpening(f64),

    #[error("head collapse: turbine head {0} is not positive")]
    HeadCollapse(f64),

    #[error("division singularity: {0}")]
    Singular(String),

    #[error("efficiency not defined: {0}")]
    EfficiencyUndefined(String),

    #[error("insufficient delay history: need t = {needed}, oldest sample at t = {oldest}; pre-fill the delay line with the trim value")]
    InsufficientHistory { needed: f64, oldest: f64 },

    #[error("delay line required for travelling-wave penstock evaluation")]
    DelayLineRequired,

    #[error("algebraic loop did not converge: {0}")]
    AlgebraicLoop(String),

    #[error("trim did not converge after {iterations} iterations (residual {residual:e})")]
    TrimNoConvergence { iterations: usize, residual: f64 },

    #[error("infeasible operating point: {0}")]
    Infeasible(String),

    #[error("governor limit active at linearization point: {0}")]
    LimitActive(String),

    #[error("not linearizable: {0}")]
    NotLinearizable(String),

    #[error("state dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("integration failed at t = {t}: {source}")]
    Integration {
        t: f64,
        state: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("unknown model kind `{0}`")]
    UnknownModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Parse { .. }
                | Error::MissingKey(_)
                | Error::Validation(_)
                | Error::Scenario(_)
                | Error::UnknownModel(_)
                | Error::Io(_)
        )
    }
}
