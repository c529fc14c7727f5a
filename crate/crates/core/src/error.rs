use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("basis is not closed under the commutator (residual {residual:.3e})")]
    NotALieBasis { residual: f64 },
    #[error("operands are built on different Lie algebras")]
    IncompatibleAlgebras,
    #[error("M_1 has no inner derivations")]
    NoInnerDerivations,
    #[error("derivation argument is not traceless (|tr| = {trace:.3e})")]
    InvalidDerivation { trace: f64 },
    #[error("gauge element is not unitary (residual {residual:.3e})")]
    InvalidGaugeElement { residual: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("fields live on different lattices or algebras")]
    IncompatibleFields,
    #[error("dimension error: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("field is not representable in the kernel algebra (trace residual {residual:.3e})")]
    NotRepresentable { residual: f64 },
    #[error("KO-dimension {ko_dim} has no chirality sign")]
    SignTableGap { ko_dim: u8 },
    #[error("fluctuation is not Hermitian (residual {residual:.3e})")]
    InvalidFluctuation { residual: f64 },
    #[error("cutoff must be positive, got {0}")]
    InvalidCutoff(f64),
    #[error("degenerate metric at site {site}")]
    DegenerateMetric { site: usize },
    #[error("degenerate tetrad at site {site}")]
    DegenerateTetrad { site: usize },
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("optimization failure after {iterations} iterations: {message}")]
    OptimizationFailure {
        iterations: usize,
        message: String,
        trace: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
