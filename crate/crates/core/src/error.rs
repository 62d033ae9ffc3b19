use thiserror::Error;

/// Errors raised by the solver stack, the oracle and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds tolerance {tolerance:.3e}")]
    NonHermitianInput { asymmetry: f64, tolerance: f64 },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("input is empty")]
    EmptyInput,

    #[error("non-finite entry at index {index}")]
    NonFiniteEntry { index: usize },

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sampled column {column} of the row sketch has zero norm")]
    ZeroColumnNorm { column: usize },

    #[error("no singular value of the sketch survives the floor {floor:.3e}")]
    RankZero { floor: f64 },

    #[error("columns of V do not span B (projection residual {residual:.3e})")]
    SpanViolation { residual: f64 },

    #[error("coefficient norm {norm:.4e} exceeds bound {bound:.4e}")]
    NormBoundViolated { norm: f64, bound: f64 },

    #[error("rejection sampler exceeded its cap of {cap} rounds")]
    RejectionCapExceeded { cap: u64 },

    #[error("solution vector is zero")]
    ZeroSolution,

    #[error("sketch size r={r}, c={c} exceeds the budget (r <= {max_r}, c <= {max_c}); use force to override")]
    BudgetExceeded {
        r: usize,
        c: usize,
        max_r: usize,
        max_c: usize,
    },

    #[error("input exceeds the oracle size gate: {0}")]
    SizeGate(String),

    #[error("invalid instance spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
