//! Error type shared across the crate.
//!
//! Numerical code fails in structured ways — a chart is left, a sign
//! certificate cannot be issued, an iteration stalls — and the callers
//! (grid sweeps, the CLI) need to tell these apart to report them usefully.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate left the declared chart of a field.
    #[error("coordinate {coord} = {value} outside declared domain [{lo}, {hi}]")]
    Domain {
        coord: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A named parameter was referenced but not supplied.
    #[error("parameter `{0}` required but not supplied")]
    MissingParam(String),

    /// Requested derivative order exceeds what the evaluator supports.
    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    UnsupportedOrder { requested: usize, max: usize },

    /// |u| was differentiated at u = 0, where no one-sided sign certificate
    /// exists.
    #[error("|u| differentiated at u = 0; no sign certificate available")]
    AbsAtKink,

    /// ln, sqrt or a fractional power was evaluated off its real branch.
    #[error("{func} of non-positive value {value:.6e}")]
    OffBranch { func: &'static str, value: f64 },

    /// Division by zero (or inversion of a zero jet) while evaluating a field.
    #[error("division by zero while evaluating `{0}`")]
    DivisionByZero(String),

    /// Adaptive quadrature hit its depth limit before reaching tolerance.
    #[error("quadrature stalled: achieved {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { requested: f64, achieved: f64 },

    /// A metric was numerically degenerate where it must be invertible.
    #[error("metric numerically degenerate (pivot {pivot:.3e})")]
    DegenerateMetric { pivot: f64 },

    /// Generating data violates an admissibility requirement.
    #[error("inadmissible generating data: {0}")]
    Inadmissible(String),

    /// The vertical coefficients sit on the degenerate branch (vanishing
    /// v-derivatives) that the generator does not solve.
    #[error("degenerate vertical data: {0}")]
    DegenerateVertical(&'static str),

    /// An integrand has a pole on the integration path (f − f₀ → 0).
    #[error("pole on integration path: |f - f0| = {0:.3e}")]
    PoleOnPath(f64),

    /// A chart contains a sign change or singular locus of a coefficient.
    #[error("singular chart: {0}")]
    SingularChart(String),

    /// A Finsler Hessian is singular where it must be invertible.
    #[error("degenerate Finsler data: {0}")]
    DegenerateFinsler(String),

    /// A nonlinear system of transform relations has no solution branch.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// A denominator that the construction requires to be nonzero vanished.
    #[error("vanishing denominator: {0}")]
    ZeroDenominator(&'static str),

    /// An iterative scheme did not converge.
    #[error("{what} did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    /// Scenario/expression text could not be parsed.
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },

    /// A scenario or API call is structurally invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
