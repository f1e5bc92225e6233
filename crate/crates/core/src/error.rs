use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Variants fall in two groups: configuration problems, which the CLI maps to
/// a usage exit code, and physics/numerics failures, which it maps to exit 1.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coupling strength must be non-negative, got {0}")]
    NegativeCoupling(f64),
    #[error("dipole orientation weights must be non-negative and sum to 1, got ({0}, {1}, {2})")]
    WeightsNotNormalized(f64, f64, f64),
    #[error("wall distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("cutoff wavenumber must be positive, got {0}")]
    NonPositiveCutoff(f64),
    #[error("numerical tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quadrature failed: error estimate {achieved:.3e} exceeds requested {requested:.3e} after {subdivisions} subdivisions")]
    QuadratureFailure {
        achieved: f64,
        requested: f64,
        subdivisions: usize,
    },
    #[error("point ({0}, {1}, {2}) lies outside the cavity")]
    PointOutsideBox(f64, f64, f64),
    #[error("polarization basis is undefined for a zero wavevector")]
    ZeroWavevector,
    #[error("mode ({l}, {m}, {n}) is not part of the mode set")]
    ModeNotInSet { l: u32, m: u32, n: u32 },
    #[error("mode set is empty")]
    EmptyModeSet,

    #[error("the sharp cutoff density has no analytic continuation to the second sheet")]
    SharpCutoffNoContinuation,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("root search did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("phase shift jumps by {jump:.3} between k = {k_left} and k = {k_right}; refine the mesh")]
    BranchTrackingFailure { k_left: f64, k_right: f64, jump: f64 },
    #[error("the factor eta is not defined on the cut (-inf, 0], got z = {0} + {1}i")]
    PointOnCut(f64, f64),

    #[error("configuration violates the stability condition k0^2 - sum 4 k0 |f|^2/k > 0 (margin {margin:.6e})")]
    UnstableConfig { margin: f64 },
    #[error("self-consistent branch collapses: 1 + 4I = {0:.6e} < 0")]
    BranchCollapse(f64),
    #[error("Abel extrapolation unstable at d = {distance}: successive estimates {previous:.6e}, {current:.6e}")]
    AbelExtrapolationUnstable {
        distance: f64,
        previous: f64,
        current: f64,
    },
    #[error("curve needs at least {required} points, got {got}")]
    GridTooCoarse { required: usize, got: usize },
    #[error("quadratic form is not positive definite (discrete stability margin {0:.6e})")]
    NotPositiveDefinite(f64),
}

impl Error {
    /// Configuration errors are the caller's fault; everything else is a
    /// failure of the physics or numerics for a well-formed request.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::NegativeCoupling(_)
                | Error::WeightsNotNormalized(..)
                | Error::NonPositiveDistance(_)
                | Error::NonPositiveCutoff(_)
                | Error::NonPositiveTolerance(_)
                | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
