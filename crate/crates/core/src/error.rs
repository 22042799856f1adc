use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// `α = 2` has no kernel; the velocity is `∂_r u` itself.
    #[error("unsupported in the local limit alpha = 2: {0}")]
    LocalLimit(String),

    #[error("kernel is singular at r = 1 for alpha = {alpha}")]
    SingularPoint { alpha: f64 },

    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    #[error("certification failed: Re H({lambda}) = {re_h} is not positive")]
    Certification { lambda: f64, re_h: f64 },

    #[error("field support reaches r = {support} beyond the admissible radius {limit}")]
    Truncation { support: f64, limit: f64 },

    #[error("time step {dt} exceeds the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("right-hand functional vanishes; ratio undefined")]
    UndefinedRatio,

    #[error("need at least {needed} trace samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}
