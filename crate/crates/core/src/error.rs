use thiserror::Error;

pub type Result<T, E = ReachError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{rows}x{cols} matrix is not of full row rank ({detail})")]
    RankDeficient {
        rows: usize,
        cols: usize,
        detail: String,
    },

    #[error(
        "Taylor order search exceeded cap {cap} at t = {t} (target {eps}, condition number ‖G‖‖G†‖ = {condition:e})"
    )]
    SearchCapExceeded {
        cap: u32,
        t: f64,
        eps: f64,
        condition: f64,
    },

    #[error(
        "∫₀^{t} exp(sA) ds is not invertible (an eigenvalue of A sits on 2πz𝐢/t); choose a larger N so that the step is below {tmax}"
    )]
    NotInInvertibilityDomain { t: f64, tmax: String },

    #[error("perturbation bound violated: ‖(P̃−P)c‖ = {offset:e} exceeds certified lower bound {bound:e}")]
    BoundViolated { offset: f64, bound: f64 },

    #[error("deflation factor {alpha} outside the certified range [0, {max}]")]
    AlphaOutOfRange { alpha: f64, max: f64 },

    #[error("volume computation too large: {subsets} generator subsets in dimension {dim}")]
    TooLarge { dim: usize, subsets: u128 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
