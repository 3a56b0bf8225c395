use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be between 1 and {max}, got {got}")]
    BadDimension { got: usize, max: usize },
    #[error("count out of range: {what} = {got}")]
    BadCount { what: &'static str, got: usize },
    #[error("generator could not satisfy its invariants: {0}")]
    InfeasibleSpec(&'static str),
    #[error("alpha = {alpha} must exceed {min}")]
    BadAlpha { alpha: f64, min: f64 },
    #[error("invalid argument: {0}")]
    BadArgs(&'static str),
    #[error("invalid recursion parameters: {0}")]
    BadParams(&'static str),
    #[error("non-finite iterate at epoch {epoch}, iteration {iteration}")]
    NonFinite { epoch: usize, iteration: usize },
    #[error("exhaustive enumeration needs n <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("step size {eta} exceeds the admissible threshold {threshold} for {lemma}")]
    EtaAboveThreshold {
        lemma: &'static str,
        eta: f64,
        threshold: f64,
    },
    #[error("{lemma} violated at eta = {eta}: margin {margin}")]
    BoundViolated {
        lemma: &'static str,
        eta: f64,
        margin: f64,
    },
    #[error("assumption unmet: {0}")]
    AssumptionUnmet(&'static str),
    #[error("fit needs at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("fit needs positive means, got {value} at x = {at}")]
    NonPositiveMean { at: f64, value: f64 },
}
