use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("radius does not decrease strictly from node {parent} to node {child}")]
    NonMonotoneRadius { parent: usize, child: usize },
    #[error("internal node {0} has a single child")]
    DegreeOne(usize),
    #[error("mass mismatch: {0}")]
    MassMismatch(String),
    #[error("tree has no root")]
    NoRoot,
    #[error("tree has several roots: {0:?}")]
    MultipleRoots(Vec<usize>),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("node {0} is not reachable from the root")]
    Disconnected(usize),
    #[error("internal node {0} has no radius")]
    MissingRadius(usize),
    #[error("unknown leaf {0}")]
    UnknownLeaf(usize),
    #[error("sigma out of range at radius {0}")]
    SigmaOutOfRange(f64),
    #[error("sigma is not strictly increasing on the radius set")]
    SigmaNotIncreasing,
    #[error("kernel diverges on the diagonal")]
    DiagonalQuery,
    #[error("envelope family does not match the model: {0}")]
    FamilyMismatch(String),
    #[error("unknown growth law: {0}")]
    UnknownGrowthLaw(String),
    #[error("subordinator is not strictly increasing on the eigenvalue set")]
    NonMonotonePsi,
    #[error("prime mismatch: {0} vs {1}")]
    PrimeMismatch(u64, u64),
    #[error("precision underflow: {0}")]
    PrecisionUnderflow(String),
    #[error("green function requested in the recurrent regime")]
    TransiencyViolation,
    #[error("sequence is not non-increasing at index {0}")]
    NotNonIncreasing(i64),
    #[error("transition probabilities at vertex {0} do not sum to one")]
    SubStochasticInterior(usize),
    #[error("green function is not strictly decreasing below vertex {0}")]
    DegenerateGreen(usize),
    #[error("ultra-metric element is not strictly decreasing below vertex {0}")]
    NonDecreasingPhi(usize),
    #[error("measure vanishes on the ball of vertex {0}")]
    MassGap(usize),
    #[error("walk never absorbs")]
    NonAbsorbing,
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
