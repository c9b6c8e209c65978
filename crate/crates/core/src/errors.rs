//! Crate-wide error type.
//!
//! One enum covers every named error in the public operation contracts; the
//! CLI maps variants onto its exit-code classes (invariant violation /
//! hypothesis failure / precision collapse).

use thiserror::Error;

#[derive(Error, Debug)]
pub enum ShcError {
    // ---- padic ----
    #[error("element is indistinguishable from zero at its precision")]
    ZeroPrecision,
    #[error("element is not a unit (ord ≠ 0)")]
    NotAUnit,
    #[error("sub_degree {0} does not divide extension degree {1}")]
    DegreeError(usize, usize),
    #[error("element is not a square at the residue field")]
    NotASquare,

    // ---- numfield ----
    #[error("division by zero")]
    DivisionByZero,
    #[error("input is not prime: {0}")]
    NotPrime(String),
    #[error("level is not squarefree: {0}")]
    LevelNotSquarefree(String),
    #[error("p divides M: {0}")]
    PrimeDividesM(String),
    #[error("norm-one unit search exhausted at height bound {0}")]
    SearchExhausted(u64),

    // ---- tree ----
    #[error("matrix is singular at the available precision")]
    SingularMatrix,
    #[error("point lies on P¹(F_p) at the available precision")]
    PointOnBoundary,
    #[error("matrix is not a member of {0}")]
    NotInGroup(String),

    // ---- eigendata ----
    #[error("curve has bad reduction at {0}")]
    BadReduction(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),

    // ---- modsym ----
    #[error("base field is not Euclidean")]
    FieldNotEuclidean,
    #[error("Hecke eigenspace has dimension {0}, expected 1")]
    EigenspaceNotOneDimensional(usize),
    #[error("Hecke eigenspace is empty")]
    EigenspaceEmpty,

    // ---- overconv ----
    #[error("matrix is not in Σ₀(p)")]
    NotInSigma0,
    #[error("lifting iteration failed to stabilise within budget ({0} iterations)")]
    NoConvergence(usize),

    // ---- integrals ----
    #[error("certified precision {got} fell below the configured floor {floor}")]
    PrecisionCollapse { got: i64, floor: i64 },
    #[error("all trial delta-class denominators vanish; trial set: {0}")]
    AllDenominatorsVanish(String),
    #[error("fixedness condition failed: {0}")]
    NotFixed(String),

    // ---- cycles ----
    #[error("embedding is not optimal: {0}")]
    NotOptimal(String),
    #[error("triple discriminant does not match D·(unit square): {0}")]
    DiscriminantMismatch(String),
    #[error("boundary solver failed (contradicts H₁(Γ, V) = 0): {0}")]
    SolverFailure(String),
    #[error("base-point evaluations disagree beyond tolerance: {0}")]
    BasePointInconsistency(String),
    #[error("χ-twist orbit is incomplete: missing class {0}")]
    IncompleteOrbit(String),

    // ---- cli ----
    #[error("Stark–Heegner hypothesis fails: {0}")]
    HypothesisFailure(String),
    #[error("cache error: {0}")]
    CacheError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ShcError>;

impl ShcError {
    /// CLI exit-code class: 2 invariant violation, 3 hypothesis failure,
    /// 4 precision collapse.
    pub fn exit_code(&self) -> i32 {
        match self {
            ShcError::HypothesisFailure(_) => 3,
            ShcError::PrecisionCollapse { .. } => 4,
            _ => 2,
        }
    }
}
