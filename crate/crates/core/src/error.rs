//! Error types, grouped by subsystem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HoloError {
    #[error("map vanishes at a sampled domain point")]
    ZeroOnDomain,
    #[error("expression tree too large to serialize")]
    TreeTooLarge,
    #[error("bad expression: {0}")]
    BadExpression(String),
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("cycle disk closures intersect (cycles {0} and {1})")]
    OverlappingCycles(usize, usize),
    #[error("degenerate cycle: {0}")]
    DegenerateCycle(String),
    #[error("offset curves collide")]
    OffsetCollision,
    #[error("offset would shrink a disk to nothing")]
    OffsetVanishes,
    #[error("point lies outside the domain")]
    PointOutsideDomain,
    #[error("interior-kind multicycle needs exactly one outermost cycle")]
    NoOuterCycle,
}

#[derive(Debug, Error)]
pub enum WeierstrassError {
    #[error("path passes within clearance of a declared pole")]
    PoleOnPath,
    #[error("cycle passes within clearance of a declared pole")]
    PoleOnCycle,
    #[error("pole at evaluation point")]
    PoleAtPoint,
    #[error("quadrature did not reach tolerance at max refinement")]
    QuadratureNoConverge,
    #[error("frame rows are not orthonormal / right-handed")]
    NotOrthonormal,
    #[error(transparent)]
    Holo(#[from] HoloError),
}

#[derive(Debug, Error)]
pub enum RungeError {
    #[error("pole sites must cover every complement component (got none)")]
    EmptyPoleSet,
    #[error("sample sets K1 and K2 must be disjoint and nonempty")]
    BadSampleSets,
    #[error("target accuracy unreachable at degree cap {0}")]
    ApproximationFailed(usize),
    #[error("period Jacobian is numerically singular (cond {0:.3e})")]
    SingularJacobian(f64),
    #[error("continuation stalled at lambda0 = {0}")]
    NoConvergence(f64),
    #[error(transparent)]
    Weierstrass(#[from] WeierstrassError),
    #[error(transparent)]
    Holo(#[from] HoloError),
}

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error("offset {0} exceeds the inner reach")]
    BeyondReach(f64),
    #[error("point lies inside the reach core E_{{-a}}")]
    InsideReachCore,
    #[error("body is not strictly convex on the sample grid")]
    NotStrictlyConvex,
    #[error("bad body description: {0}")]
    BadBody(String),
}

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("labyrinth scale 2/N does not fit the cycle geometry")]
    NTooLargeForGeometry,
    #[error("grid too coarse to resolve the labyrinth tubes")]
    GridTooCoarse,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("retries exhausted: {0}")]
    RetriesExhausted(String),
    #[error("iteration budget exceeded")]
    BudgetExceeded,
    #[error("deformation steps require circle or radial-graph cycles: {0}")]
    UnsupportedGeometry(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Weierstrass(#[from] WeierstrassError),
    #[error(transparent)]
    Runge(#[from] RungeError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("a declared pole lies inside the mesh domain")]
    PoleInDomain,
    #[error("mesh is disconnected between the requested vertex sets")]
    DisconnectedMesh,
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("schedule infeasible: {0}")]
    ScheduleInfeasible(String),
    #[error("iteration budget exceeded")]
    BudgetExceeded,
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Weierstrass(#[from] WeierstrassError),
}
