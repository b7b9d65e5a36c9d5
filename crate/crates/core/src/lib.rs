//! Minimal and maximal solutions of obstacle-type quasi-variational
//! inequalities (QVIs) on a one-dimensional grid, together with the
//! directional derivatives of the extremal solution maps with respect to the
//! forcing term.
//!
//! The problem is: given a coercive, T-monotone elliptic operator `A`, a
//! forcing term `f` and an increasing obstacle map `Φ`, find `u` with
//!
//! ```text
//!     u ≤ Φ(u),   ⟨Au − f, u − v⟩ ≤ 0   for all v ≤ Φ(u).
//! ```
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`]: piecewise-linear finite elements with lumped mass, nodal
//!   functions, dual elements, norms and the assembled operator.
//! * [`vi`]: primal-dual active set solver for the obstacle problem
//!   `u = S(f, φ)` plus an enumeration oracle for small grids.
//! * [`obstacle`]: the obstacle map abstraction and three concrete maps
//!   (pointwise plateau map, inverse elliptic map, thermoforming map).
//! * [`extremal`]: monotone fixed-point iterations `u_n = S(f, u_{n-1})`
//!   converging to the minimal/maximal solution on an ordered interval.
//! * [`sensitivity`]: the derivative QVI over the critical cone, solved as a
//!   monotone limit of VIs, and difference-quotient validation.

pub mod error;
pub mod extremal;
pub mod grid;
mod linalg;
pub mod obstacle;
pub mod sensitivity;
pub mod vi;

pub use error::{QvixError, Result};
pub use grid::{BoundaryCondition, DualElement, EllipticOperator, Grid, NodalFunction};
pub use vi::{
    classify_active, oracle_vi, solve_vi, ActiveSetPartition, ActiveTolerances, NodeClass,
    SolverOptions, ViSolution,
};
pub use obstacle::{
    check_increasing, lipschitz_estimate, GScalar, InverseEllipticMap, ObstacleMap,
    ObstacleMapHandle, PlateauMap, PlateauParams, ThermoformingMap,
};
pub use extremal::{
    default_supersolution, iterate_max, iterate_min, qvi_residual, Extremal, ExtremalOptions,
    ExtremalRunReport, IntervalBracket, IterationRecord,
};
pub use sensitivity::{
    build_cone, fd_validate, solve_derivative_qvi, CriticalCone, DerivativeOptions,
    DerivativeReport, FdOptions,
};
