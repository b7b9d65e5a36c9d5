//! Directional derivatives of the extremal-solution maps.
//!
//! For the minimal map and `d ≥ 0` (maximal map and `d ≤ 0`) the
//! derivative `α` at the base solution `u` solves the QVI
//!
//! ```text
//!     α ∈ K(α) :   ⟨Aα − d, α − v⟩ ≤ 0   for all v ∈ K(α),
//!     K(w) = { v : v = Φ'(u)(w) on strict nodes,  v ≤ Φ'(u)(w) on biactive nodes },
//! ```
//!
//! computed as the limit of `α_n`, each a bound-constrained solve over
//! `K(α_{n−1})`, starting from `K(0)`.

use log::{debug, warn};
use serde::Serialize;

use crate::error::{QvixError, Result};
use crate::extremal::{
    check_direction_sign, iterate, qvi_residual, solve_extremal, Extremal, ExtremalOptions,
    IntervalBracket,
};
use crate::grid::{DualElement, EllipticOperator, NodalFunction};
use crate::obstacle::{log_log_slope, ObstacleMap};
use crate::vi::{
    classify_active, kkt_residual, solve_constrained, ActiveSetPartition, ActiveTolerances,
    NodeBound, NodeClass, SolverOptions,
};

/// Linearization data at a converged extremal solution.
pub struct CriticalCone<'a> {
    pub which: Extremal,
    pub base: NodalFunction,
    pub partition: ActiveSetPartition,
    /// `f − A·base`.
    pub lambda: DualElement,
    pub base_residual: f64,
    map: &'a dyn ObstacleMap,
}

impl std::fmt::Debug for CriticalCone<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CriticalCone")
            .field("which", &self.which)
            .field("partition", &self.partition)
            .field("base_residual", &self.base_residual)
            .field("map", &self.map.name())
            .finish()
    }
}

/// Largest QVI residual accepted for a base solution.
pub const BASE_RESIDUAL_TOL: f64 = 1e-8;

pub fn build_cone<'a>(
    op: &EllipticOperator,
    f: &DualElement,
    map: &'a dyn ObstacleMap,
    base: &NodalFunction,
    which: Extremal,
) -> Result<CriticalCone<'a>> {
    let base_residual = qvi_residual(op, f, map, base)?;
    if base_residual > BASE_RESIDUAL_TOL {
        return Err(QvixError::ResidualTooLarge {
            residual: base_residual,
            tol: BASE_RESIDUAL_TOL,
            context: "critical cone base".into(),
        });
    }
    let phi = map.evaluate(base)?;
    let tols = ActiveTolerances::scaled(f, &phi);
    let partition = classify_active(op, f, base, &phi, &tols)?;
    let lambda = f - &op.apply(base)?;
    Ok(CriticalCone {
        which,
        base: base.clone(),
        partition,
        lambda,
        base_residual,
        map,
    })
}

impl CriticalCone<'_> {
    /// `Φ'(base)(w)`.
    pub fn shift(&self, w: &NodalFunction) -> Result<NodalFunction> {
        self.map.derivative(&self.base, w)
    }

    /// Node constraints of `K(w)` for a given shift `Φ'(base)(w)`.
    pub fn bounds(&self, shift: &NodalFunction) -> Vec<NodeBound> {
        self.partition
            .classes()
            .iter()
            .zip(shift.values())
            .map(|(class, &s)| match class {
                NodeClass::Inactive => NodeBound::Free,
                NodeClass::Biactive => NodeBound::Upper(s),
                NodeClass::Strict => NodeBound::Pinned(s),
            })
            .collect()
    }

    /// `v ∈ K(w)` up to `tol`.
    pub fn contains(&self, v: &NodalFunction, w: &NodalFunction, tol: f64) -> Result<bool> {
        let shift = self.shift(w)?;
        Ok(self
            .bounds(&shift)
            .iter()
            .zip(v.values())
            .all(|(b, &v)| match *b {
                NodeBound::Free => true,
                NodeBound::Upper(s) => v <= s + tol,
                NodeBound::Pinned(s) => (v - s).abs() <= tol,
            }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeOptions {
    /// Stop once `‖α_n − α_{n−1}‖_V` drops to this value.
    pub step_tol: f64,
    /// Residual required of the returned `α`.
    pub residual_tol: f64,
    pub max_iter: usize,
    pub monotone_tol: f64,
    pub vi: SolverOptions,
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-11,
            residual_tol: 1e-9,
            max_iter: 200,
            monotone_tol: 1e-10,
            vi: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DerivativeSolve {
    pub which: Extremal,
    pub alpha: NodalFunction,
    pub iterates: Vec<NodalFunction>,
    pub monotone: bool,
    pub residual: f64,
    pub n_iters: usize,
}

/// KKT residual of `α` for the constraint set `K(α)` with source `d`.
pub fn derivative_residual(
    op: &EllipticOperator,
    cone: &CriticalCone<'_>,
    d: &DualElement,
    alpha: &NodalFunction,
) -> Result<f64> {
    let bounds = cone.bounds(&cone.shift(alpha)?);
    let raw = d - &op.apply(alpha)?;
    let lambda = DualElement::new(
        *op.grid(),
        raw.values()
            .iter()
            .zip(&bounds)
            .map(|(&l, b)| if matches!(b, NodeBound::Free) { 0.0 } else { l })
            .collect(),
    )?;
    kkt_residual(op, d, &bounds, alpha, &lambda)
}

fn ordered(prev: &NodalFunction, next: &NodalFunction, which: Extremal, tol: f64) -> bool {
    let sign = which.direction();
    prev.values()
        .iter()
        .zip(next.values())
        .all(|(a, b)| sign * (b - a) >= -tol)
}

pub fn solve_derivative_qvi(
    op: &EllipticOperator,
    cone: &CriticalCone<'_>,
    d: &DualElement,
    opts: &DerivativeOptions,
) -> Result<DerivativeSolve> {
    check_direction_sign(d, cone.which)?;
    let grid = *op.grid();
    let mut alpha = solve_constrained(op, d, &cone.bounds(&NodalFunction::zeros(grid)), &opts.vi)?.u;
    let mut iterates = vec![alpha.clone()];
    let mut monotone = true;
    for n in 1..=opts.max_iter {
        let shift = cone.shift(&alpha)?;
        let next = solve_constrained(op, d, &cone.bounds(&shift), &opts.vi)?.u;
        monotone &= ordered(&alpha, &next, cone.which, opts.monotone_tol);
        let step = (&next - &alpha).v_norm();
        debug!("derivative iteration {n}: step {step:.3e}");
        iterates.push(next.clone());
        alpha = next;
        if step <= opts.step_tol {
            let residual = derivative_residual(op, cone, d, &alpha)?;
            if residual > opts.residual_tol {
                return Err(QvixError::ResidualTooLarge {
                    residual,
                    tol: opts.residual_tol,
                    context: "derivative QVI".into(),
                });
            }
            if !monotone {
                warn!("derivative iterates are not monotone");
            }
            return Ok(DerivativeSolve {
                which: cone.which,
                alpha,
                iterates,
                monotone,
                residual,
                n_iters: n,
            });
        }
    }
    let last_step = match iterates.as_slice() {
        [.., a, b] => (b - a).v_norm(),
        _ => f64::NAN,
    };
    Err(QvixError::FixedPointNoConvergence {
        iterations: opts.max_iter,
        last_step,
        contraction: None,
    })
}

/// True iff consecutive derivative iterates are ordered nodally (tol
/// `1e-10`): increasing for the minimal map, decreasing for the maximal one.
pub fn alpha_monotonicity_check(solve: &DerivativeSolve) -> bool {
    solve
        .iterates
        .windows(2)
        .all(|w| ordered(&w[0], &w[1], solve.which, 1e-10))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdEntry {
    pub s: f64,
    pub quotient_error_vnorm: f64,
}

#[derive(Clone, Debug)]
pub struct FdOptions {
    /// Accepted final error; `1e-3 (1 + ‖α‖_V)` when `None`.
    pub fd_tol: Option<f64>,
    pub extremal: ExtremalOptions,
    /// Extremal options for the perturbed solves.
    pub perturbed: ExtremalOptions,
    pub derivative: DerivativeOptions,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            fd_tol: None,
            extremal: ExtremalOptions::default(),
            perturbed: ExtremalOptions {
                tol_fp: 1e-12,
                keep_iterates: false,
                ..ExtremalOptions::default()
            },
            derivative: DerivativeOptions::default(),
        }
    }
}

pub const DEFAULT_S_LIST: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
/// Smallest step accepted in a difference quotient.
pub const MIN_FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct DerivativeReport {
    pub which: Extremal,
    pub base: NodalFunction,
    pub partition: ActiveSetPartition,
    pub alpha: NodalFunction,
    pub alpha_iterates: Vec<NodalFunction>,
    pub monotone: bool,
    pub derivative_residual: f64,
    pub fd_table: Vec<FdEntry>,
    /// Per-entry round-off floor `1e-10 (1 + ‖base‖_V) / s`.
    pub fd_floor: Vec<f64>,
    /// Least-squares slope of the errors above the floor; `None` when the
    /// quotients are exact to round-off.
    pub observed_order: Option<f64>,
    /// Every error is no larger than the previous one or below its floor.
    pub decreasing: bool,
    pub fd_tol: f64,
    pub within_tol: bool,
    /// Biactive nodes at the base: the map may be nonsmooth there.
    pub biactive_warning: bool,
}

impl DerivativeReport {
    pub fn final_error(&self) -> f64 {
        self.fd_table.last().map_or(0.0, |e| e.quotient_error_vnorm)
    }

    /// Monotone iterates, final error within tolerance and, unless the base
    /// has biactive nodes, a decreasing error table.
    pub fn passed(&self) -> bool {
        self.monotone && self.within_tol && (self.decreasing || self.biactive_warning)
    }
}

fn check_s_list(s_list: &[f64]) -> Result<()> {
    if s_list.is_empty() {
        return Err(QvixError::InvalidParameter("empty s list".into()));
    }
    if s_list.iter().any(|s| !(s.is_finite() && *s >= MIN_FD_STEP)) {
        return Err(QvixError::InvalidParameter(format!(
            "steps must be finite and at least {MIN_FD_STEP}"
        )));
    }
    if s_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QvixError::InvalidParameter(
            "steps must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Computes the derivative in direction `d` at the extremal solution for
/// `f` and compares it with difference quotients
/// `(u(f + sd) − u(f)) / s`, where `u(f + sd)` is reached by iterating from
/// the base solution.
#[allow(clippy::too_many_arguments)]
pub fn fd_validate(
    op: &EllipticOperator,
    f: &DualElement,
    d: &DualElement,
    map: &dyn ObstacleMap,
    bracket: &IntervalBracket,
    which: Extremal,
    s_list: &[f64],
    opts: &FdOptions,
) -> Result<DerivativeReport> {
    check_direction_sign(d, which)?;
    check_s_list(s_list)?;
    let f_far = f + &(d * s_list[0]);
    bracket
        .validate(op, &f_far, map, &opts.extremal.vi)
        .map_err(|e| QvixError::InvalidBracket(format!("for f + {}·d: {e}", s_list[0])))?;

    let coarse = solve_extremal(op, f, map, bracket, which, &opts.extremal)?.solution;
    // refine to the accuracy of the perturbed solves
    let base = iterate(op, f, map, &coarse, which, &opts.perturbed)?.solution;
    let cone = build_cone(op, f, map, &base, which)?;
    let deriv = solve_derivative_qvi(op, &cone, d, &opts.derivative)?;
    let alpha = deriv.alpha.clone();

    let base_norm = base.v_norm();
    let mut fd_table = Vec::with_capacity(s_list.len());
    let mut fd_floor = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let fs = f + &(d * s);
        let us = iterate(op, &fs, map, &base, which, &opts.perturbed)?.solution;
        let quotient = &(&us - &base) * (1.0 / s);
        let err = (&quotient - &alpha).v_norm();
        debug!("fd s = {s:e}: error {err:.3e}");
        fd_table.push(FdEntry {
            s,
            quotient_error_vnorm: err,
        });
        fd_floor.push(1e-10 * (1.0 + base_norm) / s);
    }
    let decreasing = fd_table.windows(2).zip(&fd_floor[1..]).all(|(w, &floor)| {
        w[1].quotient_error_vnorm <= w[0].quotient_error_vnorm || w[1].quotient_error_vnorm <= floor
    });
    let observed_order = log_log_slope(
        fd_table
            .iter()
            .zip(&fd_floor)
            .filter(|(e, &floor)| e.quotient_error_vnorm > floor)
            .map(|(e, _)| (e.s, e.quotient_error_vnorm)),
    );
    let fd_tol = opts.fd_tol.unwrap_or(1e-3 * (1.0 + alpha.v_norm()));
    let final_error = fd_table.last().map_or(0.0, |e| e.quotient_error_vnorm);
    let biactive_warning = cone.partition.count(NodeClass::Biactive) > 0;
    if !decreasing {
        warn!(
            "difference-quotient errors do not decrease{}",
            if biactive_warning {
                " (biactive nodes present)"
            } else {
                ""
            }
        );
    }
    Ok(DerivativeReport {
        which,
        base,
        partition: cone.partition.clone(),
        monotone: alpha_monotonicity_check(&deriv),
        derivative_residual: deriv.residual,
        alpha,
        alpha_iterates: deriv.iterates,
        fd_table,
        fd_floor,
        observed_order,
        decreasing,
        fd_tol,
        within_tol: final_error <= fd_tol,
        biactive_warning,
    })
}
