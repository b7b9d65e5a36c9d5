//! The obstacle problem `u = S(f, φ)`: find `u ≤ φ` with
//! `⟨Au − f, u − v⟩ ≤ 0` for all `v ≤ φ`.
//!
//! With lumped mass the VI is the nodal complementarity system
//!
//! ```text
//!     u ≤ φ,   λ = f − Au ≥ 0,   λ_i (φ_i − u_i) = 0,
//! ```
//!
//! solved here with the primal-dual active set (PDAS) method. For an
//! M-matrix the method terminates after finitely many active-set changes
//! with the exact solution of the discrete system.
//!
//! The solver works on a slightly more general constraint description,
//! [`NodeBound`], which the derivative QVI needs: each node is free, bounded
//! above, or pinned to a value.

use log::trace;
use nalgebra::{DMatrix, DVector};

use crate::error::{QvixError, Result};
use crate::grid::{DualElement, EllipticOperator, NodalFunction};
use crate::linalg::Tridiag;

/// Largest grid the enumeration oracle accepts.
pub const ORACLE_MAX_NODES: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// KKT residual accepted on return.
    pub tol: f64,
    /// Maximum number of active-set updates.
    pub max_iter: usize,
    /// Scaling of the primal term in the active-set prediction
    /// `λ_i + c (u_i − φ_i) > 0`.
    pub c_pdas: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            c_pdas: 1.0,
        }
    }
}

/// Per-node constraint for [`solve_constrained`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeBound {
    Free,
    Upper(f64),
    Pinned(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeClass {
    /// `u < φ`.
    Inactive,
    /// `u = φ` with vanishing multiplier.
    Biactive,
    /// `u = φ` with positive multiplier.
    Strict,
}

impl NodeClass {
    /// One-letter code used in reports.
    pub fn code(self) -> char {
        match self {
            NodeClass::Inactive => 'I',
            NodeClass::Biactive => 'B',
            NodeClass::Strict => 'S',
        }
    }
}

/// Classification of every node into inactive, biactive and strictly
/// active. Strict and biactive nodes together form the coincidence set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSetPartition {
    classes: Vec<NodeClass>,
}

impl ActiveSetPartition {
    pub fn from_classes(classes: Vec<NodeClass>) -> Self {
        Self { classes }
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    fn indices(&self, class: NodeClass) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn inactive(&self) -> Vec<usize> {
        self.indices(NodeClass::Inactive)
    }

    pub fn biactive(&self) -> Vec<usize> {
        self.indices(NodeClass::Biactive)
    }

    pub fn strict(&self) -> Vec<usize> {
        self.indices(NodeClass::Strict)
    }

    /// Strict ∪ biactive.
    pub fn coincidence(&self) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != NodeClass::Inactive)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, class: NodeClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }
}

/// Classification tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveTolerances {
    pub tol_a: f64,
    pub tol_lambda: f64,
}

impl ActiveTolerances {
    /// `tol_a = 1e-8 (1 + ‖φ‖_∞)`, `tol_λ = 1e-8 (1 + ‖f‖_∞)`.
    pub fn scaled(f: &DualElement, phi: &NodalFunction) -> Self {
        Self {
            tol_a: 1e-8 * (1.0 + phi.max_abs()),
            tol_lambda: 1e-8 * (1.0 + f.max_abs()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ViSolution {
    pub u: NodalFunction,
    /// `λ = f − Au`, zero on the inactive set.
    pub lambda: DualElement,
    pub partition: ActiveSetPartition,
    pub iterations: usize,
    pub residual: f64,
}

/// Solution of the general bound-constrained problem.
#[derive(Clone, Debug)]
pub struct ConstrainedSolution {
    pub u: NodalFunction,
    /// `f − Au` on constrained-active nodes, zero elsewhere.
    pub lambda: DualElement,
    /// Nodes held at their bound (pinned nodes always).
    pub active: Vec<bool>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn solve_vi(
    op: &EllipticOperator,
    f: &DualElement,
    phi: &NodalFunction,
    opts: &SolverOptions,
) -> Result<ViSolution> {
    let bounds = upper_bounds(phi);
    let sol = solve_constrained(op, f, &bounds, opts)?;
    finish_vi(op, f, phi, sol)
}

fn upper_bounds(phi: &NodalFunction) -> Vec<NodeBound> {
    phi.values().iter().map(|&p| NodeBound::Upper(p)).collect()
}

fn finish_vi(
    op: &EllipticOperator,
    f: &DualElement,
    phi: &NodalFunction,
    sol: ConstrainedSolution,
) -> Result<ViSolution> {
    let tols = ActiveTolerances::scaled(f, phi);
    let partition = classify_with_lambda(&sol.u, &sol.lambda, phi, &tols);
    debug_assert_eq!(partition.len(), op.grid().n_nodes());
    Ok(ViSolution {
        u: sol.u,
        lambda: sol.lambda,
        partition,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

fn check_bounds(op: &EllipticOperator, f: &DualElement, bounds: &[NodeBound]) -> Result<()> {
    let n = op.grid().n_nodes();
    if f.grid() != op.grid() {
        return Err(QvixError::GridMismatch {
            left: n,
            right: f.grid().n_nodes(),
        });
    }
    if bounds.len() != n {
        return Err(QvixError::GridMismatch {
            left: n,
            right: bounds.len(),
        });
    }
    for (i, b) in bounds.iter().enumerate() {
        if let NodeBound::Upper(v) | NodeBound::Pinned(v) = b {
            if !v.is_finite() {
                return Err(QvixError::NonFinite { node: i });
            }
        }
    }
    Ok(())
}

/// Primal-dual active set solve of the bound-constrained problem.
pub fn solve_constrained(
    op: &EllipticOperator,
    f: &DualElement,
    bounds: &[NodeBound],
    opts: &SolverOptions,
) -> Result<ConstrainedSolution> {
    check_bounds(op, f, bounds)?;
    let grid = *op.grid();
    let n = grid.n_nodes();
    let mass = grid.mass_weights();
    let s = op.matrix();
    let load: Vec<f64> = f.values().iter().zip(&mass).map(|(v, m)| v * m).collect();

    let predict = |u: &[f64], lambda: &[f64]| -> Vec<bool> {
        bounds
            .iter()
            .enumerate()
            .map(|(i, b)| match *b {
                NodeBound::Free => false,
                NodeBound::Pinned(_) => true,
                NodeBound::Upper(p) => lambda[i] + opts.c_pdas * (u[i] - p) > 0.0,
            })
            .collect()
    };

    let u0 = op.solve(f)?;
    let mut active = predict(u0.values(), &vec![0.0; n]);
    let mut u = u0.into_values();
    let mut lambda = vec![0.0; n];

    for iter in 1..=opts.max_iter {
        let mut sys = s.clone();
        let mut rhs = load.clone();
        for i in 0..n {
            if active[i] {
                sys.lower[i] = 0.0;
                sys.upper[i] = 0.0;
                sys.diag[i] = 1.0;
                rhs[i] = match bounds[i] {
                    NodeBound::Upper(p) | NodeBound::Pinned(p) => p,
                    NodeBound::Free => unreachable!("free nodes are never active"),
                };
            }
        }
        u = sys.solve(&rhs).ok_or_else(|| {
            QvixError::SingularOperator("zero pivot in reduced active-set system".into())
        })?;
        let su = s.matvec(&u);
        for i in 0..n {
            lambda[i] = if active[i] {
                f.values()[i] - su[i] / mass[i]
            } else {
                0.0
            };
        }
        let next = predict(&u, &lambda);
        trace!(
            "pdas iter {iter}: {} active",
            next.iter().filter(|a| **a).count()
        );
        let residual = kkt_residual_raw(s, &mass, f.values(), bounds, &u, &lambda);
        // Rounding at biactive nodes can flip the prediction back and forth
        // forever; an iterate that already satisfies the KKT conditions is
        // accepted as is.
        if next == active || residual <= opts.tol {
            let u = NodalFunction::new(grid, u)?;
            let lambda = DualElement::new(grid, lambda)?;
            if residual > opts.tol {
                return Err(QvixError::ResidualTooLarge {
                    residual,
                    tol: opts.tol,
                    context: "active set settled but KKT residual is large".into(),
                });
            }
            return Ok(ConstrainedSolution {
                u,
                lambda,
                active,
                iterations: iter,
                residual,
            });
        }
        active = next;
    }
    let residual = kkt_residual_raw(s, &mass, f.values(), bounds, &u, &lambda);
    Err(QvixError::ViNoConvergence {
        iterations: opts.max_iter,
        residual,
        last: Box::new(u),
    })
}

/// Scaled KKT residual of a candidate `(u, λ)` for the bound-constrained
/// problem: the largest of the stationarity mismatch `λ − (f − Au)`
/// (relative to the size of the terms), the NCP function
/// `|min(λ_i, φ_i − u_i)|` on bounded nodes, and `|u_i − φ_i|` on pinned nodes.
pub fn kkt_residual(
    op: &EllipticOperator,
    f: &DualElement,
    bounds: &[NodeBound],
    u: &NodalFunction,
    lambda: &DualElement,
) -> Result<f64> {
    check_bounds(op, f, bounds)?;
    Ok(kkt_residual_raw(
        op.matrix(),
        &op.grid().mass_weights(),
        f.values(),
        bounds,
        u.values(),
        lambda.values(),
    ))
}

fn kkt_residual_raw(
    s: &Tridiag,
    mass: &[f64],
    f: &[f64],
    bounds: &[NodeBound],
    u: &[f64],
    lambda: &[f64],
) -> f64 {
    let su = s.matvec(u);
    let f_inf = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let u_inf = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut res = 0.0_f64;
    for i in 0..u.len() {
        let scale = mass[i] * (1.0 + f_inf + lambda[i].abs()) + s.row_abs_sum(i) * u_inf;
        let stat = (mass[i] * (lambda[i] - f[i]) + su[i]).abs() / scale;
        res = res.max(stat);
        match bounds[i] {
            NodeBound::Free => res = res.max(lambda[i].abs()),
            NodeBound::Upper(p) => res = res.max(lambda[i].min(p - u[i]).abs()),
            NodeBound::Pinned(p) => res = res.max((u[i] - p).abs()),
        }
    }
    res
}

/// Enumeration oracle: tries every active set with dense LU solves and
/// returns the candidate satisfying `u ≤ φ` and `λ ≥ 0`.
pub fn oracle_vi(
    op: &EllipticOperator,
    f: &DualElement,
    phi: &NodalFunction,
) -> Result<ViSolution> {
    let sol = oracle_constrained(op, f, &upper_bounds(phi))?;
    finish_vi(op, f, phi, sol)
}

pub fn oracle_constrained(
    op: &EllipticOperator,
    f: &DualElement,
    bounds: &[NodeBound],
) -> Result<ConstrainedSolution> {
    check_bounds(op, f, bounds)?;
    let grid = *op.grid();
    let n = grid.n_nodes();
    if n > ORACLE_MAX_NODES {
        return Err(QvixError::Oracle(format!(
            "enumeration limited to {ORACLE_MAX_NODES} nodes, got {n}"
        )));
    }
    let mass = grid.mass_weights();
    let dense: DMatrix<f64> = op.matrix().to_dense();
    let bounded: Vec<usize> = (0..n)
        .filter(|&i| matches!(bounds[i], NodeBound::Upper(_)))
        .collect();
    let bound_value = |i: usize| match bounds[i] {
        NodeBound::Upper(p) | NodeBound::Pinned(p) => p,
        NodeBound::Free => f64::NAN,
    };
    let scale = 1.0
        + f.max_abs()
        + bounds
            .iter()
            .map(|b| match b {
                NodeBound::Upper(p) | NodeBound::Pinned(p) => p.abs(),
                NodeBound::Free => 0.0,
            })
            .fold(0.0, f64::max);
    let tol = 1e-9 * scale;

    let mut found: Option<(Vec<f64>, Vec<f64>, Vec<bool>)> = None;
    for mask in 0u32..(1u32 << bounded.len()) {
        let mut active: Vec<bool> = bounds
            .iter()
            .map(|b| matches!(b, NodeBound::Pinned(_)))
            .collect();
        for (bit, &i) in bounded.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                active[i] = true;
            }
        }
        let mut sys = dense.clone();
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            if active[i] {
                sys.row_mut(i).fill(0.0);
                sys[(i, i)] = 1.0;
                rhs[i] = bound_value(i);
            } else {
                rhs[i] = mass[i] * f.values()[i];
            }
        }
        let Some(u) = sys.lu().solve(&rhs) else {
            continue;
        };
        let su = &dense * &u;
        let lambda: Vec<f64> = (0..n)
            .map(|i| {
                if active[i] {
                    f.values()[i] - su[i] / mass[i]
                } else {
                    0.0
                }
            })
            .collect();
        let feasible = bounded.iter().all(|&i| {
            if active[i] {
                lambda[i] >= -tol
            } else {
                u[i] <= bound_value(i) + tol
            }
        });
        if !feasible {
            continue;
        }
        let u: Vec<f64> = u.iter().copied().collect();
        match &found {
            None => found = Some((u, lambda, active)),
            Some((u_first, _, _)) => {
                let gap = u_first
                    .iter()
                    .zip(&u)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                if gap > 1e-8 * scale {
                    return Err(QvixError::Oracle(format!(
                        "two complementary candidates differ by {gap:.3e}"
                    )));
                }
            }
        }
    }
    let (u, lambda, active) = found.ok_or_else(|| {
        QvixError::Oracle("no feasible complementary active set found".into())
    })?;
    let residual = kkt_residual_raw(op.matrix(), &mass, f.values(), bounds, &u, &lambda);
    Ok(ConstrainedSolution {
        u: NodalFunction::new(grid, u)?,
        lambda: DualElement::new(grid, lambda)?,
        active,
        iterations: 1 << bounded.len(),
        residual,
    })
}

/// Partitions the nodes of a feasible `u` using `λ = f − Au`.
pub fn classify_active(
    op: &EllipticOperator,
    f: &DualElement,
    u: &NodalFunction,
    phi: &NodalFunction,
    tols: &ActiveTolerances,
) -> Result<ActiveSetPartition> {
    let lambda = f - &op.apply(u)?;
    if phi.grid() != u.grid() {
        return Err(QvixError::GridMismatch {
            left: u.len(),
            right: phi.len(),
        });
    }
    Ok(classify_with_lambda(u, &lambda, phi, tols))
}

fn classify_with_lambda(
    u: &NodalFunction,
    lambda: &DualElement,
    phi: &NodalFunction,
    tols: &ActiveTolerances,
) -> ActiveSetPartition {
    let classes = u
        .values()
        .iter()
        .zip(phi.values())
        .zip(lambda.values())
        .map(|((&u, &p), &l)| {
            if u < p - tols.tol_a {
                NodeClass::Inactive
            } else if l > tols.tol_lambda {
                NodeClass::Strict
            } else {
                NodeClass::Biactive
            }
        })
        .collect();
    ActiveSetPartition { classes }
}

/// Checks `S(f1, φ1) ≤ S(f2, φ2)` for ordered data `f1 ≤ f2`, `φ1 ≤ φ2`.
pub fn check_comparison(
    op: &EllipticOperator,
    f1: &DualElement,
    f2: &DualElement,
    phi1: &NodalFunction,
    phi2: &NodalFunction,
    opts: &SolverOptions,
) -> Result<bool> {
    if f1.values().iter().zip(f2.values()).any(|(a, b)| a > b) {
        return Err(QvixError::Precondition("f1 ≤ f2 does not hold".into()));
    }
    if !phi1.leq(phi2, 0.0)? {
        return Err(QvixError::Precondition("φ1 ≤ φ2 does not hold".into()));
    }
    let u1 = solve_vi(op, f1, phi1, opts)?.u;
    let u2 = solve_vi(op, f2, phi2, opts)?.u;
    u1.leq(&u2, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryCondition, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn neumann(n: usize) -> EllipticOperator {
        EllipticOperator::assemble(Grid::unit(n).unwrap(), 1.0, BoundaryCondition::Neumann)
            .unwrap()
    }

    fn random_fn(op: &EllipticOperator, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> NodalFunction {
        let g = *op.grid();
        NodalFunction::new(g, (0..g.n_nodes()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn unconstrained_constant_forcing() {
        let op = neumann(21);
        let g = *op.grid();
        let sol = solve_vi(
            &op,
            &DualElement::constant(g, 0.7),
            &NodalFunction::constant(g, 1e6),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(sol.u.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert_eq!(sol.partition.count(NodeClass::Inactive), 21);
    }

    #[test]
    fn clamped_constant_instance() {
        // Constants reduce to the scalar problem u = min(f, φ).
        let op = neumann(17);
        let g = *op.grid();
        let sol = solve_vi(
            &op,
            &DualElement::constant(g, 2.0),
            &NodalFunction::constant(g, 1.0),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(sol.u.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(sol.lambda.values().iter().all(|l| (l - 1.0).abs() < 1e-9));
        assert_eq!(sol.partition.count(NodeClass::Strict), 17);
    }

    #[test]
    fn two_node_instance_by_hand() {
        // n = 2 on [0,1]: h = 1, m = (1/2, 1/2), S = [[1.5, -1], [-1, 1.5]].
        // f = (3, 0), φ = (1, 10): node 0 clamps, node 1 solves
        // 1.5 u1 − 1 = 0 ⇒ u1 = 2/3; λ0 = 3 − (1.5 − 2/3)/0.5 = 4/3.
        let op = neumann(2);
        let g = *op.grid();
        let f = DualElement::new(g, vec![3.0, 0.0]).unwrap();
        let phi = NodalFunction::new(g, vec![1.0, 10.0]).unwrap();
        let pdas = solve_vi(&op, &f, &phi, &SolverOptions::default()).unwrap();
        let oracle = oracle_vi(&op, &f, &phi).unwrap();
        for sol in [&pdas, &oracle] {
            assert!((sol.u.values()[0] - 1.0).abs() < 1e-12);
            assert!((sol.u.values()[1] - 2.0 / 3.0).abs() < 1e-12);
            assert!((sol.lambda.values()[0] - 4.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_selects_extreme_active_sets() {
        let op = neumann(6);
        let g = *op.grid();
        let free = oracle_vi(
            &op,
            &DualElement::constant(g, 0.5),
            &NodalFunction::constant(g, 10.0),
        )
        .unwrap();
        assert_eq!(free.partition.count(NodeClass::Inactive), 6);
        let clamped = oracle_vi(
            &op,
            &DualElement::constant(g, 100.0),
            &NodalFunction::constant(g, 1.0),
        )
        .unwrap();
        assert_eq!(clamped.partition.count(NodeClass::Strict), 6);
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let op = neumann(ORACLE_MAX_NODES + 1);
        let g = *op.grid();
        assert!(matches!(
            oracle_vi(&op, &DualElement::zeros(g), &NodalFunction::zeros(g)),
            Err(QvixError::Oracle(_))
        ));
    }

    #[test]
    fn pdas_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..60 {
            let n = 4 + trial % 7;
            let bc = if trial % 3 == 0 {
                BoundaryCondition::Dirichlet
            } else {
                BoundaryCondition::Neumann
            };
            let op = EllipticOperator::assemble(Grid::unit(n).unwrap(), rng.gen_range(0.1..2.0), bc)
                .unwrap();
            let f = random_fn(&op, &mut rng, -3.0, 5.0).to_dual();
            let phi = random_fn(&op, &mut rng, -0.5, 1.5);
            let a = solve_vi(&op, &f, &phi, &SolverOptions::default()).unwrap();
            let b = oracle_vi(&op, &f, &phi).unwrap();
            assert!((&a.u - &b.u).max_abs() <= 1e-9, "trial {trial}");
            assert!(a.residual <= 1e-10);
        }
    }

    #[test]
    fn mixed_bounds_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let op = neumann(8);
            let f = random_fn(&op, &mut rng, -2.0, 4.0).to_dual();
            let bounds: Vec<NodeBound> = (0..8)
                .map(|_| match rng.gen_range(0..3) {
                    0 => NodeBound::Free,
                    1 => NodeBound::Upper(rng.gen_range(-0.5..1.0)),
                    _ => NodeBound::Pinned(rng.gen_range(-0.5..1.0)),
                })
                .collect();
            let a = solve_constrained(&op, &f, &bounds, &SolverOptions::default()).unwrap();
            let b = oracle_constrained(&op, &f, &bounds).unwrap();
            assert!((&a.u - &b.u).max_abs() <= 1e-9);
        }
    }

    #[test]
    fn classify_examples() {
        let op = neumann(9);
        let g = *op.grid();
        let tols = ActiveTolerances {
            tol_a: 1e-8,
            tol_lambda: 1e-8,
        };
        let phi = NodalFunction::constant(g, 1.0);
        let p = classify_active(&op, &DualElement::constant(g, 3.0), &phi, &phi, &tols).unwrap();
        assert_eq!(p.count(NodeClass::Strict), 9);
        let below = NodalFunction::constant(g, 0.5);
        let p = classify_active(&op, &DualElement::constant(g, 0.5), &below, &phi, &tols).unwrap();
        assert_eq!(p.count(NodeClass::Inactive), 9);
    }

    #[test]
    fn manufactured_plateau_is_biactive() {
        // u = φ on the plateau [0.25, 0.75] and below it elsewhere; f = Au
        // makes λ vanish identically, so plateau nodes are biactive.
        let op = neumann(21);
        let g = *op.grid();
        let u = NodalFunction::from_fn(g, |x| {
            if (0.25..=0.75).contains(&x) {
                1.0
            } else {
                1.0 - 4.0 * (x - 0.5).abs().max(0.25).powi(2) + 0.25
            }
        })
        .unwrap();
        let phi = NodalFunction::from_fn(g, |x| if (0.25..=0.75).contains(&x) { 1.0 } else { 2.0 })
            .unwrap();
        let f = op.apply(&u).unwrap();
        let tols = ActiveTolerances::scaled(&f, &phi);
        let p = classify_active(&op, &f, &u, &phi, &tols).unwrap();
        for (i, c) in p.classes().iter().enumerate() {
            let x = g.node(i);
            if (0.25..=0.75).contains(&x) {
                assert_eq!(*c, NodeClass::Biactive, "node {i}");
            } else {
                assert_eq!(*c, NodeClass::Inactive, "node {i}");
            }
        }
        // and the solver reproduces u from (f, φ)
        let sol = solve_vi(&op, &f, &phi, &SolverOptions::default()).unwrap();
        assert!((&sol.u - &u).max_abs() < 1e-10);
    }

    #[test]
    fn comparison_identical_and_bumped() {
        let op = neumann(30);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = SolverOptions::default();
        for _ in 0..20 {
            let f = random_fn(&op, &mut rng, -1.0, 3.0).to_dual();
            let phi = random_fn(&op, &mut rng, 0.0, 1.0);
            assert!(check_comparison(&op, &f, &f, &phi, &phi, &opts).unwrap());
            let bump = random_fn(&op, &mut rng, 0.0, 0.5);
            let f2 = &f + &bump.to_dual();
            assert!(check_comparison(&op, &f, &f2, &phi, &phi, &opts).unwrap());
            let phi2 = &phi + &bump;
            assert!(check_comparison(&op, &f, &f, &phi, &phi2, &opts).unwrap());
        }
        let f = DualElement::constant(*op.grid(), 1.0);
        let phi = NodalFunction::constant(*op.grid(), 1.0);
        assert!(matches!(
            check_comparison(&op, &(&f * 2.0), &f, &phi, &phi, &opts),
            Err(QvixError::Precondition(_))
        ));
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let op = neumann(40);
        let g = *op.grid();
        let f = DualElement::new(g, (0..40).map(|i| (i as f64 * 0.7).sin() * 50.0).collect())
            .unwrap();
        let phi = NodalFunction::from_fn(g, |x| (7.0 * x).cos()).unwrap();
        let opts = SolverOptions {
            max_iter: 1,
            ..SolverOptions::default()
        };
        match solve_vi(&op, &f, &phi, &opts) {
            Err(QvixError::ViNoConvergence { last, .. }) => assert_eq!(last.len(), 40),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
