//! Minimal and maximal solutions of the QVI `u = S(f, Φ(u))` by monotone
//! fixed-point iteration.
//!
//! Starting from a subsolution `u̲ ≤ S(f, Φ(u̲))` the sequence
//! `u_n = S(f, Φ(u_{n−1}))` increases to the minimal solution `m(f)` in the
//! interval `[u̲, ū]`; started from a supersolution it decreases to the
//! maximal solution `M(f)`.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{QvixError, Result};
use crate::grid::{DualElement, EllipticOperator, NodalFunction};
use crate::obstacle::ObstacleMap;
use crate::vi::{solve_vi, SolverOptions, ViSolution};

/// Which extremal solution is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremal {
    Min,
    Max,
}

impl Extremal {
    pub fn label(self) -> &'static str {
        match self {
            Extremal::Min => "min",
            Extremal::Max => "max",
        }
    }

    /// +1 for increasing iterates, −1 for decreasing ones.
    pub fn direction(self) -> f64 {
        match self {
            Extremal::Min => 1.0,
            Extremal::Max => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtremalOptions {
    /// Stop once `‖u_n − u_{n−1}‖_V` drops to this value.
    pub tol_fp: f64,
    pub max_outer: usize,
    /// Largest nodal step against the expected direction that is tolerated.
    pub monotone_tol: f64,
    /// QVI residual required of the returned solution.
    pub residual_tol: f64,
    /// Keep every iterate in the report.
    pub keep_iterates: bool,
    pub vi: SolverOptions,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        Self {
            tol_fp: 1e-10,
            max_outer: 500,
            monotone_tol: 1e-10,
            residual_tol: 1e-8,
            keep_iterates: true,
            vi: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub step_vnorm: f64,
    pub qvi_residual: f64,
    /// Smallest nodal change in the expected direction; nonnegative for a
    /// monotone step.
    pub min_node_delta: f64,
}

#[derive(Clone, Debug)]
pub struct ExtremalRunReport {
    pub which: Extremal,
    /// `u_0, u_1, …`; only the start and the solution unless
    /// `keep_iterates` is set.
    pub iterates: Vec<NodalFunction>,
    pub records: Vec<IterationRecord>,
    pub solution: NodalFunction,
    /// `Φ(solution)`.
    pub obstacle: NodalFunction,
    /// Last VI solve, whose obstacle is `Φ(u_{n−1})`.
    pub last_vi: ViSolution,
    pub monotone: bool,
    pub n_iters: usize,
    pub final_step_vnorm: f64,
    pub qvi_residual: f64,
    pub tail_contraction: Option<f64>,
}

/// `S(f, Φ(u))`.
pub fn obstacle_solve(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    u: &NodalFunction,
    vi: &SolverOptions,
) -> Result<ViSolution> {
    let phi = map.evaluate(u)?;
    solve_vi(op, f, &phi, vi)
}

/// `max(‖(u − Φ(u))⁺‖_∞, ‖λ⁻‖_∞, max_i |min(λ_i, Φ(u)_i − u_i)|)` with
/// `λ = f − Au`.
pub fn qvi_residual(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    u: &NodalFunction,
) -> Result<f64> {
    let phi = map.evaluate(u)?;
    residual_with_obstacle(op, f, u, &phi)
}

fn residual_with_obstacle(
    op: &EllipticOperator,
    f: &DualElement,
    u: &NodalFunction,
    phi: &NodalFunction,
) -> Result<f64> {
    let lambda = f - &op.apply(u)?;
    Ok(u
        .values()
        .iter()
        .zip(phi.values())
        .zip(lambda.values())
        .map(|((&u, &p), &l)| {
            let infeasible = (u - p).max(0.0);
            let negative = (-l).max(0.0);
            let ncp = l.min(p - u).abs();
            infeasible.max(negative).max(ncp)
        })
        .fold(0.0, f64::max))
}

/// `A⁻¹(f + d⁺)`: a supersolution for every source `f + sd`, `s ∈ [0, 1]`.
/// The negative part of `d` is dropped, so for `d ≤ 0` this is `A⁻¹f`.
pub fn default_supersolution(
    op: &EllipticOperator,
    f: &DualElement,
    d: &DualElement,
) -> Result<NodalFunction> {
    op.solve(&(f + &d.positive_part()))
}

fn order_tol(u: &NodalFunction) -> f64 {
    1e-9 * (1.0 + u.max_abs())
}

/// `u ≤ S(f, Φ(u))` up to `1e-9 (1 + ‖u‖_∞)`.
pub fn is_subsolution(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    u: &NodalFunction,
    vi: &SolverOptions,
) -> Result<bool> {
    let s = obstacle_solve(op, f, map, u, vi)?.u;
    u.leq(&s, order_tol(u))
}

/// `u ≥ S(f, Φ(u))` up to `1e-9 (1 + ‖u‖_∞)`.
pub fn is_supersolution(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    u: &NodalFunction,
    vi: &SolverOptions,
) -> Result<bool> {
    let s = obstacle_solve(op, f, map, u, vi)?.u;
    s.leq(u, order_tol(u))
}

/// Ordered pair of a subsolution and a supersolution.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalBracket {
    pub lower: NodalFunction,
    pub upper: NodalFunction,
}

impl IntervalBracket {
    pub fn new(lower: NodalFunction, upper: NodalFunction) -> Result<Self> {
        if !lower.leq(&upper, 0.0)? {
            return Err(QvixError::InvalidBracket(
                "lower bound exceeds upper bound".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, A⁻¹(f + d⁺)]`.
    pub fn standard(op: &EllipticOperator, f: &DualElement, d: &DualElement) -> Result<Self> {
        Self::new(
            NodalFunction::zeros(*op.grid()),
            default_supersolution(op, f, d)?,
        )
    }

    /// Checks the sub- and supersolution properties for source `f`.
    pub fn validate(
        &self,
        op: &EllipticOperator,
        f: &DualElement,
        map: &dyn ObstacleMap,
        vi: &SolverOptions,
    ) -> Result<()> {
        if !is_subsolution(op, f, map, &self.lower, vi)? {
            return Err(QvixError::InvalidBracket(
                "lower bound is not a subsolution".into(),
            ));
        }
        if !is_supersolution(op, f, map, &self.upper, vi)? {
            return Err(QvixError::InvalidBracket(
                "upper bound is not a supersolution".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, u: &NodalFunction, tol: f64) -> Result<bool> {
        Ok(self.lower.leq(u, tol)? && u.leq(&self.upper, tol)?)
    }
}

/// Geometric mean of the last few step ratios.
pub fn tail_contraction(records: &[IterationRecord]) -> Option<f64> {
    let steps: Vec<f64> = records
        .iter()
        .rev()
        .take(6)
        .map(|r| r.step_vnorm)
        .collect();
    let ratios: Vec<f64> = steps
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| (w[0] / w[1]).ln())
        .collect();
    if ratios.is_empty() {
        None
    } else {
        Some((ratios.iter().sum::<f64>() / ratios.len() as f64).exp())
    }
}

/// Runs `u_n = S(f, Φ(u_{n−1}))` from `start`, requiring monotone iterates
/// in the direction of `which`.
pub fn iterate(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    start: &NodalFunction,
    which: Extremal,
    opts: &ExtremalOptions,
) -> Result<ExtremalRunReport> {
    let sign = which.direction();
    let mut prev = start.clone();
    let mut phi = map.evaluate(&prev)?;
    let mut iterates = vec![prev.clone()];
    let mut records = Vec::new();
    for n in 1..=opts.max_outer {
        let vi = solve_vi(op, f, &phi, &opts.vi)?;
        let u = vi.u.clone();
        let delta = &u - &prev;
        let min_node_delta = delta
            .values()
            .iter()
            .map(|d| sign * d)
            .fold(f64::INFINITY, f64::min);
        if min_node_delta < -opts.monotone_tol {
            return Err(QvixError::NotMonotone {
                iteration: n,
                delta: min_node_delta,
            });
        }
        let step = delta.v_norm();
        let next_phi = map.evaluate(&u)?;
        let residual = residual_with_obstacle(op, f, &u, &next_phi)?;
        records.push(IterationRecord {
            iter: n,
            step_vnorm: step,
            qvi_residual: residual,
            min_node_delta,
        });
        debug!(
            "{} iteration {n}: step {step:.3e}, residual {residual:.3e}",
            which.label()
        );
        if opts.keep_iterates {
            iterates.push(u.clone());
        }
        if step <= opts.tol_fp {
            if residual > opts.residual_tol {
                return Err(QvixError::ResidualTooLarge {
                    residual,
                    tol: opts.residual_tol,
                    context: format!("{} extremal solution", which.label()),
                });
            }
            if !opts.keep_iterates {
                iterates.push(u.clone());
            }
            let tail = tail_contraction(&records);
            return Ok(ExtremalRunReport {
                which,
                iterates,
                records,
                solution: u,
                obstacle: next_phi,
                last_vi: vi,
                monotone: true,
                n_iters: n,
                final_step_vnorm: step,
                qvi_residual: residual,
                tail_contraction: tail,
            });
        }
        prev = u;
        phi = next_phi;
    }
    Err(QvixError::FixedPointNoConvergence {
        iterations: opts.max_outer,
        last_step: records.last().map_or(f64::NAN, |r| r.step_vnorm),
        contraction: tail_contraction(&records),
    })
}

/// Increasing iteration towards the minimal solution above `start`.
pub fn iterate_min(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    start: &NodalFunction,
    opts: &ExtremalOptions,
) -> Result<ExtremalRunReport> {
    iterate(op, f, map, start, Extremal::Min, opts)
}

/// Decreasing iteration towards the maximal solution below `start`.
pub fn iterate_max(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    start: &NodalFunction,
    opts: &ExtremalOptions,
) -> Result<ExtremalRunReport> {
    iterate(op, f, map, start, Extremal::Max, opts)
}

/// Validates the bracket, runs the iteration from the matching end and
/// checks that the limit stays inside the bracket.
pub fn solve_extremal(
    op: &EllipticOperator,
    f: &DualElement,
    map: &dyn ObstacleMap,
    bracket: &IntervalBracket,
    which: Extremal,
    opts: &ExtremalOptions,
) -> Result<ExtremalRunReport> {
    bracket.validate(op, f, map, &opts.vi)?;
    let start = match which {
        Extremal::Min => &bracket.lower,
        Extremal::Max => &bracket.upper,
    };
    let report = iterate(op, f, map, start, which, opts)?;
    if !bracket.contains(&report.solution, order_tol(&report.solution))? {
        return Err(QvixError::InvalidBracket(format!(
            "{} solution leaves the bracket",
            which.label()
        )));
    }
    Ok(report)
}

/// Checks that `d` has the sign required for `which`: `d ≥ 0` for the
/// minimal map, `d ≤ 0` for the maximal map.
pub fn check_direction_sign(d: &DualElement, which: Extremal) -> Result<()> {
    let ok = match which {
        Extremal::Min => d.is_nonnegative(),
        Extremal::Max => d.is_nonpositive(),
    };
    if ok {
        Ok(())
    } else {
        Err(QvixError::SignRestriction(format!(
            "the {} map needs a direction that is {}",
            which.label(),
            match which {
                Extremal::Min => "nonnegative",
                Extremal::Max => "nonpositive",
            }
        )))
    }
}

/// Compares the extremal solutions for `f` and `f + sd`:
/// `m(f + sd) ≥ m(f)` for `d ≥ 0`, `M(f + sd) ≤ M(f)` for `d ≤ 0`.
#[allow(clippy::too_many_arguments)]
pub fn comparison_in_f(
    op: &EllipticOperator,
    f: &DualElement,
    d: &DualElement,
    s: f64,
    map: &dyn ObstacleMap,
    bracket: &IntervalBracket,
    which: Extremal,
    opts: &ExtremalOptions,
) -> Result<bool> {
    check_direction_sign(d, which)?;
    if !(s.is_finite() && s >= 0.0) {
        return Err(QvixError::InvalidParameter(format!(
            "s must be nonnegative, got {s}"
        )));
    }
    let fs = f + &(d * s);
    let base = solve_extremal(op, f, map, bracket, which, opts)?.solution;
    let pert = solve_extremal(op, &fs, map, bracket, which, opts)?.solution;
    let tol = 1e-9 * (1.0 + base.max_abs());
    match which {
        Extremal::Min => base.leq(&pert, tol),
        Extremal::Max => pert.leq(&base, tol),
    }
}

/// Distance `‖u_warm − u_cold‖_∞` between the extremal solution for
/// `f + sd` reached from the base extremal solution for `f` and the one
/// reached from the bracket end.
#[allow(clippy::too_many_arguments)]
pub fn perturbed_start_gap(
    op: &EllipticOperator,
    f: &DualElement,
    d: &DualElement,
    s: f64,
    map: &dyn ObstacleMap,
    bracket: &IntervalBracket,
    which: Extremal,
    opts: &ExtremalOptions,
) -> Result<f64> {
    check_direction_sign(d, which)?;
    let fs = f + &(d * s);
    let base = solve_extremal(op, f, map, bracket, which, opts)?.solution;
    let warm = iterate(op, &fs, map, &base, which, opts)?.solution;
    let cold = solve_extremal(op, &fs, map, bracket, which, opts)?.solution;
    Ok((&warm - &cold).max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryCondition, Grid};
    use crate::obstacle::{GScalar, InverseEllipticMap, PlateauMap, PlateauParams};

    fn toy(n: usize) -> (EllipticOperator, DualElement, PlateauMap) {
        let g = Grid::unit(n).unwrap();
        let op = EllipticOperator::assemble(g, 1.0, BoundaryCondition::Neumann).unwrap();
        let map = PlateauMap::new(PlateauParams {
            levels: vec![1.0, 2.0],
            eps: 0.1,
        })
        .unwrap();
        (op, DualElement::constant(g, 2.0), map)
    }

    #[test]
    fn default_supersolution_constants() {
        let (op, f, _) = toy(17);
        let g = *op.grid();
        let zero = default_supersolution(&op, &f, &DualElement::zeros(g)).unwrap();
        assert!(zero.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
        let one = default_supersolution(&op, &f, &DualElement::constant(g, 1.0)).unwrap();
        assert!(one.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn toy_extremal_solutions() {
        let (op, f, map) = toy(21);
        let g = *op.grid();
        let opts = ExtremalOptions::default();
        let min = iterate_min(&op, &f, &map, &NodalFunction::zeros(g), &opts).unwrap();
        assert!(min.solution.values().iter().all(|v| (v - 1.0).abs() <= 1e-8));
        assert!(min.records.iter().all(|r| r.min_node_delta >= -1e-10));
        let max = iterate_max(&op, &f, &map, &NodalFunction::constant(g, 3.0), &opts).unwrap();
        assert!(max.solution.values().iter().all(|v| (v - 2.0).abs() <= 1e-8));
        assert!(max.qvi_residual <= 1e-8);
    }

    #[test]
    fn residual_examples() {
        let (op, f, map) = toy(11);
        let g = *op.grid();
        let at = |c: f64| qvi_residual(&op, &f, &map, &NodalFunction::constant(g, c)).unwrap();
        assert!(at(1.0) <= 1e-10);
        assert!(at(2.0) <= 1e-10);
        assert!(at(1.3) > 0.1);
    }

    #[test]
    fn fixed_point_start_takes_one_iteration() {
        let (op, f, map) = toy(11);
        let g = *op.grid();
        let one = NodalFunction::constant(g, 1.0);
        let rep = iterate_min(&op, &f, &map, &one, &ExtremalOptions::default()).unwrap();
        assert_eq!(rep.n_iters, 1);
        assert!((&rep.solution - &one).max_abs() < 1e-12);
    }

    #[test]
    fn zero_source_map_reduces_to_vi() {
        let g = Grid::unit(13).unwrap();
        let op = EllipticOperator::assemble(g, 1.0, BoundaryCondition::Neumann).unwrap();
        let map = InverseEllipticMap::new(op.clone(), GScalar::Linear { slope: 0.0 }).unwrap();
        let f = DualElement::new(g, g.nodes().iter().map(|x| 1.0 - 2.0 * x).collect()).unwrap();
        let start = NodalFunction::constant(g, -10.0);
        let rep = iterate_min(&op, &f, &map, &start, &ExtremalOptions::default()).unwrap();
        assert_eq!(rep.n_iters, 2);
        let direct = solve_vi(&op, &f, &NodalFunction::zeros(g), &SolverOptions::default()).unwrap();
        assert!((&rep.solution - &direct.u).max_abs() < 1e-12);
    }

    #[test]
    fn non_monotone_start_is_rejected() {
        let (op, f, map) = toy(11);
        let g = *op.grid();
        // 1.3 is not a subsolution: S(f, Φ(1.3)) = Φ(1.3) < 1.3.
        let err = iterate_min(&op, &f, &map, &NodalFunction::constant(g, 1.3), &ExtremalOptions::default())
            .unwrap_err();
        assert!(matches!(err, QvixError::NotMonotone { .. }));
    }

    #[test]
    fn bracket_checks() {
        let (op, f, map) = toy(11);
        let g = *op.grid();
        let vi = SolverOptions::default();
        assert!(is_subsolution(&op, &f, &map, &NodalFunction::zeros(g), &vi).unwrap());
        let up = default_supersolution(&op, &f, &DualElement::zeros(g)).unwrap();
        assert!(is_supersolution(&op, &f, &map, &up, &vi).unwrap());
        let one = NodalFunction::constant(g, 1.0);
        assert!(is_subsolution(&op, &f, &map, &one, &vi).unwrap());
        assert!(is_supersolution(&op, &f, &map, &one, &vi).unwrap());
        assert!(IntervalBracket::new(up.clone(), NodalFunction::zeros(g)).is_err());
        // Φ(0.5) = 0.65 > 0.5, so 0.5 is not a supersolution
        let bad = IntervalBracket::new(NodalFunction::zeros(g), NodalFunction::constant(g, 0.5)).unwrap();
        assert!(bad.validate(&op, &f, &map, &vi).is_err());
    }

    #[test]
    fn comparison_examples() {
        let (op, f, map) = toy(11);
        let g = *op.grid();
        let d = DualElement::constant(g, 1.0);
        let br = IntervalBracket::standard(&op, &f, &d).unwrap();
        let opts = ExtremalOptions::default();
        assert!(comparison_in_f(&op, &f, &d, 0.0, &map, &br, Extremal::Min, &opts).unwrap());
        assert!(comparison_in_f(&op, &f, &d, 0.1, &map, &br, Extremal::Min, &opts).unwrap());
        assert!(matches!(
            comparison_in_f(&op, &f, &d, 0.1, &map, &br, Extremal::Max, &opts),
            Err(QvixError::SignRestriction(_))
        ));
        let gap = perturbed_start_gap(&op, &f, &d, 0.1, &map, &br, Extremal::Min, &opts).unwrap();
        assert!(gap <= 1e-8);
    }

    #[test]
    fn tail_contraction_of_geometric_steps() {
        let recs: Vec<IterationRecord> = (0..8)
            .map(|i| IterationRecord {
                iter: i + 1,
                step_vnorm: 0.5_f64.powi(i as i32),
                qvi_residual: 0.0,
                min_node_delta: 0.0,
            })
            .collect();
        assert!((tail_contraction(&recs).unwrap() - 0.5).abs() < 1e-12);
        assert!(tail_contraction(&recs[..1]).is_none());
    }
}
