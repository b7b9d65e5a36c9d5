//! Uniform 1D grids, nodal functions and the lumped-mass P1 elliptic operator.
//!
//! Functions are stored by their nodal values. Dual elements (forcing terms,
//! multipliers) are stored as nodal load densities, so that the duality
//! pairing is the lumped-mass sum `⟨f, v⟩ = Σ m_i f_i v_i`. With this
//! convention `f ≥ 0` in the dual order is exactly nodal nonnegativity, and
//! `apply(A, u)` returns the nodal values of the "strong form" `M⁻¹ S u`,
//! where `S` is the stiffness-plus-reaction matrix.
//!
//! The V-norm is the discrete H¹ norm `‖u‖_V² = Σ m_i u_i² + Σ (u_{i+1} − u_i)²/h`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{QvixError, Result};
use crate::linalg::Tridiag;

/// Uniform grid on a closed interval `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_nodes: usize,
    a: f64,
    b: f64,
}

impl Grid {
    pub fn new(n_nodes: usize, a: f64, b: f64) -> Result<Self> {
        if n_nodes < 2 {
            return Err(QvixError::InvalidGrid(format!(
                "need at least 2 nodes, got {n_nodes}"
            )));
        }
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(QvixError::InvalidGrid(format!(
                "interval [{a}, {b}] is empty or not finite"
            )));
        }
        Ok(Self { n_nodes, a, b })
    }

    /// Grid on `[0, 1]`.
    pub fn unit(n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, 0.0, 1.0)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Mesh width.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n_nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        // Pin the last node to `b` exactly.
        if i + 1 == self.n_nodes {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.node(i)).collect()
    }

    /// Lumped mass weights: `h/2` at the end nodes, `h` in the interior.
    pub fn mass_weights(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n_nodes)
            .map(|i| if i == 0 || i + 1 == self.n_nodes { 0.5 * h } else { h })
            .collect()
    }

    /// Neumann stiffness matrix of `−Δ` for P1 elements.
    pub(crate) fn stiffness(&self) -> Tridiag {
        let n = self.n_nodes;
        let inv_h = 1.0 / self.h();
        let mut t = Tridiag::zeros(n);
        for e in 0..n - 1 {
            t.diag[e] += inv_h;
            t.diag[e + 1] += inv_h;
            t.upper[e] -= inv_h;
            t.lower[e + 1] -= inv_h;
        }
        t
    }

    /// Gram matrix of the V inner product.
    pub(crate) fn gram(&self) -> Tridiag {
        let mut g = self.stiffness();
        for (d, m) in g.diag.iter_mut().zip(self.mass_weights()) {
            *d += m;
        }
        g
    }

    /// Riesz representative of `f` in V: the `r` with `(r, v)_V = ⟨f, v⟩` for all `v`.
    pub fn riesz(&self, f: &DualElement) -> NodalFunction {
        assert_eq!(f.grid, *self, "riesz: grid mismatch");
        let rhs: Vec<f64> = f
            .values
            .iter()
            .zip(self.mass_weights())
            .map(|(v, m)| v * m)
            .collect();
        let r = self
            .gram()
            .solve(&rhs)
            .expect("V Gram matrix is symmetric positive definite");
        NodalFunction { grid: *self, values: r }
    }

    /// Smallest `K` with `‖v‖_∞ ≤ K ‖v‖_V` for every nodal function on this grid.
    ///
    /// `sup_v v_i² / ‖v‖_V² = (G⁻¹)_ii`, so `K² = max_i (G⁻¹)_ii`.
    pub fn linf_embedding_constant(&self) -> f64 {
        let g = self.gram();
        let n = self.n_nodes;
        let mut worst = 0.0_f64;
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            let col = g.solve(&e).expect("V Gram matrix is symmetric positive definite");
            worst = worst.max(col[i]);
            e[i] = 0.0;
        }
        worst.sqrt()
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(QvixError::GridMismatch {
                left: self.n_nodes,
                right: other.n_nodes,
            });
        }
        Ok(())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(QvixError::NonFinite { node }),
        None => Ok(()),
    }
}

/// Nodal values of a continuous piecewise-linear function.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl NodalFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes {
            return Err(QvixError::GridMismatch {
                left: grid.n_nodes,
                right: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_nodes],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Projection onto the nonnegative cone, `max(u, 0)` nodewise.
    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    /// `u⁻ = max(−u, 0)`, so that `u = u⁺ − u⁻`.
    pub fn negative_part(&self) -> Self {
        self.map(|v| (-v).max(0.0))
    }

    /// `u_i ≤ v_i + tol` at every node.
    pub fn leq(&self, other: &Self, tol: f64) -> Result<bool> {
        self.grid.check_same(&other.grid)?;
        Ok(self.values.iter().zip(&other.values).all(|(a, b)| *a <= b + tol))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn h_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.mass_weights())
            .map(|(v, m)| m * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Discrete Dirichlet energy seminorm `(Σ (u_{i+1} − u_i)²/h)^{1/2}`.
    pub fn seminorm(&self) -> f64 {
        let inv_h = 1.0 / self.grid.h();
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).powi(2) * inv_h)
            .sum::<f64>()
            .sqrt()
    }

    pub fn v_norm(&self) -> f64 {
        self.h_norm().hypot(self.seminorm())
    }

    /// V inner product.
    pub fn v_dot(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let g = self.grid.gram();
        g.matvec(&self.values)
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// The dual element with the same nodal density (L² identification).
    pub fn to_dual(&self) -> DualElement {
        DualElement {
            grid: self.grid,
            values: self.values.clone(),
        }
    }
}

impl Add for &NodalFunction {
    type Output = NodalFunction;
    fn add(self, rhs: Self) -> NodalFunction {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &NodalFunction {
    type Output = NodalFunction;
    fn sub(self, rhs: Self) -> NodalFunction {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &NodalFunction {
    type Output = NodalFunction;
    fn mul(self, rhs: f64) -> NodalFunction {
        self.map(|a| a * rhs)
    }
}

impl Neg for &NodalFunction {
    type Output = NodalFunction;
    fn neg(self) -> NodalFunction {
        self.map(|a| -a)
    }
}

/// Element of the dual space, stored as nodal load densities.
#[derive(Clone, Debug, PartialEq)]
pub struct DualElement {
    grid: Grid,
    values: Vec<f64>,
}

impl DualElement {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes {
            return Err(QvixError::GridMismatch {
                left: grid.n_nodes,
                right: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_nodes],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `⟨f, v⟩ = Σ m_i f_i v_i`.
    pub fn pair(&self, v: &NodalFunction) -> Result<f64> {
        self.grid.check_same(&v.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&v.values)
            .zip(self.grid.mass_weights())
            .map(|((f, v), m)| m * f * v)
            .sum())
    }

    /// Dual norm, computed through the Riesz map.
    pub fn dual_norm(&self) -> f64 {
        self.grid.riesz(self).v_norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn is_nonpositive(&self) -> bool {
        self.values.iter().all(|&v| v <= 0.0)
    }

    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }
}

impl Add for &DualElement {
    type Output = DualElement;
    fn add(self, rhs: Self) -> DualElement {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &DualElement {
    type Output = DualElement;
    fn sub(self, rhs: Self) -> DualElement {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &DualElement {
    type Output = DualElement;
    fn mul(self, rhs: f64) -> DualElement {
        self.map(|a| a * rhs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Neumann,
    /// Homogeneous Dirichlet. Boundary nodes are eliminated from the
    /// interior equations and kept as decoupled diagonal rows.
    Dirichlet,
}

/// `A = −Δ + c·I` discretized with P1 elements and lumped mass.
#[derive(Clone, Debug)]
pub struct EllipticOperator {
    grid: Grid,
    c: f64,
    bc: BoundaryCondition,
    matrix: Tridiag,
    c_a: f64,
    c_b: f64,
}

impl EllipticOperator {
    pub fn assemble(grid: Grid, c: f64, bc: BoundaryCondition) -> Result<Self> {
        if grid.n_nodes < 2 {
            return Err(QvixError::InvalidGrid("need at least 2 nodes".into()));
        }
        if !c.is_finite() || c < 0.0 {
            return Err(QvixError::InvalidParameter(format!(
                "reaction coefficient must be finite and >= 0, got {c}"
            )));
        }
        if bc == BoundaryCondition::Neumann && c == 0.0 {
            return Err(QvixError::SingularOperator(
                "Neumann Laplacian without reaction term annihilates constants".into(),
            ));
        }
        let n = grid.n_nodes;
        let mut matrix = grid.stiffness();
        let mass = grid.mass_weights();
        for (d, m) in matrix.diag.iter_mut().zip(&mass) {
            *d += c * m;
        }
        if bc == BoundaryCondition::Dirichlet {
            let h = grid.h();
            for b in [0, n - 1] {
                matrix.diag[b] = mass[b] * (2.0 / (h * h) + c);
                matrix.upper[b] = 0.0;
                matrix.lower[b] = 0.0;
            }
            // symmetric elimination of the couplings into the boundary
            matrix.lower[1] = 0.0;
            matrix.upper[n - 2] = 0.0;
            if n == 2 {
                matrix.upper[0] = 0.0;
                matrix.lower[1] = 0.0;
            }
        }
        let (c_a, c_b) = match bc {
            // S ≥ min(1,c)·G and S ≤ max(1,c)·G in the Loewner order.
            BoundaryCondition::Neumann => (c.min(1.0), c.max(1.0)),
            BoundaryCondition::Dirichlet => generalized_extremes(&matrix, &grid.gram()),
        };
        let op = Self {
            grid,
            c,
            bc,
            matrix,
            c_a,
            c_b,
        };
        debug_assert!(op.is_m_matrix());
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn reaction(&self) -> f64 {
        self.c
    }

    pub fn boundary_condition(&self) -> BoundaryCondition {
        self.bc
    }

    /// Coercivity constant `C_a`: `⟨Au, u⟩ ≥ C_a ‖u‖_V²`.
    pub fn coercivity(&self) -> f64 {
        self.c_a
    }

    /// Boundedness constant `C_b`: `⟨Au, v⟩ ≤ C_b ‖u‖_V ‖v‖_V`.
    pub fn boundedness(&self) -> f64 {
        self.c_b
    }

    pub(crate) fn matrix(&self) -> &Tridiag {
        &self.matrix
    }

    /// Positive diagonal, nonpositive off-diagonals, weak diagonal dominance.
    pub fn is_m_matrix(&self) -> bool {
        let m = &self.matrix;
        let n = m.len();
        (0..n).all(|i| {
            let lo = if i > 0 { m.lower[i] } else { 0.0 };
            let up = if i + 1 < n { m.upper[i] } else { 0.0 };
            m.diag[i] > 0.0 && lo <= 0.0 && up <= 0.0 && m.diag[i] + lo + up >= -1e-12 * m.diag[i]
        })
    }

    pub fn apply(&self, u: &NodalFunction) -> Result<DualElement> {
        self.grid.check_same(&u.grid)?;
        let su = self.matrix.matvec(&u.values);
        let values = su
            .into_iter()
            .zip(self.grid.mass_weights())
            .map(|(v, m)| v / m)
            .collect();
        Ok(DualElement {
            grid: self.grid,
            values,
        })
    }

    /// The bilinear form `a(u, v) = ⟨Au, v⟩`.
    pub fn bilinear(&self, u: &NodalFunction, v: &NodalFunction) -> Result<f64> {
        self.grid.check_same(&u.grid)?;
        self.grid.check_same(&v.grid)?;
        Ok(self
            .matrix
            .matvec(&u.values)
            .iter()
            .zip(&v.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Solves `Au = f`.
    pub fn solve(&self, f: &DualElement) -> Result<NodalFunction> {
        self.solve_shifted(f, None)
    }

    /// Solves `(A + diag(shift)) u = f` for a nonnegative nodal shift
    /// (given as a strong-form reaction coefficient per node).
    pub(crate) fn solve_shifted(
        &self,
        f: &DualElement,
        shift: Option<&[f64]>,
    ) -> Result<NodalFunction> {
        self.grid.check_same(&f.grid)?;
        let mass = self.grid.mass_weights();
        let mut matrix = self.matrix.clone();
        if let Some(shift) = shift {
            for ((d, s), m) in matrix.diag.iter_mut().zip(shift).zip(&mass) {
                *d += s * m;
            }
        }
        let rhs: Vec<f64> = f.values.iter().zip(&mass).map(|(v, m)| v * m).collect();
        let u = matrix
            .solve(&rhs)
            .ok_or_else(|| QvixError::SingularOperator("zero pivot in tridiagonal solve".into()))?;
        let back = matrix.matvec(&u);
        let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            + (0..u.len())
                .map(|i| matrix.row_abs_sum(i) * u[i].abs())
                .fold(0.0, f64::max);
        let res = back
            .iter()
            .zip(&rhs)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if res > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(QvixError::SingularOperator(format!(
                "linear solve residual {res:.3e} relative to scale {scale:.3e}"
            )));
        }
        Ok(NodalFunction {
            grid: self.grid,
            values: u,
        })
    }
}

/// Extreme generalized eigenvalues of the pencil `(s, g)` with `g` SPD.
fn generalized_extremes(s: &Tridiag, g: &Tridiag) -> (f64, f64) {
    let gd = g.to_dense();
    let sd = s.to_dense();
    let chol = gd.cholesky().expect("V Gram matrix is SPD");
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .expect("Cholesky factor is invertible");
    let c = &linv * sd * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(grid: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> NodalFunction {
        NodalFunction::new(grid, (0..grid.n_nodes()).map(|_| rng.gen_range(lo..hi)).collect())
            .unwrap()
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(Grid::unit(1).is_err());
        assert!(Grid::new(5, 1.0, 1.0).is_err());
        let g = Grid::unit(5).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.node(4), 1.0);
        let total: f64 = g.mass_weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neumann_rows_sum_to_reaction_times_mass() {
        let g = Grid::unit(3).unwrap();
        let op = EllipticOperator::assemble(g, 1.0, BoundaryCondition::Neumann).unwrap();
        let m = op.matrix();
        let mass = g.mass_weights();
        for i in 0..3 {
            let row: f64 = m.diag[i]
                + if i > 0 { m.lower[i] } else { 0.0 }
                + if i < 2 { m.upper[i] } else { 0.0 };
            assert!((row - mass[i]).abs() < 1e-14);
        }
        assert!(op.is_m_matrix());
    }

    #[test]
    fn neumann_without_reaction_is_singular() {
        let g = Grid::unit(2).unwrap();
        assert!(matches!(
            EllipticOperator::assemble(g, 0.0, BoundaryCondition::Neumann),
            Err(QvixError::SingularOperator(_))
        ));
        assert!(EllipticOperator::assemble(g, -1.0, BoundaryCondition::Dirichlet).is_err());
    }

    #[test]
    fn constants_are_reproduced() {
        let g = Grid::unit(101).unwrap();
        let op = EllipticOperator::assemble(g, 1.0, BoundaryCondition::Neumann).unwrap();
        let one = NodalFunction::constant(g, 1.0);
        let a1 = op.apply(&one).unwrap();
        assert!(a1.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let u = op.solve(&DualElement::constant(g, 1.0)).unwrap();
        assert!(u.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let kappa = 3.7;
        let u = op.solve(&DualElement::constant(g, kappa)).unwrap();
        assert!(u.values().iter().all(|v| (v - kappa).abs() < 1e-10));
        let zero = op.apply(&NodalFunction::zeros(g)).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn apply_is_symmetric() {
        let g = Grid::unit(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            let op = EllipticOperator::assemble(g, 1.0, bc).unwrap();
            for _ in 0..20 {
                let u = random_fn(g, &mut rng, -1.0, 1.0);
                let v = random_fn(g, &mut rng, -1.0, 1.0);
                let auv = op.apply(&u).unwrap().pair(&v).unwrap();
                let avu = op.apply(&v).unwrap().pair(&u).unwrap();
                assert!((auv - avu).abs() <= 1e-12);
                assert!((auv - op.bilinear(&u, &v).unwrap()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn solve_round_trip_and_maximum_principle() {
        let g = Grid::unit(50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            let op = EllipticOperator::assemble(g, 0.5, bc).unwrap();
            let u0 = random_fn(g, &mut rng, -2.0, 2.0);
            let f = op.apply(&u0).unwrap();
            let u = op.solve(&f).unwrap();
            assert!((&u - &u0).max_abs() <= 1e-10);
            for _ in 0..20 {
                let f = DualElement::new(g, (0..50).map(|_| rng.gen_range(0.0..3.0)).collect())
                    .unwrap();
                let u = op.solve(&f).unwrap();
                assert!(u.min_value() >= -1e-14);
            }
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let g1 = Grid::unit(4).unwrap();
        let g2 = Grid::unit(5).unwrap();
        let op = EllipticOperator::assemble(g1, 1.0, BoundaryCondition::Neumann).unwrap();
        assert!(op.apply(&NodalFunction::zeros(g2)).is_err());
        assert!(op.solve(&DualElement::zeros(g2)).is_err());
        assert!(NodalFunction::zeros(g1)
            .leq(&NodalFunction::zeros(g2), 0.0)
            .is_err());
        assert!(NodalFunction::new(g1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn positive_part_examples() {
        let g = Grid::unit(3).unwrap();
        let u = NodalFunction::new(g, vec![-1.0, 2.0, 0.0]).unwrap();
        assert_eq!(u.positive_part().values(), &[0.0, 2.0, 0.0]);
        let p = NodalFunction::new(g, vec![0.5, 2.0, 0.0]).unwrap();
        assert_eq!(p.positive_part(), p);
    }

    #[test]
    fn leq_examples() {
        let g = Grid::unit(2).unwrap();
        let t = 1e-3;
        let u = NodalFunction::new(g, vec![0.0, 1.0]).unwrap();
        let v = NodalFunction::new(g, vec![0.0, 1.0 - 2.0 * t]).unwrap();
        assert!(u.leq(&u, 0.0).unwrap());
        assert!(!u.leq(&v, t).unwrap());
        assert!(v.leq(&u, 0.0).unwrap());
    }

    #[test]
    fn norm_examples() {
        let g = Grid::unit(11).unwrap();
        assert_eq!(NodalFunction::zeros(g).v_norm(), 0.0);
        let k = NodalFunction::constant(g, -2.5);
        assert!((k.h_norm() - 2.5).abs() < 1e-14);
        assert_eq!(k.seminorm(), 0.0);
        // Riesz representative of the constant 1 is the constant 1.
        let one = DualElement::constant(g, 1.0);
        assert!((one.dual_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dual_norm_is_operator_norm_of_pairing() {
        // ⟨f, v⟩ ≤ ‖f‖_* ‖v‖_V with equality at the Riesz representative.
        let g = Grid::unit(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DualElement::new(g, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let r = g.riesz(&f);
        let fr = f.pair(&r).unwrap();
        assert!((fr - f.dual_norm() * r.v_norm()).abs() < 1e-12);
        for _ in 0..50 {
            let v = random_fn(g, &mut rng, -1.0, 1.0);
            assert!(f.pair(&v).unwrap() <= f.dual_norm() * v.v_norm() + 1e-12);
        }
    }

    #[test]
    fn dirichlet_constants_are_consistent() {
        let g = Grid::unit(21).unwrap();
        let op = EllipticOperator::assemble(g, 0.0, BoundaryCondition::Dirichlet).unwrap();
        assert!(op.coercivity() > 0.0);
        assert!(op.boundedness() >= op.coercivity());
        assert!(op.is_m_matrix());
    }

    #[test]
    fn embedding_constant_bounds_sup_norm() {
        let g = Grid::unit(33).unwrap();
        let k = g.linf_embedding_constant();
        // continuum value sqrt(coth 1) ≈ 1.1459
        assert!((k - 1.0_f64.tanh().recip().sqrt()).abs() < 0.01, "K = {k}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v = random_fn(g, &mut rng, -1.0, 1.0);
            assert!(v.max_abs() <= k * v.v_norm() + 1e-12);
        }
    }
}
