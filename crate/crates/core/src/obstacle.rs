//! Obstacle maps `Φ` and their derivative actions `h ↦ Φ'(u)(h)`.
//!
//! Three maps are provided:
//!
//! * [`PlateauMap`]: nodewise application of a smooth increasing scalar
//!   function that is constant on `[y_j − ε, y_j + ε]` for given levels `y_j`.
//! * [`InverseEllipticMap`]: `Φ(u) = L⁻¹ g(u)` for an elliptic operator `L`
//!   and an increasing scalar `g` with `g(0) = 0`.
//! * [`ThermoformingMap`]: `Φ(u) = Φ₀ + γT` where the mould temperature `T`
//!   solves the Neumann problem `kT − ΔT = g(γT + Φ₀ − u)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QvixError, Result};
use crate::grid::{BoundaryCondition, DualElement, EllipticOperator, Grid, NodalFunction};

/// An increasing map from nodal functions to obstacles.
pub trait ObstacleMap: Send + Sync {
    fn evaluate(&self, u: &NodalFunction) -> Result<NodalFunction>;

    /// Directional derivative `Φ'(u)(h)`.
    fn derivative(&self, u: &NodalFunction, h: &NodalFunction) -> Result<NodalFunction>;

    fn name(&self) -> &'static str {
        "custom"
    }
}

/// Quintic smoothstep `6r⁵ − 15r⁴ + 10r³`, clamped to `[0, 1]`.
pub fn smoothstep(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    r * r * r * (r * (6.0 * r - 15.0) + 10.0)
}

pub fn smoothstep_deriv(r: f64) -> f64 {
    if r <= 0.0 || r >= 1.0 {
        0.0
    } else {
        30.0 * r * r * (1.0 - r) * (1.0 - r)
    }
}

/// `∫₀ʳ smoothstep`, for `r ∈ [0, 1]`.
fn smoothstep_integral(r: f64) -> f64 {
    r.powi(4) * (r * (r - 3.0) + 2.5)
}

/// Largest value of `smoothstep'`, attained at `r = 1/2`.
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;

// ---------------------------------------------------------------------------
// Plateau map

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauParams {
    pub levels: Vec<f64>,
    pub eps: f64,
}

/// Nodewise `φ(u_i)` for a C², increasing `φ: ℝ → ℝ` with `φ ≡ y_j` on
/// `[y_j − ε, y_j + ε]`.
///
/// Between consecutive plateaus the levels are joined by a rescaled
/// smoothstep. Outside `[y_1 − ε, y_N + ε]` the function leaves the plateau
/// along a C² ramp whose slope rises from 0 to 1 over a width `ε` and stays 1
/// afterwards. Since the ramp lies below the identity shift, `φ(0) ≥ ε > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauMap {
    levels: Vec<f64>,
    eps: f64,
}

impl PlateauMap {
    pub fn new(params: PlateauParams) -> Result<Self> {
        let PlateauParams { levels, eps } = params;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(QvixError::InvalidParameter(format!(
                "plateau half-width must be positive, got {eps}"
            )));
        }
        if levels.is_empty() {
            return Err(QvixError::InvalidParameter("no plateau levels".into()));
        }
        if levels.iter().any(|y| !(y.is_finite() && *y > 0.0)) {
            return Err(QvixError::InvalidParameter(
                "plateau levels must be positive".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] - w[0] <= 2.0 * eps) {
            return Err(QvixError::InvalidParameter(
                "plateau levels must be increasing with gaps larger than 2·eps".into(),
            ));
        }
        Ok(Self { levels, eps })
    }

    pub fn params(&self) -> PlateauParams {
        PlateauParams {
            levels: self.levels.clone(),
            eps: self.eps,
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn ramp(&self, r: f64) -> (f64, f64) {
        let w = self.eps;
        if r <= w {
            (w * smoothstep_integral(r / w), smoothstep(r / w))
        } else {
            (0.5 * w + (r - w), 1.0)
        }
    }

    /// Value and derivative of the scalar function.
    pub fn scalar(&self, t: f64) -> (f64, f64) {
        let eps = self.eps;
        let first = self.levels[0];
        let last = *self.levels.last().expect("non-empty");
        if t < first - eps {
            let (v, d) = self.ramp(first - eps - t);
            return (first - v, d);
        }
        if t > last + eps {
            let (v, d) = self.ramp(t - last - eps);
            return (last + v, d);
        }
        for w in self.levels.windows(2) {
            let (y, next) = (w[0], w[1]);
            if t <= y + eps {
                return (y, 0.0);
            }
            if t < next - eps {
                let width = next - y - 2.0 * eps;
                let r = (t - y - eps) / width;
                return (
                    y + (next - y) * smoothstep(r),
                    (next - y) * smoothstep_deriv(r) / width,
                );
            }
        }
        (last, 0.0)
    }
}

impl ObstacleMap for PlateauMap {
    fn evaluate(&self, u: &NodalFunction) -> Result<NodalFunction> {
        Ok(u.map(|t| self.scalar(t).0))
    }

    fn derivative(&self, u: &NodalFunction, h: &NodalFunction) -> Result<NodalFunction> {
        if u.grid() != h.grid() {
            return Err(QvixError::GridMismatch {
                left: u.len(),
                right: h.len(),
            });
        }
        Ok(u.zip_map(h, |t, h| self.scalar(t).1 * h))
    }

    fn name(&self) -> &'static str {
        "plateau"
    }
}

// ---------------------------------------------------------------------------
// Inverse elliptic map

/// Increasing scalar source with `g(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GScalar {
    /// `g(t) = slope · t`.
    Linear { slope: f64 },
    /// `g(t) = amplitude · tanh(rate · t)`.
    Tanh { amplitude: f64, rate: f64 },
}

impl GScalar {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GScalar::Linear { slope } => slope.is_finite() && slope >= 0.0,
            GScalar::Tanh { amplitude, rate } => {
                amplitude.is_finite() && rate.is_finite() && amplitude >= 0.0 && rate >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(QvixError::InvalidParameter(format!(
                "g must be increasing with finite nonnegative parameters: {self:?}"
            )))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            GScalar::Linear { slope } => slope * t,
            GScalar::Tanh { amplitude, rate } => amplitude * (rate * t).tanh(),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            GScalar::Linear { slope } => slope,
            GScalar::Tanh { amplitude, rate } => {
                let c = (rate * t).cosh();
                amplitude * rate / (c * c)
            }
        }
    }

    /// `sup |g'|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            GScalar::Linear { slope } => slope,
            GScalar::Tanh { amplitude, rate } => amplitude * rate,
        }
    }
}

/// `Φ(u) = L⁻¹ g(u)`.
#[derive(Clone, Debug)]
pub struct InverseEllipticMap {
    l_op: EllipticOperator,
    g: GScalar,
}

impl InverseEllipticMap {
    pub fn new(l_op: EllipticOperator, g: GScalar) -> Result<Self> {
        g.validate()?;
        Ok(Self { l_op, g })
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.l_op
    }

    pub fn g(&self) -> GScalar {
        self.g
    }
}

impl ObstacleMap for InverseEllipticMap {
    fn evaluate(&self, u: &NodalFunction) -> Result<NodalFunction> {
        let rhs = u.map(|t| self.g.value(t)).to_dual();
        self.l_op.solve(&rhs)
    }

    fn derivative(&self, u: &NodalFunction, h: &NodalFunction) -> Result<NodalFunction> {
        if u.grid() != h.grid() {
            return Err(QvixError::GridMismatch {
                left: u.len(),
                right: h.len(),
            });
        }
        let rhs = u.zip_map(h, |t, h| self.g.deriv(t) * h).to_dual();
        self.l_op.solve(&rhs)
    }

    fn name(&self) -> &'static str {
        "inverse_elliptic"
    }
}

// ---------------------------------------------------------------------------
// Thermoforming map

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerSolveOptions {
    /// Scaled residual accepted for the temperature equation.
    pub tol: f64,
    pub max_fixed_point: usize,
    pub max_newton: usize,
    /// Contraction factor from which Newton is used directly.
    pub newton_threshold: f64,
}

impl Default for InnerSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_fixed_point: 500,
            max_newton: 50,
            newton_threshold: 0.9,
        }
    }
}

/// Converged temperature with solver diagnostics.
#[derive(Clone, Debug)]
pub struct TemperatureSolve {
    pub t: NodalFunction,
    pub residual: f64,
    pub iterations: usize,
    pub used_newton: bool,
}

/// Heat transfer `g(r) = M (1 − s(r))` with `s` the quintic smoothstep:
/// `g = M` for `r ≤ 0`, `g = 0` for `r ≥ 1`, decreasing and C² in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatTransfer {
    pub max: f64,
}

impl HeatTransfer {
    pub fn value(&self, r: f64) -> f64 {
        self.max * (1.0 - smoothstep(r))
    }

    pub fn deriv(&self, r: f64) -> f64 {
        -self.max * smoothstep_deriv(r)
    }

    pub fn lipschitz(&self) -> f64 {
        self.max * SMOOTHSTEP_MAX_SLOPE
    }
}

/// Thermoforming obstacle `Φ(u) = Φ₀ + γT(u)`, with `T` the solution of
/// the insulated heat balance `kT − ΔT = g(γT + Φ₀ − u)`.
#[derive(Clone, Debug)]
pub struct ThermoformingMap {
    k: f64,
    gamma: f64,
    heat: HeatTransfer,
    mould: NodalFunction,
    heat_op: EllipticOperator,
    inner: InnerSolveOptions,
}

impl ThermoformingMap {
    /// `k > 0` conductivity-to-reaction ratio, `max_heat = M > 0`,
    /// `gamma > 0` the mould growth factor and `mould = Φ₀ > 0`.
    pub fn new(k: f64, max_heat: f64, gamma: f64, mould: NodalFunction) -> Result<Self> {
        for (name, v) in [("k", k), ("M", max_heat), ("gamma", gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(QvixError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if mould.min_value() <= 0.0 {
            return Err(QvixError::InvalidParameter(
                "mould shape must be positive".into(),
            ));
        }
        let heat_op = EllipticOperator::assemble(*mould.grid(), k, BoundaryCondition::Neumann)?;
        Ok(Self {
            k,
            gamma,
            heat: HeatTransfer { max: max_heat },
            mould,
            heat_op,
            inner: InnerSolveOptions::default(),
        })
    }

    pub fn with_inner_options(mut self, inner: InnerSolveOptions) -> Self {
        self.inner = inner;
        self
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn max_heat(&self) -> f64 {
        self.heat.max
    }

    pub fn mould(&self) -> &NodalFunction {
        &self.mould
    }

    pub fn heat_transfer(&self) -> HeatTransfer {
        self.heat
    }

    /// `q = min(1,k)⁻¹ ‖g'‖_∞ γ`.
    pub fn contraction_factor(&self) -> f64 {
        self.heat.lipschitz() * self.gamma / self.k.min(1.0)
    }

    /// A priori bound `‖T‖_V ≤ ‖g‖_∞ |Ω|^{1/2} min(1,k)⁻¹`.
    pub fn temperature_bound(&self) -> f64 {
        let (a, b) = self.mould.grid().interval();
        self.heat.max * (b - a).sqrt() / self.k.min(1.0)
    }

    fn gap(&self, t: &[f64], u: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.mould.values())
            .zip(u)
            .map(|((t, p0), u)| self.gamma * t + p0 - u)
            .collect()
    }

    /// Scaled residual of `kT − ΔT = g(γT + Φ₀ − u)`.
    fn residual(&self, t: &[f64], u: &[f64]) -> f64 {
        let s = self.heat_op.matrix();
        let mass = self.heat_op.grid().mass_weights();
        let st = s.matvec(t);
        let t_inf = t.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.gap(t, u)
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let scale = mass[i] * (1.0 + self.heat.max) + s.row_abs_sum(i) * t_inf;
                (st[i] - mass[i] * self.heat.value(r)).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    /// Solves the temperature equation for a given membrane position.
    pub fn temperature(&self, u: &NodalFunction) -> Result<TemperatureSolve> {
        let grid = *self.mould.grid();
        if u.grid() != &grid {
            return Err(QvixError::GridMismatch {
                left: grid.n_nodes(),
                right: u.len(),
            });
        }
        let q = self.contraction_factor();
        let uv = u.values();
        let mut t = vec![0.0; grid.n_nodes()];
        let mut iterations = 0;
        let mut used_newton = false;

        if q < self.inner.newton_threshold {
            for _ in 0..self.inner.max_fixed_point {
                iterations += 1;
                let rhs: Vec<f64> = self
                    .gap(&t, uv)
                    .into_iter()
                    .map(|r| self.heat.value(r))
                    .collect();
                let next = self
                    .heat_op
                    .solve(&DualElement::new(grid, rhs)?)?
                    .into_values();
                let step = next
                    .iter()
                    .zip(&t)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                t = next;
                if step <= 1e-15 * (1.0 + t.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
                    break;
                }
            }
        }

        let mut residual = self.residual(&t, uv);
        if residual > self.inner.tol {
            used_newton = true;
            for _ in 0..self.inner.max_newton {
                iterations += 1;
                let gap = self.gap(&t, uv);
                let st = self.heat_op.apply(&NodalFunction::new(grid, t.clone())?)?;
                let neg_f: Vec<f64> = st
                    .values()
                    .iter()
                    .zip(&gap)
                    .map(|(a, &r)| self.heat.value(r) - a)
                    .collect();
                // Jacobian kI − Δ − γ g'(gap): g' ≤ 0 keeps it an M-matrix.
                let shift: Vec<f64> = gap
                    .iter()
                    .map(|&r| -self.gamma * self.heat.deriv(r))
                    .collect();
                let delta = self
                    .heat_op
                    .solve_shifted(&DualElement::new(grid, neg_f)?, Some(&shift))?;
                for (ti, di) in t.iter_mut().zip(delta.values()) {
                    *ti += di;
                }
                residual = self.residual(&t, uv);
                let t_inf = t.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if residual <= self.inner.tol && delta.max_abs() <= 1e-14 * (1.0 + t_inf) {
                    break;
                }
            }
        }
        if residual > self.inner.tol {
            return Err(QvixError::InnerSolve {
                iterations,
                residual,
                contraction: q,
            });
        }
        let t = NodalFunction::new(grid, t)?;
        let norm = t.v_norm();
        let bound = self.temperature_bound();
        if norm > bound + 1e-9 {
            return Err(QvixError::TemperatureBound { norm, bound });
        }
        Ok(TemperatureSolve {
            t,
            residual,
            iterations,
            used_newton,
        })
    }
}

impl ObstacleMap for ThermoformingMap {
    fn evaluate(&self, u: &NodalFunction) -> Result<NodalFunction> {
        let temp = self.temperature(u)?;
        Ok(&self.mould + &(&temp.t * self.gamma))
    }

    /// `Φ'(u)(h) = −γδ` with `(k − Δ)δ − g'(Φ(u) − u) γδ = g'(Φ(u) − u) h`.
    fn derivative(&self, u: &NodalFunction, h: &NodalFunction) -> Result<NodalFunction> {
        if u.grid() != h.grid() {
            return Err(QvixError::GridMismatch {
                left: u.len(),
                right: h.len(),
            });
        }
        let grid = *u.grid();
        let temp = self.temperature(u)?;
        let gap = self.gap(temp.t.values(), u.values());
        let gp: Vec<f64> = gap.iter().map(|&r| self.heat.deriv(r)).collect();
        let rhs: Vec<f64> = gp.iter().zip(h.values()).map(|(g, h)| g * h).collect();
        let shift: Vec<f64> = gp.iter().map(|g| -self.gamma * g).collect();
        let delta = self
            .heat_op
            .solve_shifted(&DualElement::new(grid, rhs)?, Some(&shift))?;
        Ok(&delta * (-self.gamma))
    }

    fn name(&self) -> &'static str {
        "thermoforming"
    }
}

// ---------------------------------------------------------------------------
// Handle

/// Closed set of the obstacle maps shipped with the crate.
#[derive(Clone, Debug)]
pub enum ObstacleMapHandle {
    Plateau(PlateauMap),
    InverseElliptic(InverseEllipticMap),
    Thermoforming(ThermoformingMap),
}

impl ObstacleMap for ObstacleMapHandle {
    fn evaluate(&self, u: &NodalFunction) -> Result<NodalFunction> {
        match self {
            Self::Plateau(m) => m.evaluate(u),
            Self::InverseElliptic(m) => m.evaluate(u),
            Self::Thermoforming(m) => m.evaluate(u),
        }
    }

    fn derivative(&self, u: &NodalFunction, h: &NodalFunction) -> Result<NodalFunction> {
        match self {
            Self::Plateau(m) => m.derivative(u, h),
            Self::InverseElliptic(m) => m.derivative(u, h),
            Self::Thermoforming(m) => m.derivative(u, h),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Plateau(m) => m.name(),
            Self::InverseElliptic(m) => m.name(),
            Self::Thermoforming(m) => m.name(),
        }
    }
}

// ---------------------------------------------------------------------------
// Structural checks

fn random_direction(grid: Grid, rng: &mut ChaCha8Rng) -> NodalFunction {
    loop {
        let v = NodalFunction::new(
            grid,
            (0..grid.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .expect("finite samples");
        let n = v.v_norm();
        if n > 1e-12 {
            return &v * (1.0 / n);
        }
    }
}

/// Sampled lower bound on the Lipschitz constant of `Φ` on the V-ball of
/// the given radius: the largest `‖Φ(u) − Φ(v)‖_V / ‖u − v‖_V` over
/// `n_samples` random pairs in the ball.
pub fn lipschitz_estimate(
    map: &dyn ObstacleMap,
    center: &NodalFunction,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(QvixError::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let grid = *center.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..n_samples {
        let u = center + &(&random_direction(grid, &mut rng) * (radius * rng.gen::<f64>()));
        let v = center + &(&random_direction(grid, &mut rng) * (radius * rng.gen::<f64>()));
        let du = (&u - &v).v_norm();
        if du <= 1e-14 {
            continue;
        }
        let dphi = (&map.evaluate(&u)? - &map.evaluate(&v)?).v_norm();
        worst = worst.max(dphi / du);
    }
    Ok(worst)
}

/// Samples ordered pairs `u ≤ v` with `u` uniform in `range` and checks
/// `Φ(u) ≤ Φ(v) + 1e-9`; also checks `Φ(0) ≥ −1e-9`.
pub fn check_increasing(
    map: &dyn ObstacleMap,
    grid: Grid,
    trials: usize,
    range: (f64, f64),
    seed: u64,
) -> Result<bool> {
    const TOL: f64 = 1e-9;
    if map.evaluate(&NodalFunction::zeros(grid))?.min_value() < -TOL {
        return Ok(false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = range;
    let n = grid.n_nodes();
    for _ in 0..trials {
        let u = NodalFunction::new(grid, (0..n).map(|_| rng.gen_range(lo..hi)).collect())?;
        let bump: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    rng.gen_range(0.0..(hi - lo))
                }
            })
            .collect();
        let v = &u + &NodalFunction::new(grid, bump)?;
        if !map.evaluate(&u)?.leq(&map.evaluate(&v)?, TOL)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Finite-difference consistency of the derivative action.
#[derive(Clone, Debug)]
pub struct DerivativeCheck {
    /// `(t, ‖(Φ(u + th) − Φ(u))/t − Φ'(u)(h)‖_V)`.
    pub errors: Vec<(f64, f64)>,
    /// Least-squares slope of `log error` against `log t`, over entries
    /// above round-off; `None` when fewer than two such entries exist.
    pub observed_order: Option<f64>,
}

pub fn derivative_fd_check(
    map: &dyn ObstacleMap,
    u: &NodalFunction,
    h: &NodalFunction,
    steps: &[f64],
) -> Result<DerivativeCheck> {
    let base = map.evaluate(u)?;
    let exact = map.derivative(u, h)?;
    let mut errors = Vec::with_capacity(steps.len());
    for &t in steps {
        let shifted = map.evaluate(&(u + &(h * t)))?;
        let quotient = &(&shifted - &base) * (1.0 / t);
        errors.push((t, (&quotient - &exact).v_norm()));
    }
    let floor = 1e-12 * (1.0 + base.v_norm());
    let observed_order = log_log_slope(
        errors
            .iter()
            .filter(|(t, e)| *e > floor / t)
            .copied(),
    );
    Ok(DerivativeCheck {
        errors,
        observed_order,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
