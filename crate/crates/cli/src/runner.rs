//! Executes the extremal and sensitivity pipelines for a configuration.

use log::{info, warn};
use qvix_core::extremal::{solve_extremal, Extremal, ExtremalOptions, IntervalBracket};
use qvix_core::obstacle::{lipschitz_estimate, ObstacleMap, ObstacleMapHandle};
use qvix_core::sensitivity::{
    build_cone, fd_validate, solve_derivative_qvi, DerivativeOptions, FdEntry, FdOptions,
};
use qvix_core::vi::{classify_active, oracle_vi, ActiveTolerances, NodeClass};
use qvix_core::{IterationRecord, NodalFunction, QvixError};
use serde::Serialize;

use crate::config::{ExperimentConfig, MapConfig, Problem};

/// Radius of the V-ball sampled for the Lipschitz estimate.
pub const LIPSCHITZ_RADIUS: f64 = 0.05;
pub const LIPSCHITZ_SAMPLES: usize = 64;
pub const HOMOGENEITY_FACTORS: [f64; 2] = [2.0, 10.0];
pub const HOMOGENEITY_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionRow {
    pub x: f64,
    pub u: f64,
    pub phi_u: f64,
    pub lambda: f64,
    pub class: char,
}

#[derive(Clone, Debug, Serialize)]
pub struct TemperatureSummary {
    pub vnorm: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub contraction_factor: f64,
    pub residual: f64,
    pub used_newton: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtremalSummary {
    pub which: Extremal,
    pub n_iters: usize,
    pub final_step_vnorm: f64,
    pub qvi_residual: f64,
    pub monotone: bool,
    pub tail_contraction: Option<f64>,
    pub inside_bracket: bool,
    pub solution_vnorm: f64,
    pub solution_min: f64,
    pub solution_max: f64,
    pub n_inactive: usize,
    pub n_biactive: usize,
    pub n_strict: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<TemperatureSummary>,
}

#[derive(Clone, Debug)]
pub struct ExtremalArtifact {
    pub which: Extremal,
    pub records: Vec<IterationRecord>,
    pub rows: Vec<SolutionRow>,
    pub solution: NodalFunction,
    pub summary: ExtremalSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct HomogeneityEntry {
    pub factor: f64,
    pub error_vnorm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SensitivitySummary {
    pub which: Extremal,
    pub alpha_vnorm: f64,
    pub alpha_max_abs: f64,
    pub derivative_residual: f64,
    pub alpha_iterations: usize,
    pub monotone: bool,
    pub fd_table: Vec<FdEntry>,
    pub observed_order: Option<f64>,
    pub decreasing: bool,
    pub fd_tol: f64,
    pub final_error: f64,
    pub within_tol: bool,
    pub biactive_warning: bool,
    pub homogeneity: Vec<HomogeneityEntry>,
}

#[derive(Clone, Debug)]
pub struct SensitivityArtifact {
    pub which: Extremal,
    pub table: Vec<FdEntry>,
    /// `(x, α)`.
    pub alpha: Vec<(f64, f64)>,
    pub summary: SensitivitySummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzSummary {
    pub center: Extremal,
    pub radius: f64,
    pub samples: usize,
    pub estimate: f64,
    pub below_threshold: bool,
}

/// `min Φ₀ > 1 + K ‖f‖_{V*} / C_a`, under which the thermoforming map is
/// locally constant around the minimal solution.
#[derive(Clone, Debug, Serialize)]
pub struct MouldCondition {
    pub mould_min: f64,
    pub required: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Constants {
    pub coercivity: f64,
    pub boundedness: f64,
    /// `C_a / (C_a + C_b)`.
    pub lipschitz_threshold: f64,
    pub embedding_constant: f64,
    pub forcing_dual_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<LipschitzSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mould_condition: Option<MouldCondition>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub version: u32,
    pub map_kind: &'static str,
    pub n_nodes: usize,
    pub interval: [f64; 2],
    pub seed: u64,
    pub constants: Constants,
    pub extremal: Vec<ExtremalSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivitySummary>,
    pub checks: Vec<Check>,
    pub failures: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub extremal: Vec<ExtremalArtifact>,
    pub sensitivity: Option<SensitivityArtifact>,
    pub summary: Summary,
}

struct Recorder {
    checks: Vec<Check>,
    failures: Vec<String>,
}

impl Recorder {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        let check = Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        };
        if !passed {
            warn!("check {} failed {}", check.name, check.detail);
        }
        self.checks.push(check);
    }

    fn fail(&mut self, stage: &str, err: &QvixError) {
        let msg = format!("{stage}: {err}");
        warn!("{msg}");
        self.failures.push(msg);
        self.check(stage, false, err.to_string());
    }
}

/// Lower bound `A⁻¹ min(f, 0)` (zero for `f ≥ 0`) and upper bound
/// `A⁻¹(f + d⁺)`.
pub fn build_bracket(problem: &Problem) -> qvix_core::Result<IntervalBracket> {
    let neg = problem.forcing.map(|v| v.min(0.0));
    let lower = if neg.values().iter().all(|&v| v == 0.0) {
        NodalFunction::zeros(problem.grid)
    } else {
        problem.op.solve(&neg)?
    };
    let upper = problem
        .op
        .solve(&(&problem.forcing + &problem.direction.positive_part()))?;
    IntervalBracket::new(lower, upper)
}

pub fn solution_rows(
    problem: &Problem,
    u: &NodalFunction,
) -> qvix_core::Result<(Vec<SolutionRow>, NodalFunction, [usize; 3])> {
    let phi = problem.map.evaluate(u)?;
    let tols = ActiveTolerances::scaled(&problem.forcing, &phi);
    let partition = classify_active(&problem.op, &problem.forcing, u, &phi, &tols)?;
    let lambda = &problem.forcing - &problem.op.apply(u)?;
    let rows = problem
        .grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| SolutionRow {
            x,
            u: u.values()[i],
            phi_u: phi.values()[i],
            lambda: lambda.values()[i],
            class: partition.classes()[i].code(),
        })
        .collect();
    let counts = [
        partition.count(NodeClass::Inactive),
        partition.count(NodeClass::Biactive),
        partition.count(NodeClass::Strict),
    ];
    Ok((rows, phi, counts))
}

fn temperature_summary(
    map: &ObstacleMapHandle,
    u: &NodalFunction,
) -> qvix_core::Result<Option<TemperatureSummary>> {
    let ObstacleMapHandle::Thermoforming(t) = map else {
        return Ok(None);
    };
    let temp = t.temperature(u)?;
    let vnorm = temp.t.v_norm();
    let bound = t.temperature_bound();
    Ok(Some(TemperatureSummary {
        vnorm,
        bound,
        within_bound: vnorm <= bound + 1e-9,
        contraction_factor: t.contraction_factor(),
        residual: temp.residual,
        used_newton: temp.used_newton,
    }))
}

fn run_extremal(
    problem: &Problem,
    bracket: &IntervalBracket,
    which: Extremal,
    rec: &mut Recorder,
) -> Option<ExtremalArtifact> {
    let opts = ExtremalOptions::default();
    let label = which.label();
    let report = match solve_extremal(
        &problem.op,
        &problem.forcing,
        &problem.map,
        bracket,
        which,
        &opts,
    ) {
        Ok(r) => r,
        Err(e) => {
            rec.fail(&format!("{label}_solve"), &e);
            return None;
        }
    };
    info!(
        "{label} solution after {} iterations, residual {:.3e}",
        report.n_iters, report.qvi_residual
    );
    let (rows, _, counts) = match solution_rows(problem, &report.solution) {
        Ok(v) => v,
        Err(e) => {
            rec.fail(&format!("{label}_classify"), &e);
            return None;
        }
    };
    let temperature = match temperature_summary(&problem.map, &report.solution) {
        Ok(t) => t,
        Err(e) => {
            rec.fail(&format!("{label}_temperature"), &e);
            None
        }
    };
    let monotone = report.records.iter().all(|r| r.min_node_delta >= -1e-10);
    let inside = bracket
        .contains(&report.solution, 1e-9 * (1.0 + report.solution.max_abs()))
        .unwrap_or(false);
    rec.check(format!("{label}_monotone"), monotone, "");
    rec.check(
        format!("{label}_residual"),
        report.qvi_residual <= 1e-8,
        format!("{:.3e}", report.qvi_residual),
    );
    rec.check(format!("{label}_inside_bracket"), inside, "");
    if let Some(t) = &temperature {
        rec.check(
            format!("{label}_temperature_bound"),
            t.within_bound,
            format!("{:.6e} <= {:.6e}", t.vnorm, t.bound),
        );
    }
    let summary = ExtremalSummary {
        which,
        n_iters: report.n_iters,
        final_step_vnorm: report.final_step_vnorm,
        qvi_residual: report.qvi_residual,
        monotone,
        tail_contraction: report.tail_contraction,
        inside_bracket: inside,
        solution_vnorm: report.solution.v_norm(),
        solution_min: report.solution.min_value(),
        solution_max: report.solution.max_value(),
        n_inactive: counts[0],
        n_biactive: counts[1],
        n_strict: counts[2],
        temperature,
    };
    Some(ExtremalArtifact {
        which,
        records: report.records,
        rows,
        solution: report.solution,
        summary,
    })
}

fn run_sensitivity(
    cfg: &ExperimentConfig,
    problem: &Problem,
    bracket: &IntervalBracket,
    which: Extremal,
    rec: &mut Recorder,
) -> Option<SensitivityArtifact> {
    let opts = FdOptions {
        fd_tol: cfg.sensitivity.fd_tol,
        ..FdOptions::default()
    };
    let report = match fd_validate(
        &problem.op,
        &problem.forcing,
        &problem.direction,
        &problem.map,
        bracket,
        which,
        &cfg.sensitivity.s_list,
        &opts,
    ) {
        Ok(r) => r,
        Err(e) => {
            rec.fail("sensitivity", &e);
            return None;
        }
    };

    let mut homogeneity = Vec::new();
    match build_cone(
        &problem.op,
        &problem.forcing,
        &problem.map,
        &report.base,
        which,
    ) {
        Ok(cone) => {
            for c in HOMOGENEITY_FACTORS {
                let scaled = &problem.direction * c;
                match solve_derivative_qvi(&problem.op, &cone, &scaled, &DerivativeOptions::default())
                {
                    Ok(s) => homogeneity.push(HomogeneityEntry {
                        factor: c,
                        error_vnorm: (&s.alpha - &(&report.alpha * c)).v_norm(),
                    }),
                    Err(e) => rec.fail(&format!("homogeneity_x{c}"), &e),
                }
            }
        }
        Err(e) => rec.fail("homogeneity_cone", &e),
    }

    rec.check(
        "derivative_residual",
        report.derivative_residual <= 1e-9,
        format!("{:.3e}", report.derivative_residual),
    );
    rec.check("alpha_monotone", report.monotone, "");
    rec.check(
        "fd_within_tol",
        report.within_tol,
        format!("{:.3e} <= {:.3e}", report.final_error(), report.fd_tol),
    );
    if report.biactive_warning {
        rec.check(
            "fd_decreasing",
            true,
            if report.decreasing {
                "biactive nodes present"
            } else {
                "not decreasing; biactive nodes present, reported only"
            },
        );
    } else {
        rec.check("fd_decreasing", report.decreasing, "");
    }
    for h in &homogeneity {
        rec.check(
            format!("positive_homogeneity_x{}", h.factor),
            h.error_vnorm <= HOMOGENEITY_TOL,
            format!("{:.3e}", h.error_vnorm),
        );
    }

    let alpha = problem
        .grid
        .nodes()
        .into_iter()
        .zip(report.alpha.values().iter().copied())
        .collect();
    let summary = SensitivitySummary {
        which,
        alpha_vnorm: report.alpha.v_norm(),
        alpha_max_abs: report.alpha.max_abs(),
        derivative_residual: report.derivative_residual,
        alpha_iterations: report.alpha_iterates.len(),
        monotone: report.monotone,
        fd_table: report.fd_table.clone(),
        observed_order: report.observed_order,
        decreasing: report.decreasing,
        fd_tol: report.fd_tol,
        final_error: report.final_error(),
        within_tol: report.within_tol,
        biactive_warning: report.biactive_warning,
        homogeneity,
    };
    Some(SensitivityArtifact {
        which,
        table: report.fd_table,
        alpha,
        summary,
    })
}

fn constants(
    problem: &Problem,
    cfg: &ExperimentConfig,
    center: Option<(Extremal, &NodalFunction)>,
    seed: u64,
    rec: &mut Recorder,
) -> Constants {
    let ca = problem.op.coercivity();
    let cb = problem.op.boundedness();
    let threshold = ca / (ca + cb);
    let k = problem.grid.linf_embedding_constant();
    let fnorm = problem.forcing.dual_norm();
    let lipschitz = center.and_then(|(which, u)| {
        match lipschitz_estimate(&problem.map, u, LIPSCHITZ_RADIUS, LIPSCHITZ_SAMPLES, seed) {
            Ok(estimate) => Some(LipschitzSummary {
                center: which,
                radius: LIPSCHITZ_RADIUS,
                samples: LIPSCHITZ_SAMPLES,
                estimate,
                below_threshold: estimate < threshold,
            }),
            Err(e) => {
                rec.fail("lipschitz_estimate", &e);
                None
            }
        }
    });
    let mould_condition = match (&cfg.map, &problem.map) {
        (MapConfig::Thermoforming { .. }, ObstacleMapHandle::Thermoforming(t)) => {
            let mould_min = t.mould().min_value();
            let required = 1.0 + k * fnorm / ca;
            Some(MouldCondition {
                mould_min,
                required,
                holds: mould_min > required,
            })
        }
        _ => None,
    };
    Constants {
        coercivity: ca,
        boundedness: cb,
        lipschitz_threshold: threshold,
        embedding_constant: k,
        forcing_dual_norm: fnorm,
        lipschitz,
        mould_condition,
    }
}

/// Runs every pipeline the configuration asks for. Solver failures are
/// recorded in the summary; the artifacts of the stages that completed are
/// kept.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<RunArtifacts> {
    let problem = cfg.validate()?;
    let mut rec = Recorder {
        checks: Vec::new(),
        failures: Vec::new(),
    };

    let bracket = match build_bracket(&problem) {
        Ok(b) => Some(b),
        Err(e) => {
            rec.fail("bracket", &e);
            None
        }
    };
    let bracket = bracket.and_then(|b| {
        let vi = qvix_core::SolverOptions::default();
        match b.validate(&problem.op, &problem.forcing, &problem.map, &vi) {
            Ok(()) => {
                rec.check("bracket", true, "");
                Some(b)
            }
            Err(e) => {
                rec.fail("bracket", &e);
                None
            }
        }
    });

    let mut extremal = Vec::new();
    let mut sensitivity = None;
    if let Some(bracket) = &bracket {
        for which in cfg.run.extremals() {
            if let Some(a) = run_extremal(&problem, bracket, which, &mut rec) {
                extremal.push(a);
            }
        }
        if let Some(which) = cfg.sensitivity_target() {
            sensitivity = run_sensitivity(cfg, &problem, bracket, which, &mut rec);
        }
    }

    let center = extremal.first().map(|a| (a.which, &a.solution));
    let constants = constants(&problem, cfg, center, seed, &mut rec);
    let passed = rec.failures.is_empty() && rec.checks.iter().all(|c| c.passed);
    let summary = Summary {
        version: cfg.version,
        map_kind: cfg.map.kind(),
        n_nodes: problem.grid.n_nodes(),
        interval: cfg.grid.interval,
        seed,
        constants,
        extremal: extremal.iter().map(|a| a.summary.clone()).collect(),
        sensitivity: sensitivity.as_ref().map(|s| s.summary.clone()),
        checks: rec.checks,
        failures: rec.failures,
        passed,
    };
    Ok(RunArtifacts {
        extremal,
        sensitivity,
        summary,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub which: Extremal,
    pub vi_solves_checked: usize,
    pub max_discrepancy: f64,
    pub passed: bool,
}

/// Repeats every VI solve of the extremal iterations with the enumeration
/// oracle and compares the results.
pub fn run_oracle(cfg: &ExperimentConfig) -> anyhow::Result<Vec<OracleCheck>> {
    let problem = cfg.validate()?;
    let n = problem.grid.n_nodes();
    if n > qvix_core::vi::ORACLE_MAX_NODES {
        anyhow::bail!(
            "oracle mode needs at most {} nodes, the config has {n}",
            qvix_core::vi::ORACLE_MAX_NODES
        );
    }
    let bracket = build_bracket(&problem)?;
    let opts = ExtremalOptions::default();
    let mut out = Vec::new();
    for which in cfg.run.extremals() {
        let report = solve_extremal(&problem.op, &problem.forcing, &problem.map, &bracket, which, &opts)?;
        let mut worst = 0.0_f64;
        let mut count = 0;
        let mut iterates = report.iterates.clone();
        iterates.push(report.solution.clone());
        for pair in iterates.windows(2) {
            let phi = problem.map.evaluate(&pair[0])?;
            let oracle = oracle_vi(&problem.op, &problem.forcing, &phi)?;
            worst = worst.max((&oracle.u - &pair[1]).max_abs());
            count += 1;
        }
        out.push(OracleCheck {
            which,
            vi_solves_checked: count,
            max_discrepancy: worst,
            passed: worst <= ORACLE_TOL,
        });
    }
    Ok(out)
}
