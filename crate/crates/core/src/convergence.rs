//! Monte Carlo strong error estimation.
//!
//! Each realization draws one Brownian path on the reference grid; the test
//! levels are driven by exact dyadic sums of the same increments. The error at
//! level `ℓ` is the root mean square over realizations of
//! `||X_ref(T) - X_ℓ(T)||_{L²}`, and the order is the least-squares slope of
//! `log(error)` against `log(Δt)`.

use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_operators, l2_norm, OperatorSet, ProblemSpec, ScalarField};
use crate::linalg::SolverOptions;
use crate::mesh::{build_rectangle_mesh, Mesh};
use crate::noise::{sample_path, NoiseSpec, WienerPath};
use crate::stepper::{run_path, run_path_with};
use crate::{rng, Error, Result};

/// Fraction of realizations allowed to blow up before the experiment fails.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub mesh: Mesh,
    pub problem: ProblemSpec,
    pub noise: NoiseSpec,
    pub initial: ScalarField,
    pub t_final: f64,
    /// Steps of the reference run over `[0, t_final]`.
    pub reference_steps: usize,
    /// Steps of each test level; every entry must divide `reference_steps`
    /// by a power of two.
    pub level_steps: Vec<usize>,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub solver: SolverOptions,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid("final time must be positive"));
        }
        if self.n_realizations < 2 {
            return Err(Error::invalid("need at least two realizations"));
        }
        if self.reference_steps == 0 {
            return Err(Error::invalid("reference needs at least one step"));
        }
        for &s in &self.level_steps {
            if s == 0 || self.reference_steps % s != 0 || !(self.reference_steps / s).is_power_of_two() {
                return Err(Error::invalid(format!(
                    "level with {s} steps is not a dyadic coarsening of the {} reference steps",
                    self.reference_steps
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be at least 1"));
        }
        Ok(())
    }

    pub fn reference_dt(&self) -> f64 {
        self.t_final / self.reference_steps as f64
    }

    pub fn realization_seed(&self, r: usize) -> u64 {
        rng::derive_seed(self.master_seed, r as u64)
    }

    fn install<R: Send>(&self, job: impl FnOnce() -> R + Send) -> Result<R> {
        match self.workers {
            None => Ok(job()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?;
                Ok(pool.install(job))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Levels differ in time step on a fixed mesh.
    Time,
    /// Levels differ in mesh size at a fixed time step.
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    /// `Δt` for time sweeps, `h` for space sweeps.
    pub resolution: f64,
    /// Time steps (time sweep) or cells per axis (space sweep).
    pub size: usize,
    pub rms_error: f64,
    /// Sample standard deviation of the squared errors.
    pub sq_error_std: f64,
    pub n_effective: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub order: f64,
    pub stderr: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub sweep: SweepKind,
    /// Sorted by decreasing resolution.
    pub levels: Vec<LevelStats>,
    pub order: f64,
    pub order_stderr: f64,
    pub reference_resolution: f64,
    pub t_final: f64,
    pub n_realizations: usize,
    pub excluded: usize,
    pub master_seed: u64,
    pub realization_seeds: Vec<u64>,
    /// Errors nonincreasing under refinement, allowing one inversion.
    pub monotone: bool,
    pub version: String,
    pub wall_time_secs: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let col = match self.sweep {
            SweepKind::Time => "dt",
            SweepKind::Space => "h",
        };
        let mut out = format!("{col},rms_error,n_effective\n");
        for l in &self.levels {
            out.push_str(&format!("{:.17e},{:.17e},{}\n", l.resolution, l.rms_error, l.n_effective));
        }
        out
    }

    /// JSON document with an optional echo of the plan configuration.
    pub fn to_json(&self, plan_echo: Option<serde_json::Value>) -> String {
        let mut doc = serde_json::to_value(self).expect("report is serializable");
        if let Some(echo) = plan_echo {
            doc.as_object_mut().expect("report is an object").insert("plan".into(), echo);
        }
        serde_json::to_string_pretty(&doc).expect("report is serializable")
    }
}

/// Least-squares slope of `log(err)` against `log(resolution)` and its
/// standard error from the regression residuals.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("order fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(d, e)| !(*d > 0.0 && *e > 0.0 && d.is_finite() && e.is_finite())) {
        return Err(Error::invalid(format!("order fit needs positive finite data, got {p:?}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("order fit needs distinct resolutions"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - order * x).powi(2)).sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(OrderFit { order, stderr, intercept })
}

/// Errors sorted from coarse to fine are nonincreasing up to one inversion.
pub fn is_monotone(errors_coarse_to_fine: &[f64]) -> bool {
    errors_coarse_to_fine.windows(2).filter(|w| w[1] > w[0]).count() <= 1
}

/// Per-level strong error of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelError {
    pub dt: f64,
    pub rms: f64,
    /// `None` for excluded realizations.
    pub errors: Vec<Option<f64>>,
}

fn run_level(plan: &ExperimentPlan, ops: &OperatorSet, path: &WienerPath) -> Result<Vec<f64>> {
    Ok(run_path(&plan.mesh, ops, &plan.problem, path, path.steps, &plan.initial, &plan.solver)?.values)
}

/// Final-time errors of every requested level for realization `r`.
fn realization_errors(plan: &ExperimentPlan, ops: &OperatorSet, r: usize, levels: &[usize]) -> Result<Vec<f64>> {
    let fam = sample_path(&plan.noise, plan.realization_seed(r), plan.t_final, plan.reference_steps, levels)?;
    let reference = run_level(plan, ops, &fam.fine)?;
    fam.coarse
        .iter()
        .map(|path| {
            let x = run_level(plan, ops, path)?;
            let diff: Vec<f64> = reference.iter().zip(&x).map(|(a, b)| a - b).collect();
            l2_norm(&ops.mass, &diff)
        })
        .collect()
}

/// Runs all realizations, excluding those with numerical failures.
fn collect_errors(plan: &ExperimentPlan, ops: &OperatorSet, levels: &[usize]) -> Result<Vec<Option<Vec<f64>>>> {
    let outcomes: Vec<Result<Vec<f64>>> = plan.install(|| {
        (0..plan.n_realizations).into_par_iter().map(|r| realization_errors(plan, ops, r, levels)).collect()
    })?;
    let mut out = Vec::with_capacity(outcomes.len());
    let mut excluded = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(e) => out.push(Some(e)),
            Err(e) if e.is_numerical() => {
                warn!("realization {r} excluded: {e}");
                excluded += 1;
                out.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    check_exclusions(excluded, plan.n_realizations)?;
    Ok(out)
}

fn check_exclusions(excluded: usize, total: usize) -> Result<()> {
    if excluded as f64 > MAX_EXCLUDED_FRACTION * total as f64 {
        return Err(Error::Experiment(format!("{excluded} of {total} realizations blew up")));
    }
    Ok(())
}

fn level_stats(resolution: f64, size: usize, errors: impl Iterator<Item = f64>) -> LevelStats {
    let sq: Vec<f64> = errors.map(|e| e * e).collect();
    let n = sq.len();
    let mean = sq.iter().sum::<f64>() / n.max(1) as f64;
    let var = if n > 1 { sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    LevelStats { resolution, size, rms_error: mean.sqrt(), sq_error_std: var.sqrt(), n_effective: n }
}

/// Strong error at one level against the reference.
pub fn strong_error(plan: &ExperimentPlan, level_steps: usize) -> Result<LevelError> {
    let mut p = plan.clone();
    p.level_steps = vec![level_steps];
    p.validate()?;
    let ops = assemble_operators(&p.mesh, &p.problem)?;
    let per_real = collect_errors(&p, &ops, &[level_steps])?;
    let errors: Vec<Option<f64>> = per_real.iter().map(|o| o.as_ref().map(|e| e[0])).collect();
    let stats = level_stats(p.t_final / level_steps as f64, level_steps, errors.iter().flatten().copied());
    Ok(LevelError { dt: stats.resolution, rms: stats.rms_error, errors })
}

fn finish_report(
    plan: &ExperimentPlan,
    sweep: SweepKind,
    mut levels: Vec<LevelStats>,
    reference_resolution: f64,
    excluded: usize,
    start: Instant,
) -> Result<ConvergenceReport> {
    levels.sort_by(|a, b| b.resolution.partial_cmp(&a.resolution).expect("finite resolutions"));
    let points: Vec<(f64, f64)> = levels.iter().filter(|l| l.rms_error > 0.0).map(|l| (l.resolution, l.rms_error)).collect();
    let fit = fit_order(&points)?;
    let errs: Vec<f64> = levels.iter().map(|l| l.rms_error).collect();
    Ok(ConvergenceReport {
        sweep,
        monotone: is_monotone(&errs),
        levels,
        order: fit.order,
        order_stderr: fit.stderr,
        reference_resolution,
        t_final: plan.t_final,
        n_realizations: plan.n_realizations,
        excluded,
        master_seed: plan.master_seed,
        realization_seeds: (0..plan.n_realizations).map(|r| plan.realization_seed(r)).collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Full time sweep: every level against the reference, order fitted over the
/// levels.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ConvergenceReport> {
    let start = Instant::now();
    plan.validate()?;
    if plan.level_steps.len() < 3 {
        return Err(Error::invalid("a convergence sweep needs at least 3 levels"));
    }
    let ops = assemble_operators(&plan.mesh, &plan.problem)?;
    let per_real = collect_errors(plan, &ops, &plan.level_steps)?;
    let excluded = per_real.iter().filter(|o| o.is_none()).count();
    let levels = plan
        .level_steps
        .iter()
        .enumerate()
        .map(|(l, &steps)| {
            level_stats(plan.t_final / steps as f64, steps, per_real.iter().flatten().map(|e| e[l]))
        })
        .collect();
    finish_report(plan, SweepKind::Time, levels, plan.reference_dt(), excluded, start)
}

/// Value at `p` of the P1 function with nodal values `u` on a structured
/// rectangle mesh.
pub fn evaluate_p1(mesh: &Mesh, u: &[f64], p: [f64; 2]) -> f64 {
    let hx = mesh.lx() / mesh.nx() as f64;
    let hy = mesh.ly() / mesh.ny() as f64;
    let cx = ((p[0] / hx).floor() as usize).min(mesh.nx() - 1);
    let cy = ((p[1] / hy).floor() as usize).min(mesh.ny() - 1);
    let (x0, y0) = (mesh.node(mesh.node_index(cx, cy))[0], mesh.node(mesh.node_index(cx, cy))[1]);
    let s = ((p[0] - x0) / hx).clamp(0.0, 1.0);
    let t = ((p[1] - y0) / hy).clamp(0.0, 1.0);
    let a = u[mesh.node_index(cx, cy)];
    let b = u[mesh.node_index(cx + 1, cy)];
    let c = u[mesh.node_index(cx + 1, cy + 1)];
    let d = u[mesh.node_index(cx, cy + 1)];
    if s >= t {
        // Triangle (a, b, c) below the diagonal.
        a + s * (b - a) + t * (c - b)
    } else {
        a + s * (c - d) + t * (d - a)
    }
}

/// Space sweep: the plan's mesh template is re-meshed with `cells` cells per
/// axis (scaled by its aspect), runs share each realization's Brownian path at
/// `plan.reference_steps` steps, and errors are measured on the mesh with
/// `reference_cells` cells after interpolating each level onto it.
pub fn run_h_sweep(plan: &ExperimentPlan, cells: &[usize], reference_cells: usize) -> Result<ConvergenceReport> {
    let start = Instant::now();
    plan.validate()?;
    if cells.len() < 3 {
        return Err(Error::invalid("a convergence sweep needs at least 3 levels"));
    }
    let aspect = plan.mesh.ny() as f64 / plan.mesh.nx() as f64;
    let make = |n: usize| {
        let ny = ((n as f64 * aspect).round() as usize).max(1);
        build_rectangle_mesh(plan.mesh.lx(), plan.mesh.ly(), n, ny, plan.mesh.layout())
    };
    let ref_mesh = make(reference_cells)?;
    let ref_ops = assemble_operators(&ref_mesh, &plan.problem)?;
    let meshes: Vec<(Mesh, OperatorSet)> = cells
        .iter()
        .map(|&n| {
            let m = make(n)?;
            let ops = assemble_operators(&m, &plan.problem)?;
            Ok((m, ops))
        })
        .collect::<Result<_>>()?;

    let run = |mesh: &Mesh, ops: &OperatorSet, path: &WienerPath| {
        run_path_with(mesh, ops, &plan.problem, Some(path), path.dt, path.steps, &plan.initial, &plan.solver, |_| {})
            .map(|s| s.values)
    };
    let outcomes: Vec<Result<Vec<f64>>> = plan.install(|| {
        (0..plan.n_realizations)
            .into_par_iter()
            .map(|r| {
                let fam = sample_path(&plan.noise, plan.realization_seed(r), plan.t_final, plan.reference_steps, &[])?;
                let reference = run(&ref_mesh, &ref_ops, &fam.fine)?;
                meshes
                    .iter()
                    .map(|(m, ops)| {
                        let x = run(m, ops, &fam.fine)?;
                        let diff: Vec<f64> = ref_mesh
                            .nodes()
                            .iter()
                            .zip(&reference)
                            .map(|(p, r)| r - evaluate_p1(m, &x, *p))
                            .collect();
                        l2_norm(&ref_ops.mass, &diff)
                    })
                    .collect()
            })
            .collect()
    })?;
    let mut per_real = Vec::new();
    let mut excluded = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(e) => per_real.push(e),
            Err(e) if e.is_numerical() => {
                warn!("realization {r} excluded: {e}");
                excluded += 1;
            }
            Err(e) => return Err(e),
        }
    }
    check_exclusions(excluded, plan.n_realizations)?;
    let levels = meshes
        .iter()
        .enumerate()
        .map(|(l, (m, _))| level_stats(m.h(), cells[l], per_real.iter().map(|e| e[l])))
        .collect();
    finish_report(plan, SweepKind::Space, levels, ref_mesh.h(), excluded, start)
}
