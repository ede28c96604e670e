//! Linear implicit Euler in time:
//!
//! ```text
//! (M + Δt K) X_{m+1} = M X_m + Δt b_F(X_m) + b_W(X_m, ΔW_m)
//! ```
//!
//! `K` is the shifted operator matrix and `b_F` the load of `f(x, X_m) + c₀ X_m`:
//! nodal quadrature for `f` and the exact Galerkin load `c₀ M X_m` for the
//! shift. `b_W = M g` is the Galerkin load of the P1 interpolant `g` of the
//! nodal products `b(x_k, X_m(x_k)) ΔW_m(x_k)` (multiplicative) or
//! `φ(t_m) ΔW_m(x_k)` (additive). Drift and noise are explicit, so each step is
//! a single linear solve with a fixed matrix.

use crate::assembly::{project_l2, NoiseTerm, OperatorSet, ProblemSpec, ReducedSystem, ScalarField};
use crate::linalg::{LinearSolver, Method, SolverOptions};
use crate::mesh::Mesh;
use crate::noise::{NoiseEvaluator, WienerPath};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    /// Nodal coefficients of `X^h_m`.
    pub values: Vec<f64>,
}

/// `X^h_0 = P_h X_0`, with Dirichlet nodes set to `g_D`.
pub fn initial_state(mesh: &Mesh, ops: &OperatorSet, x0: &ScalarField, dt: f64, opts: &SolverOptions) -> Result<SchemeState> {
    let mut values = project_l2(mesh, &ops.mass, x0, opts)?;
    ops.impose_dirichlet(&mut values);
    Ok(SchemeState { step: 0, time: 0.0, dt, values })
}

/// A time step size bound to its factorized (or preconditioned) system.
#[derive(Debug)]
pub struct Stepper<'a> {
    mesh: &'a Mesh,
    ops: &'a OperatorSet,
    spec: &'a ProblemSpec,
    dt: f64,
    system: ReducedSystem,
    solver: LinearSolver,
}

impl<'a> Stepper<'a> {
    pub fn new(mesh: &'a Mesh, ops: &'a OperatorSet, spec: &'a ProblemSpec, dt: f64, opts: &SolverOptions) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if ops.num_nodes() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: ops.num_nodes() });
        }
        let matrix = ops.mass.linear_combination(1.0, &ops.stiffness, dt)?;
        let system = ReducedSystem::new(ops, &matrix)?;
        let solver = LinearSolver::new(system.matrix.clone(), Method::General, *opts)?;
        Ok(Self { mesh, ops, spec, dt, system, solver })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances one step. `dw` holds nodal noise increments and is required
    /// whenever the problem has a noise term.
    pub fn step(&self, state: &SchemeState, dw: Option<&[f64]>) -> Result<SchemeState> {
        let n = self.mesh.num_nodes();
        let x = &state.values;
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        let mut rhs = self.ops.mass.spmv(x)?;
        let w = &self.ops.weights;
        let nodes = self.mesh.nodes();
        let c0 = self.ops.shift;

        if c0 != 0.0 {
            let scale = 1.0 + self.dt * c0;
            rhs.iter_mut().for_each(|r| *r *= scale);
        }
        if !self.spec.drift.is_zero() {
            for k in 0..n {
                if !self.ops.is_dirichlet[k] {
                    rhs[k] += self.dt * (w[k] * self.spec.drift.eval(nodes[k], x[k]));
                }
            }
        }

        let noise: Option<Vec<f64>> = match (&self.spec.noise, dw) {
            (NoiseTerm::None, _) => None,
            (_, None) => return Err(Error::invalid("noise increment required for a stochastic problem")),
            (_, Some(dw)) if dw.len() != n => return Err(Error::DimensionMismatch { expected: n, got: dw.len() }),
            (NoiseTerm::Multiplicative(b), Some(dw)) => Some((0..n).map(|k| b(nodes[k], x[k]) * dw[k]).collect()),
            (NoiseTerm::Additive(phi), Some(dw)) => {
                let amp = phi(state.time);
                Some(dw.iter().map(|d| amp * d).collect())
            }
        };
        if let Some(g) = noise {
            let load = self.ops.mass.spmv(&g)?;
            for k in 0..n {
                if !self.ops.is_dirichlet[k] {
                    rhs[k] += load[k];
                }
            }
        }

        self.solve(state, rhs)
    }

    /// Applies `S_{h,Δt} = (M + Δt K)⁻¹ M` alone: no drift, shift or noise loads.
    pub fn propagate(&self, state: &SchemeState) -> Result<SchemeState> {
        let rhs = self.ops.mass.spmv(&state.values)?;
        self.solve(state, rhs)
    }

    fn solve(&self, state: &SchemeState, mut rhs: Vec<f64>) -> Result<SchemeState> {
        let next = state.step + 1;
        self.system.reduce_rhs(&mut rhs);
        let values = self
            .solver
            .solve(&rhs, Some(&state.values))
            .map_err(|e| Error::StepSolve { step: next, source: Box::new(e) })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { step: next });
        }
        Ok(SchemeState { step: next, time: next as f64 * self.dt, dt: self.dt, values })
    }
}

/// Runs `steps` steps driven by `path`, starting from `P_h X_0`. `observe` is
/// called on the initial state and after every step.
#[allow(clippy::too_many_arguments)]
pub fn run_path_with(
    mesh: &Mesh,
    ops: &OperatorSet,
    spec: &ProblemSpec,
    path: Option<&WienerPath>,
    dt: f64,
    steps: usize,
    x0: &ScalarField,
    opts: &SolverOptions,
    mut observe: impl FnMut(&SchemeState),
) -> Result<SchemeState> {
    let dt = match path {
        Some(p) => {
            if p.steps < steps {
                return Err(Error::invalid(format!("path has {} steps, {steps} requested", p.steps)));
            }
            p.dt
        }
        None => dt,
    };
    let mut state = initial_state(mesh, ops, x0, dt, opts)?;
    observe(&state);
    if steps == 0 {
        return Ok(state);
    }
    let stepper = Stepper::new(mesh, ops, spec, dt, opts)?;
    let evaluator = match (path, spec.noise.is_none()) {
        (Some(p), false) => Some(NoiseEvaluator::new(&p.spec, mesh)?),
        (None, false) => return Err(Error::invalid("stochastic problem needs a Wiener path")),
        _ => None,
    };
    let mut dw = vec![0.0; mesh.num_nodes()];
    for m in 0..steps {
        let field = match (&evaluator, path) {
            (Some(ev), Some(p)) => {
                ev.evaluate_into(p.increment(m), &mut dw);
                Some(dw.as_slice())
            }
            _ => None,
        };
        state = stepper.step(&state, field)?;
        observe(&state);
    }
    Ok(state)
}

/// Runs `steps` steps of the path's own step size from `P_h X_0`.
pub fn run_path(
    mesh: &Mesh,
    ops: &OperatorSet,
    spec: &ProblemSpec,
    path: &WienerPath,
    steps: usize,
    x0: &ScalarField,
    opts: &SolverOptions,
) -> Result<SchemeState> {
    run_path_with(mesh, ops, spec, Some(path), path.dt, steps, x0, opts, |_| {})
}

/// Noise-free run with step `dt`.
pub fn run_deterministic(
    mesh: &Mesh,
    ops: &OperatorSet,
    spec: &ProblemSpec,
    x0: &ScalarField,
    dt: f64,
    steps: usize,
    opts: &SolverOptions,
) -> Result<SchemeState> {
    run_path_with(mesh, ops, spec, None, dt, steps, x0, opts, |_| {})
}
