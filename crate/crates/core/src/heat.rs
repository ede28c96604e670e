//! Deterministic benchmark: the heat equation on the unit square with
//! homogeneous Dirichlet data and `X₀ = sin(πx) sin(πy)`, whose exact solution
//! is `exp(-2π² t) X₀`.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_operators, l2_norm, ProblemSpec, ScalarField};
use crate::convergence::{fit_order, OrderFit};
use crate::linalg::SolverOptions;
use crate::mesh::{build_rectangle_mesh, BoundaryLayout};
use crate::stepper::run_deterministic;
use crate::Result;

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatBenchmark {
    /// Cells per axis of the spatial sweep.
    pub spatial_cells: Vec<usize>,
    pub spatial_t_final: f64,
    pub spatial_steps: usize,
    /// Step counts of the temporal sweep.
    pub temporal_steps: Vec<usize>,
    pub temporal_t_final: f64,
    pub temporal_cells: usize,
}

impl Default for HeatBenchmark {
    fn default() -> Self {
        Self {
            spatial_cells: vec![4, 8, 16, 32],
            spatial_t_final: 0.01,
            spatial_steps: 2000,
            temporal_steps: vec![1, 2, 4, 8, 16],
            temporal_t_final: 0.125,
            temporal_cells: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatResult {
    /// `(h, L² error)` per spatial level.
    pub spatial: Vec<(f64, f64)>,
    pub spatial_fit: OrderFit,
    /// `(Δt, L² error)` per temporal level.
    pub temporal: Vec<(f64, f64)>,
    pub temporal_fit: OrderFit,
    /// Max nodal deviation when a constant is evolved with no-flux boundaries.
    pub constant_error: f64,
}

pub fn initial_condition() -> ScalarField {
    ScalarField::new(|p| (PI * p[0]).sin() * (PI * p[1]).sin())
}

/// `||X_h(T) - exp(-2π² T) X₀||` on an `n x n` mesh.
pub fn heat_error(cells: usize, t_final: f64, steps: usize, opts: &SolverOptions) -> Result<(f64, f64)> {
    let mesh = build_rectangle_mesh(1.0, 1.0, cells, cells, BoundaryLayout::all_dirichlet())?;
    let spec = ProblemSpec::default();
    let ops = assemble_operators(&mesh, &spec)?;
    let state = run_deterministic(&mesh, &ops, &spec, &initial_condition(), t_final / steps as f64, steps, opts)?;
    let decay = (-2.0 * PI * PI * t_final).exp();
    let diff: Vec<f64> = mesh
        .nodes()
        .iter()
        .zip(&state.values)
        .map(|(p, v)| v - decay * (PI * p[0]).sin() * (PI * p[1]).sin())
        .collect();
    Ok((mesh.h(), l2_norm(&ops.mass, &diff)?))
}

fn constant_error(opts: &SolverOptions) -> Result<f64> {
    let mesh = build_rectangle_mesh(1.0, 1.0, 8, 8, BoundaryLayout::all_neumann())?;
    let spec = ProblemSpec::default();
    let ops = assemble_operators(&mesh, &spec)?;
    let c = 0.75;
    let state = run_deterministic(&mesh, &ops, &spec, &ScalarField::constant(c), 0.1, 10, opts)?;
    Ok(state.values.iter().map(|v| (v - c).abs()).fold(0.0, f64::max))
}

impl HeatBenchmark {
    pub fn run(&self, opts: &SolverOptions) -> Result<HeatResult> {
        let spatial = self
            .spatial_cells
            .iter()
            .map(|&n| heat_error(n, self.spatial_t_final, self.spatial_steps, opts))
            .collect::<Result<Vec<_>>>()?;
        let temporal = self
            .temporal_steps
            .iter()
            .map(|&m| {
                heat_error(self.temporal_cells, self.temporal_t_final, m, opts).map(|(_, e)| (self.temporal_t_final / m as f64, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HeatResult {
            spatial_fit: fit_order(&spatial)?,
            temporal_fit: fit_order(&temporal)?,
            spatial,
            temporal,
            constant_error: constant_error(opts)?,
        })
    }
}
