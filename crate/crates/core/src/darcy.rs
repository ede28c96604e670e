//! Steady Darcy flow `∇·q = 0, q = -k ∇p` for the advection field.
//!
//! Pressure is P1 with `p = p_in` on `x = 0` and `p = p_out` on `x = lx`, no
//! flux through the horizontal sides. The velocity is the exact gradient of the
//! discrete pressure, constant on each element.

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_operators, p1_gradients, DiffusionTensor, OperatorSet, ProblemSpec, ReducedSystem, ScalarField,
    Vector2, Velocity,
};
use crate::linalg::{LinearSolver, Method, SolverOptions};
use crate::mesh::{BoundaryKind, Mesh};
use crate::{rng, Error, Result};

/// Scalar permeability, one positive value per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityField {
    values: Vec<f64>,
}

/// How to generate a permeability field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PermeabilityModel {
    Constant { value: f64 },
    /// `lower` below `y = split`, `upper` above.
    Layered { lower: f64, upper: f64, split: f64 },
    /// `exp(mean + std * Z)` where `Z` is cellwise white noise box-smoothed over
    /// `(2 radius + 1)²` cells and renormalized to unit variance.
    Lognormal { mean: f64, std: f64, radius: usize, seed: u64 },
}

impl PermeabilityField {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some((e, k)) = values.iter().enumerate().find(|(_, k)| !(**k > 0.0 && k.is_finite())) {
            return Err(Error::invalid(format!("permeability must be positive, element {e} has {k}")));
        }
        Ok(Self { values })
    }

    pub fn constant(mesh: &Mesh, k: f64) -> Result<Self> {
        Self::from_values(vec![k; mesh.num_elements()])
    }

    pub fn generate(mesh: &Mesh, model: &PermeabilityModel) -> Result<Self> {
        match *model {
            PermeabilityModel::Constant { value } => Self::constant(mesh, value),
            PermeabilityModel::Layered { lower, upper, split } => Self::from_values(
                (0..mesh.num_elements()).map(|e| if mesh.centroid(e)[1] < split { lower } else { upper }).collect(),
            ),
            PermeabilityModel::Lognormal { mean, std, radius, seed } => lognormal(mesh, mean, std, radius, seed),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn on_element(&self, e: usize) -> f64 {
        self.values[e]
    }
}

fn lognormal(mesh: &Mesh, mean: f64, std: f64, radius: usize, seed: u64) -> Result<PermeabilityField> {
    if !(std >= 0.0 && std.is_finite() && mean.is_finite()) {
        return Err(Error::invalid("lognormal permeability needs finite mean and nonnegative std"));
    }
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let white: Vec<f64> = (0..nx * ny).map(|c| rng::normal(seed, 0, c as u64)).collect();
    let r = radius as isize;
    let mut smooth = vec![0.0; nx * ny];
    for cy in 0..ny as isize {
        for cx in 0..nx as isize {
            let mut s = 0.0;
            let mut count = 0usize;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && y >= 0 && x < nx as isize && y < ny as isize {
                        s += white[(y as usize) * nx + x as usize];
                        count += 1;
                    }
                }
            }
            // Sum of `count` unit normals has variance `count`.
            smooth[(cy as usize) * nx + cx as usize] = s / (count as f64).sqrt();
        }
    }
    // Elements come in pairs per cell, cell-major.
    let values = (0..mesh.num_elements()).map(|e| (mean + std * smooth[e / 2]).exp()).collect();
    PermeabilityField::from_values(values)
}

/// Piecewise constant velocity, one 2-vector per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityField {
    pub values: Vec<Vector2>,
}

impl VelocityField {
    pub fn max_speed(&self) -> f64 {
        self.values.iter().map(|q| q[0].hypot(q[1])).fold(0.0, f64::max)
    }

    pub fn into_velocity(self) -> Velocity {
        Velocity::PerElement(self.values)
    }
}

#[derive(Debug, Clone)]
pub struct DarcySolution {
    pub pressure: Vec<f64>,
    pub velocity: VelocityField,
    /// Pressure-problem operators (stiffness is the k-weighted Laplacian).
    pub operators: OperatorSet,
}

impl DarcySolution {
    /// Flow rate `-∫ q·∇ψ` for the test function `ψ` equal to one on grid
    /// columns `0..=column` and zero beyond, i.e. the mean flux crossing the
    /// strip between grid lines `column` and `column + 1`.
    pub fn column_flux(&self, mesh: &Mesh, column: usize) -> f64 {
        let psi: Vec<f64> = (0..mesh.num_nodes()).map(|k| if mesh.grid_position(k).0 <= column { 1.0 } else { 0.0 }).collect();
        let mut flux = 0.0;
        for (e, nodes) in mesh.elements().iter().enumerate() {
            let (area, g) = p1_gradients(&mesh.vertices(e));
            let q = self.velocity.values[e];
            for (a, &k) in nodes.iter().enumerate() {
                flux += area * psi[k] * (q[0] * g[a][0] + q[1] * g[a][1]);
            }
        }
        -flux
    }

    /// Inflow through `x = 0` from the reaction forces `(K p)_i` at the inflow
    /// Dirichlet nodes.
    pub fn inflow_reaction(&self, mesh: &Mesh) -> f64 {
        let kp = self.operators.stiffness.spmv(&self.pressure).expect("square system");
        (0..mesh.num_nodes()).filter(|&k| mesh.grid_position(k).0 == 0).map(|k| kp[k]).sum()
    }
}

/// Solves for pressure and velocity. The mesh must carry Dirichlet tags on the
/// vertical sides and Neumann tags on the horizontal ones.
pub fn solve_darcy(
    mesh: &Mesh,
    perm: &PermeabilityField,
    p_in: f64,
    p_out: f64,
    opts: &SolverOptions,
) -> Result<DarcySolution> {
    let layout = mesh.layout();
    if layout.left != BoundaryKind::Dirichlet
        || layout.right != BoundaryKind::Dirichlet
        || layout.bottom != BoundaryKind::Neumann
        || layout.top != BoundaryKind::Neumann
    {
        return Err(Error::Mesh("darcy needs dirichlet on x = 0 and x = lx, neumann on y = 0 and y = ly".into()));
    }
    if perm.values.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch { expected: mesh.num_elements(), got: perm.values.len() });
    }
    let spec = ProblemSpec {
        diffusion: DiffusionTensor::PerElement(perm.values.iter().map(|&k| [[k, 0.0], [0.0, k]]).collect()),
        dirichlet_data: ScalarField::new(move |p| if p[0] == 0.0 { p_in } else { p_out }),
        shift: Some(0.0),
        ..Default::default()
    };
    let ops = assemble_operators(mesh, &spec)?;
    let reduced = ReducedSystem::new(&ops, &ops.stiffness)?;
    let mut rhs = vec![0.0; mesh.num_nodes()];
    reduced.reduce_rhs(&mut rhs);
    let pressure = LinearSolver::new(reduced.matrix.clone(), Method::Spd, *opts)?.solve(&rhs, None)?;

    let values = mesh
        .elements()
        .iter()
        .enumerate()
        .map(|(e, nodes)| {
            let (_, g) = p1_gradients(&mesh.vertices(e));
            let k = perm.values[e];
            let mut grad = [0.0; 2];
            for (a, &n) in nodes.iter().enumerate() {
                grad[0] += pressure[n] * g[a][0];
                grad[1] += pressure[n] * g[a][1];
            }
            [-k * grad[0], -k * grad[1]]
        })
        .collect();
    Ok(DarcySolution { pressure, velocity: VelocityField { values }, operators: ops })
}
