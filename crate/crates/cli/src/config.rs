//! TOML run configuration. Every field has an explicit default and unknown
//! keys are rejected; the resolved configuration is echoed next to results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spde_core::darcy::PermeabilityModel;
use spde_core::heat::HeatBenchmark;
use spde_core::mesh::{BoundaryKind, BoundaryLayout};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub problem: ProblemConfig,
    pub noise: NoiseConfig,
    pub darcy: DarcyConfig,
    pub experiment: ExperimentConfig,
    pub heat: HeatConfig,
    pub run: RunSection,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub bottom: BoundaryKind,
    pub top: BoundaryKind,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            lx: 1.0,
            ly: 1.0,
            nx: 16,
            ny: 16,
            left: BoundaryKind::Dirichlet,
            right: BoundaryKind::Neumann,
            bottom: BoundaryKind::Neumann,
            top: BoundaryKind::Neumann,
        }
    }
}

impl MeshConfig {
    pub fn layout(&self) -> BoundaryLayout {
        BoundaryLayout { left: self.left, right: self.right, bottom: self.bottom, top: self.top }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityKind {
    /// Solve the Darcy problem of the `[darcy]` section on the same grid.
    Darcy,
    /// `(velocity_x, velocity_y)` everywhere.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// `f(u) = -|u - drift_center|`.
    NegativeAbs,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `b(u) = multiplicative_amplitude * u`.
    Multiplicative,
    /// `φ(t) = additive_amplitude`.
    Additive,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Multiplicative => "multiplicative",
            NoiseKind::Additive => "additive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

/// Gårding shift: `"auto"` or a fixed nonnegative value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftSetting {
    Auto(Auto),
    Value(f64),
}

impl ShiftSetting {
    pub fn value(self) -> Option<f64> {
        match self {
            ShiftSetting::Auto(_) => None,
            ShiftSetting::Value(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// Isotropic diffusion coefficient.
    pub diffusion: f64,
    pub upwind: bool,
    pub velocity: VelocityKind,
    pub velocity_x: f64,
    pub velocity_y: f64,
    pub drift: DriftKind,
    pub drift_center: f64,
    pub noise: NoiseKind,
    /// Slope of `b(u)`. The default is `2/√6`: `b(u) = 2u` driven by a
    /// Q-Wiener process on a 3 x 2 rectangle, pulled back to the unit square.
    pub multiplicative_amplitude: f64,
    pub additive_amplitude: f64,
    pub dirichlet_value: f64,
    pub robin_alpha: f64,
    pub initial_value: f64,
    pub shift: ShiftSetting,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            diffusion: 1e-2,
            upwind: false,
            velocity: VelocityKind::Darcy,
            velocity_x: 0.1,
            velocity_y: 0.0,
            drift: DriftKind::NegativeAbs,
            drift_center: 0.5,
            noise: NoiseKind::Multiplicative,
            multiplicative_amplitude: 2.0 / 6f64.sqrt(),
            additive_amplitude: 2.0,
            dirichlet_value: 1.0,
            robin_alpha: 0.0,
            initial_value: 0.0,
            shift: ShiftSetting::Auto(Auto::Auto),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub beta: f64,
    pub epsilon: f64,
    pub modes_x: usize,
    pub modes_y: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { beta: 1.0, epsilon: 1e-3, modes_x: 32, modes_y: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DarcyConfig {
    pub p_in: f64,
    pub p_out: f64,
    pub permeability: PermeabilityModel,
}

impl Default for DarcyConfig {
    fn default() -> Self {
        Self { p_in: 1.0, p_out: 0.0, permeability: PermeabilityModel::Constant { value: 0.1 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub t_final: f64,
    pub reference_steps: usize,
    pub level_steps: Vec<usize>,
    pub realizations: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub multiplicative_band: [f64; 2],
    pub additive_band: [f64; 2],
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            reference_steps: 1024,
            level_steps: vec![16, 32, 64, 128],
            realizations: 200,
            seed: 2024,
            workers: 0,
            multiplicative_band: [0.38, 0.68],
            additive_band: [0.80, 1.20],
        }
    }
}

impl ExperimentConfig {
    pub fn band(&self, kind: NoiseKind) -> [f64; 2] {
        match kind {
            NoiseKind::Multiplicative => self.multiplicative_band,
            NoiseKind::Additive => self.additive_band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    pub spatial_cells: Vec<usize>,
    pub spatial_t_final: f64,
    pub spatial_steps: usize,
    pub temporal_steps: Vec<usize>,
    pub temporal_t_final: f64,
    pub temporal_cells: usize,
    pub spatial_band: [f64; 2],
    pub temporal_band: [f64; 2],
    /// Largest allowed deviation when a constant is evolved.
    pub constant_tol: f64,
}

impl Default for HeatConfig {
    fn default() -> Self {
        let b = HeatBenchmark::default();
        Self {
            spatial_cells: b.spatial_cells,
            spatial_t_final: b.spatial_t_final,
            spatial_steps: b.spatial_steps,
            temporal_steps: b.temporal_steps,
            temporal_t_final: b.temporal_t_final,
            temporal_cells: b.temporal_cells,
            spatial_band: [1.8, 2.2],
            temporal_band: [0.9, 1.1],
            constant_tol: 1e-12,
        }
    }
}

impl HeatConfig {
    pub fn benchmark(&self) -> HeatBenchmark {
        HeatBenchmark {
            spatial_cells: self.spatial_cells.clone(),
            spatial_t_final: self.spatial_t_final,
            spatial_steps: self.spatial_steps,
            temporal_steps: self.temporal_steps.clone(),
            temporal_t_final: self.temporal_t_final,
            temporal_cells: self.temporal_cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_final: f64,
    pub steps: usize,
    /// Write a snapshot every `stride` steps, starting with the initial field.
    pub stride: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { t_final: 1.0, steps: 128, stride: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    /// Iteration cap of the Krylov solvers; 0 means ten times the system size.
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 0 }
    }
}

impl SolverConfig {
    pub fn options(&self) -> spde_core::linalg::SolverOptions {
        spde_core::linalg::SolverOptions { tol: self.tol, max_iter: (self.max_iter > 0).then_some(self.max_iter) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return bad("mesh needs at least one cell per axis");
        }
        if !(self.problem.diffusion > 0.0) {
            return bad("diffusion must be positive");
        }
        if let ShiftSetting::Value(v) = self.problem.shift {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("shift must be \"auto\" or a nonnegative number");
            }
        }
        if self.run.stride == 0 {
            return bad("run.stride must be at least 1");
        }
        if !(self.solver.tol > 0.0) {
            return bad("solver.tol must be positive");
        }
        for band in [
            self.experiment.multiplicative_band,
            self.experiment.additive_band,
            self.heat.spatial_band,
            self.heat.temporal_band,
        ] {
            if !(band[0] <= band[1]) {
                return bad("acceptance bands must be [low, high] with low <= high");
            }
        }
        Ok(())
    }
}
