//! Truncated spectral sampling of a Q-Wiener process on `[0, lx] x [0, ly]`.
//!
//! ```text
//! W(x, t) = Σ_{i<I, j<J} sqrt(λ_ij) e_ij(x) β_ij(t),   λ_ij = (i² + j²)^-(β+ε)
//! ```
//!
//! with the Neumann cosine basis `e_ij = e_i(x₁) e_j(x₂)`. The `(0, 0)` mode is
//! excluded (`λ_00 = 0`) since the spectrum formula is singular there.
//!
//! Increments are drawn on the finest time grid from a counter-based generator
//! keyed by `(seed, mode, step)`. Coarser grids are built by summing pairs of
//! children, level by level, so coarse and fine paths are the same Brownian
//! realization to the last bit.

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::{rng, Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Regularity parameter β.
    pub beta: f64,
    /// Spectral offset ε.
    pub epsilon: f64,
    /// Number of cosine modes along x (indices `0..modes_x`).
    pub modes_x: usize,
    /// Number of cosine modes along y (indices `0..modes_y`).
    pub modes_y: usize,
    pub lx: f64,
    pub ly: f64,
}

impl NoiseSpec {
    pub const DEFAULT_MODES: usize = 32;

    pub fn new(beta: f64, epsilon: f64, lx: f64, ly: f64) -> Self {
        Self { beta, epsilon, modes_x: Self::DEFAULT_MODES, modes_y: Self::DEFAULT_MODES, lx, ly }
    }

    pub fn with_modes(mut self, modes_x: usize, modes_y: usize) -> Self {
        self.modes_x = modes_x;
        self.modes_y = modes_y;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if self.modes_x == 0 || self.modes_y == 0 {
            return Err(Error::invalid("truncation must keep at least one mode per axis"));
        }
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(Error::invalid("noise domain sides must be positive"));
        }
        Ok(())
    }

    pub fn num_modes(&self) -> usize {
        self.modes_x * self.modes_y
    }

    /// Flat index of mode `(i, j)`.
    pub fn mode_index(&self, i: usize, j: usize) -> usize {
        i * self.modes_y + j
    }

    pub fn eigenvalue(&self, i: usize, j: usize) -> f64 {
        eigenvalue(i, j, self.beta, self.epsilon)
    }

    pub fn eigenfunction(&self, i: usize, j: usize, x: Point) -> f64 {
        eigenfunction(i, j, x, self.lx, self.ly)
    }

    /// `Σ λ_ij` over the retained modes.
    pub fn trace(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.modes_x {
            for j in 0..self.modes_y {
                s += self.eigenvalue(i, j);
            }
        }
        s
    }
}

/// `λ_ij = (i² + j²)^-(β+ε)`, and `λ_00 = 0`.
pub fn eigenvalue(i: usize, j: usize, beta: f64, epsilon: f64) -> f64 {
    if i == 0 && j == 0 {
        return 0.0;
    }
    let r2 = (i * i + j * j) as f64;
    r2.powf(-(beta + epsilon))
}

/// One-dimensional Neumann cosine eigenfunction on `[0, l]`.
pub fn eigenfunction_1d(i: usize, x: f64, l: f64) -> f64 {
    if i == 0 {
        (1.0 / l).sqrt()
    } else {
        (2.0 / l).sqrt() * (i as f64 * std::f64::consts::PI * x / l).cos()
    }
}

/// `e_ij(x) = e_i(x₁) e_j(x₂)`.
pub fn eigenfunction(i: usize, j: usize, x: Point, lx: f64, ly: f64) -> f64 {
    eigenfunction_1d(i, x[0], lx) * eigenfunction_1d(j, x[1], ly)
}

/// Brownian increments of every retained mode on a uniform time grid, already
/// scaled by `sqrt(λ_ij Δt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub spec: NoiseSpec,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    increments: Vec<f64>,
}

impl WienerPath {
    /// Builds a path from standard normal draws `ξ[m * num_modes + mode]`.
    pub fn from_standard_draws(spec: NoiseSpec, dt: f64, draws: &[f64]) -> Result<Self> {
        spec.validate()?;
        let n_modes = spec.num_modes();
        if n_modes == 0 || draws.len() % n_modes != 0 {
            return Err(Error::invalid("draw count is not a multiple of the mode count"));
        }
        let scale = mode_scales(&spec, dt);
        let increments = draws
            .chunks(n_modes)
            .flat_map(|row| row.iter().zip(&scale).map(|(xi, s)| xi * s))
            .collect();
        Ok(Self { spec, seed: 0, steps: draws.len() / n_modes, dt, increments })
    }

    /// Dyadic level, `log2(steps)` when `steps` is a power of two.
    pub fn level(&self) -> Option<u32> {
        self.steps.is_power_of_two().then(|| self.steps.trailing_zeros())
    }

    /// Scaled increments of all modes over step `m`.
    pub fn increment(&self, m: usize) -> &[f64] {
        let n = self.spec.num_modes();
        &self.increments[m * n..(m + 1) * n]
    }

    /// Path on the grid with half as many steps; each increment is the sum of
    /// its two children.
    pub fn coarsen(&self) -> Result<WienerPath> {
        if self.steps % 2 != 0 {
            return Err(Error::invalid(format!("cannot halve a path of {} steps", self.steps)));
        }
        let n = self.spec.num_modes();
        let mut increments = Vec::with_capacity(self.increments.len() / 2);
        for k in 0..self.steps / 2 {
            let (a, b) = (self.increment(2 * k), self.increment(2 * k + 1));
            increments.extend(a.iter().zip(b).map(|(x, y)| x + y));
        }
        debug_assert_eq!(increments.len(), self.steps / 2 * n);
        Ok(WienerPath { spec: self.spec, seed: self.seed, steps: self.steps / 2, dt: 2.0 * self.dt, increments })
    }
}

fn mode_scales(spec: &NoiseSpec, dt: f64) -> Vec<f64> {
    let mut s = Vec::with_capacity(spec.num_modes());
    for i in 0..spec.modes_x {
        for j in 0..spec.modes_y {
            s.push((spec.eigenvalue(i, j) * dt).sqrt());
        }
    }
    s
}

/// The finest path and the coarser paths derived from it.
#[derive(Debug, Clone)]
pub struct PathFamily {
    pub fine: WienerPath,
    /// In the order requested.
    pub coarse: Vec<WienerPath>,
}

impl PathFamily {
    /// The path with exactly `steps` steps, if present.
    pub fn with_steps(&self, steps: usize) -> Option<&WienerPath> {
        std::iter::once(&self.fine).chain(&self.coarse).find(|p| p.steps == steps)
    }
}

/// Draws the fine path over `[0, t_final]` in `fine_steps` steps, then derives
/// a coupled path for every entry of `coarse_steps`.
pub fn sample_path(
    spec: &NoiseSpec,
    seed: u64,
    t_final: f64,
    fine_steps: usize,
    coarse_steps: &[usize],
) -> Result<PathFamily> {
    spec.validate()?;
    if fine_steps == 0 || !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::invalid("need a positive final time and at least one step"));
    }
    for &c in coarse_steps {
        if c == 0 || fine_steps % c != 0 || !(fine_steps / c).is_power_of_two() {
            return Err(Error::invalid(format!("{c} steps is not a dyadic coarsening of {fine_steps}")));
        }
    }
    let dt = t_final / fine_steps as f64;
    let scale = mode_scales(spec, dt);
    let n_modes = spec.num_modes();
    let mut increments = vec![0.0; fine_steps * n_modes];
    for (m, row) in increments.chunks_mut(n_modes).enumerate() {
        for (mode, (inc, s)) in row.iter_mut().zip(&scale).enumerate() {
            if *s != 0.0 {
                *inc = s * rng::normal(seed, mode as u64, m as u64);
            }
        }
    }
    let fine = WienerPath { spec: *spec, seed, steps: fine_steps, dt, increments };

    let mut ladder: Vec<WienerPath> = Vec::new();
    let coarsest = coarse_steps.iter().copied().min().unwrap_or(fine_steps);
    let mut current = fine.clone();
    while current.steps > coarsest {
        current = current.coarsen()?;
        if coarse_steps.contains(&current.steps) {
            ladder.push(current.clone());
        }
    }
    let coarse = coarse_steps
        .iter()
        .map(|&c| {
            if c == fine_steps {
                fine.clone()
            } else {
                ladder.iter().find(|p| p.steps == c).cloned().expect("dyadic level built above")
            }
        })
        .collect();
    Ok(PathFamily { fine, coarse })
}

/// Evaluates increment fields at the nodes of a structured mesh, using the
/// tensor-product structure of both the basis and the grid.
#[derive(Debug, Clone)]
pub struct NoiseEvaluator {
    spec: NoiseSpec,
    nx1: usize,
    ny1: usize,
    /// `e_i(x_ix)` at `[i * nx1 + ix]`.
    basis_x: Vec<f64>,
    /// `e_j(y_iy)` at `[j * ny1 + iy]`.
    basis_y: Vec<f64>,
}

impl NoiseEvaluator {
    pub fn new(spec: &NoiseSpec, mesh: &Mesh) -> Result<Self> {
        spec.validate()?;
        let tol = 1e-12 * mesh.lx().max(mesh.ly());
        if (spec.lx - mesh.lx()).abs() > tol || (spec.ly - mesh.ly()).abs() > tol {
            return Err(Error::invalid(format!(
                "noise domain {}x{} does not match mesh domain {}x{}",
                spec.lx,
                spec.ly,
                mesh.lx(),
                mesh.ly()
            )));
        }
        let xs = mesh.grid_x();
        let ys = mesh.grid_y();
        let basis_x = (0..spec.modes_x).flat_map(|i| xs.iter().map(move |&x| eigenfunction_1d(i, x, spec.lx))).collect();
        let basis_y = (0..spec.modes_y).flat_map(|j| ys.iter().map(move |&y| eigenfunction_1d(j, y, spec.ly))).collect();
        Ok(Self { spec: *spec, nx1: xs.len(), ny1: ys.len(), basis_x, basis_y })
    }

    /// Nodal values `Σ_ij e_ij(x_k) ΔW_ij` for scaled mode increments `dw`.
    pub fn evaluate(&self, dw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nx1 * self.ny1];
        self.evaluate_into(dw, &mut out);
        out
    }

    pub fn evaluate_into(&self, dw: &[f64], out: &mut [f64]) {
        let (mx, my) = (self.spec.modes_x, self.spec.modes_y);
        assert_eq!(dw.len(), mx * my);
        assert_eq!(out.len(), self.nx1 * self.ny1);
        // partial[i * ny1 + iy] = Σ_j dw_ij e_j(y_iy)
        let mut partial = vec![0.0; mx * self.ny1];
        for i in 0..mx {
            let row = &mut partial[i * self.ny1..(i + 1) * self.ny1];
            for j in 0..my {
                let w = dw[i * my + j];
                if w == 0.0 {
                    continue;
                }
                let ey = &self.basis_y[j * self.ny1..(j + 1) * self.ny1];
                for (p, e) in row.iter_mut().zip(ey) {
                    *p += w * e;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..mx {
            let ex = &self.basis_x[i * self.nx1..(i + 1) * self.nx1];
            for iy in 0..self.ny1 {
                let p = partial[i * self.ny1 + iy];
                if p == 0.0 {
                    continue;
                }
                let row = &mut out[iy * self.nx1..(iy + 1) * self.nx1];
                for (o, e) in row.iter_mut().zip(ex) {
                    *o += p * e;
                }
            }
        }
    }
}

/// Nodal increment field `ΔW_m(x_k)` of step `m`.
pub fn evaluate_increment(path: &WienerPath, m: usize, mesh: &Mesh) -> Result<Vec<f64>> {
    if m >= path.steps {
        return Err(Error::invalid(format!("step {m} beyond path length {}", path.steps)));
    }
    Ok(NoiseEvaluator::new(&path.spec, mesh)?.evaluate(path.increment(m)))
}
