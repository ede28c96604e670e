//! Dense reference implementation used as an oracle by the integration tests.
//! It shares no assembly or solver code with the library: element geometry
//! comes from inverting the 3x3 Vandermonde matrix and systems are solved by
//! nalgebra's LU.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
use spde_core::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Structured triangulation of `[0, lx] x [0, ly]`: node `iy * (nx + 1) + ix`,
/// two triangles per cell split along the lower-left to upper-right diagonal.
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
}

impl Grid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        let mut nodes = Vec::new();
        for iy in 0..=ny {
            for ix in 0..=nx {
                nodes.push([lx * ix as f64 / nx as f64, ly * iy as f64 / ny as f64]);
            }
        }
        let id = |ix: usize, iy: usize| iy * (nx + 1) + ix;
        let mut tris = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let (a, b, c, d) = (id(ix, iy), id(ix + 1, iy), id(ix + 1, iy + 1), id(ix, iy + 1));
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
        }
        Self { lx, ly, nx, ny, nodes, tris }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn side_edges(&self, side: Side) -> Vec<[usize; 2]> {
        let id = |ix: usize, iy: usize| iy * (self.nx + 1) + ix;
        match side {
            Side::Left => (0..self.ny).map(|iy| [id(0, iy), id(0, iy + 1)]).collect(),
            Side::Right => (0..self.ny).map(|iy| [id(self.nx, iy), id(self.nx, iy + 1)]).collect(),
            Side::Bottom => (0..self.nx).map(|ix| [id(ix, 0), id(ix + 1, 0)]).collect(),
            Side::Top => (0..self.nx).map(|ix| [id(ix, self.ny), id(ix + 1, self.ny)]).collect(),
        }
    }

    pub fn on_side(&self, k: usize, side: Side) -> bool {
        let p = self.nodes[k];
        match side {
            Side::Left => p[0] == 0.0,
            Side::Right => p[0] == self.lx,
            Side::Bottom => p[1] == 0.0,
            Side::Top => p[1] == self.ly,
        }
    }
}

/// Element area and basis gradients from the inverse Vandermonde matrix.
pub fn element(nodes: &[[f64; 2]], t: &[usize; 3]) -> (f64, [[f64; 2]; 3]) {
    let v = Matrix3::from_fn(|r, c| if c == 0 { 1.0 } else { nodes[t[r]][c - 1] });
    let area = v.determinant().abs() / 2.0;
    let inv = v.try_inverse().expect("nondegenerate triangle");
    let g = [0, 1, 2].map(|i| [inv[(1, i)], inv[(2, i)]]);
    (area, g)
}

pub struct DenseOperators {
    pub mass: DMatrix<f64>,
    /// Diffusion + advection + Robin + `shift * mass`.
    pub operator: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub shift: f64,
}

fn min_eig(d: &[[f64; 2]; 2]) -> f64 {
    let (a, b, c) = (d[0][0], 0.5 * (d[0][1] + d[1][0]), d[1][1]);
    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Shift defaults to `max |q|² / (2 c₁)` when `shift` is `None`.
pub fn assemble(grid: &Grid, d: [[f64; 2]; 2], q: &[[f64; 2]], robin: &[Side], alpha: f64, shift: Option<f64>) -> DenseOperators {
    let n = grid.len();
    let mut mass = DMatrix::zeros(n, n);
    let mut op = DMatrix::zeros(n, n);
    let mut weights = vec![0.0; n];
    for (e, t) in grid.tris.iter().enumerate() {
        let (area, g) = element(&grid.nodes, t);
        for i in 0..3 {
            weights[t[i]] += area / 3.0;
            for j in 0..3 {
                mass[(t[i], t[j])] += area / 12.0 * if i == j { 2.0 } else { 1.0 };
                let dgj = [d[0][0] * g[j][0] + d[0][1] * g[j][1], d[1][0] * g[j][0] + d[1][1] * g[j][1]];
                op[(t[i], t[j])] += area * (dgj[0] * g[i][0] + dgj[1] * g[i][1]);
                op[(t[i], t[j])] += area / 3.0 * (q[e][0] * g[j][0] + q[e][1] * g[j][1]);
            }
        }
    }
    for &side in robin {
        for [a, b] in grid.side_edges(side) {
            let (pa, pb) = (grid.nodes[a], grid.nodes[b]);
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            op[(a, a)] += alpha * len / 3.0;
            op[(b, b)] += alpha * len / 3.0;
            op[(a, b)] += alpha * len / 6.0;
            op[(b, a)] += alpha * len / 6.0;
        }
    }
    let shift = shift.unwrap_or_else(|| q.iter().map(|v| v[0] * v[0] + v[1] * v[1]).fold(0.0, f64::max) / (2.0 * min_eig(&d)));
    let operator = op + &mass * shift;
    DenseOperators { mass, operator, weights, shift }
}

pub enum DenseNoise<'a> {
    None,
    Multiplicative(&'a dyn Fn(f64) -> f64),
    Additive(&'a dyn Fn(f64) -> f64),
}

/// Linear implicit Euler on a dense system with Dirichlet value `g` at the
/// nodes flagged in `dirichlet`.
pub struct DenseScheme<'a> {
    pub grid: &'a Grid,
    pub ops: &'a DenseOperators,
    pub dirichlet: Vec<bool>,
    pub g: f64,
}

pub struct DenseNoiseModel {
    pub seed: u64,
    pub modes: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub fine_steps: usize,
}

fn eigenfunction(i: usize, x: f64, l: f64) -> f64 {
    if i == 0 {
        (1.0 / l).sqrt()
    } else {
        (2.0 / l).sqrt() * (i as f64 * PI * x / l).cos()
    }
}

impl DenseScheme<'_> {
    /// Nodal increment over fine steps `first..first + count`, drawn straight
    /// from the counter-based generator with stream `i * modes + j`.
    fn increment(&self, model: &DenseNoiseModel, t_final: f64, first: usize, count: usize) -> Vec<f64> {
        let m = model.modes;
        let dt_fine = t_final / model.fine_steps as f64;
        let mut coeff = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i + j == 0 {
                    continue;
                }
                let lambda = ((i * i + j * j) as f64).powf(-(model.beta + model.epsilon));
                let s = (lambda * dt_fine).sqrt();
                coeff[i * m + j] = (first..first + count).map(|k| s * rng::normal(model.seed, (i * m + j) as u64, k as u64)).sum();
            }
        }
        self.grid
            .nodes
            .iter()
            .map(|p| {
                let mut w = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        w += coeff[i * m + j] * eigenfunction(i, p[0], self.grid.lx) * eigenfunction(j, p[1], self.grid.ly);
                    }
                }
                w
            })
            .collect()
    }

    /// Runs `steps` steps over `[0, t_final]` from the nodal values `x0`.
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &self,
        x0: &[f64],
        drift: &dyn Fn(f64) -> f64,
        noise: &DenseNoise,
        model: Option<&DenseNoiseModel>,
        t_final: f64,
        steps: usize,
    ) -> DVector<f64> {
        let n = self.grid.len();
        let dt = t_final / steps as f64;
        let mut system = &self.ops.mass + &self.ops.operator * dt;
        for k in 0..n {
            if self.dirichlet[k] {
                system.row_mut(k).fill(0.0);
                system[(k, k)] = 1.0;
            }
        }
        let lu = system.lu();
        let mut x = DVector::from_iterator(n, (0..n).map(|k| if self.dirichlet[k] { self.g } else { x0[k] }));
        for m in 0..steps {
            let prod = match (noise, model) {
                (DenseNoise::None, _) | (_, None) => DVector::zeros(n),
                (DenseNoise::Multiplicative(b), Some(model)) => {
                    let ratio = model.fine_steps / steps;
                    let dw = self.increment(model, t_final, m * ratio, ratio);
                    DVector::from_iterator(n, (0..n).map(|k| b(x[k]) * dw[k]))
                }
                (DenseNoise::Additive(phi), Some(model)) => {
                    let ratio = model.fine_steps / steps;
                    let dw = self.increment(model, t_final, m * ratio, ratio);
                    DVector::from_iterator(n, (0..n).map(|k| phi(m as f64 * dt) * dw[k]))
                }
            };
            let noise_load = &self.ops.mass * prod;
            let mut rhs = &self.ops.mass * &x * (1.0 + dt * self.ops.shift);
            for k in 0..n {
                if self.dirichlet[k] {
                    rhs[k] = self.g;
                } else {
                    rhs[k] += dt * self.ops.weights[k] * drift(x[k]) + noise_load[k];
                }
            }
            x = lu.solve(&rhs).expect("nonsingular system");
        }
        x
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.ops.mass * v)).sqrt()
    }
}
