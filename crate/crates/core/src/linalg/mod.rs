//! Sparse storage and the linear solvers behind every implicit step.
//!
//! Every solve returns an `x` whose true residual satisfies
//! `||A x - b|| <= tol * ||b||`, or an error. Small systems (`n <= 200`) go
//! through a dense LU factorization, larger ones through Jacobi-preconditioned
//! BiCGStab (nonsymmetric) or CG (symmetric positive definite).

mod dense;
mod sparse;

pub use dense::DenseLu;
pub use sparse::{CsrMatrix, TripletBuilder};

use crate::{Error, Result};

/// Systems at or below this size are factorized densely.
pub const DENSE_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `||Ax - b|| / ||b||`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 * n`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None }
    }
}

impl SolverOptions {
    fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n).max(1)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_system(a: &CsrMatrix, b: &[f64]) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!("matrix is {}x{}, not square", a.n_rows(), a.n_cols())));
    }
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch { expected: a.n_rows(), got: b.len() });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("right-hand side is not finite"));
    }
    Ok(())
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64], b_norm: f64) -> f64 {
    let mut r = a.spmv(x).expect("dimensions checked");
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm2(&r) / b_norm
}

fn jacobi(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal().into_iter().map(|d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect()
}

/// Solves a general square system.
pub fn solve_nonsymmetric(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    LinearSolver::new(a.clone(), Method::General, *opts)?.solve(b, None)
}

/// Solves a symmetric positive definite system.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    LinearSolver::new(a.clone(), Method::Spd, *opts)?.solve(b, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    General,
    Spd,
}

#[derive(Debug, Clone)]
enum Backend {
    Dense(DenseLu),
    Iterative { inv_diag: Vec<f64> },
}

/// A matrix prepared for repeated solves: factorized once when small,
/// otherwise paired with its Jacobi preconditioner.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    matrix: CsrMatrix,
    method: Method,
    opts: SolverOptions,
    backend: Backend,
}

impl LinearSolver {
    pub fn new(matrix: CsrMatrix, method: Method, opts: SolverOptions) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, not square",
                matrix.n_rows(),
                matrix.n_cols()
            )));
        }
        let backend = if matrix.n_rows() <= DENSE_LIMIT {
            Backend::Dense(DenseLu::factor(&matrix.to_dense())?)
        } else {
            Backend::Iterative { inv_diag: jacobi(&matrix) }
        };
        Ok(Self { matrix, method, opts, backend })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves `A x = b`, optionally warm-started from `guess` (ignored by the
    /// dense path).
    pub fn solve(&self, b: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        check_system(&self.matrix, b)?;
        let b_norm = norm2(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        match &self.backend {
            Backend::Dense(lu) => {
                let mut x = lu.solve(b);
                let mut res = relative_residual(&self.matrix, &x, b, b_norm);
                if !(res <= self.opts.tol) {
                    // One step of iterative refinement before giving up.
                    let ax = self.matrix.spmv(&x)?;
                    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
                    let dx = lu.solve(&r);
                    axpy(1.0, &dx, &mut x);
                    res = relative_residual(&self.matrix, &x, b, b_norm);
                    if !(res <= self.opts.tol) {
                        return Err(Error::NoConvergence { iterations: 1, residual: res });
                    }
                }
                Ok(x)
            }
            Backend::Iterative { inv_diag } => {
                let max_iter = self.opts.max_iter_for(b.len());
                match self.method {
                    Method::General => bicgstab(&self.matrix, b, guess, inv_diag, self.opts.tol, max_iter),
                    Method::Spd => cg(&self.matrix, b, guess, inv_diag, self.opts.tol, max_iter),
                }
            }
        }
    }
}

/// Right-preconditioned BiCGStab with a Jacobi preconditioner. Convergence is
/// only declared on the true residual.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    check_system(a, b)?;
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = a.spmv(&x)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if norm2(&r) <= tol * b_norm {
        return Ok(x);
    }
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = f64::INFINITY;

    for iter in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            // Restart the shadow residual when it turns orthogonal.
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            let rr = dot(&r, &r);
            if rr == 0.0 {
                return Ok(x);
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        a.spmv_into(&y, &mut v)?;
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(Error::Breakdown(format!("r_hat . v = {rv} at iteration {iter}")));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= tol * b_norm {
            axpy(alpha, &y, &mut x);
            res = relative_residual(a, &x, b, b_norm);
            if res <= tol {
                return Ok(x);
            }
            // Recursive residual drifted; resync and keep going.
            let ax = a.spmv(&x)?;
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            continue;
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.spmv_into(&z, &mut t)?;
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return Err(Error::Breakdown(format!("t . t = {tt} at iteration {iter}")));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= tol * b_norm {
            res = relative_residual(a, &x, b, b_norm);
            if res <= tol {
                return Ok(x);
            }
            let ax = a.spmv(&x)?;
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        if omega == 0.0 {
            return Err(Error::Breakdown(format!("omega = 0 at iteration {iter}")));
        }
    }
    if res.is_infinite() {
        res = relative_residual(a, &x, b, b_norm);
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}

/// Jacobi-preconditioned conjugate gradients.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    check_system(a, b)?;
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = a.spmv(&x)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm2(&r) / b_norm;
    if res <= tol {
        return Ok(x);
    }
    for iter in 1..=max_iter {
        a.spmv_into(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Breakdown(format!("p . Ap = {pap} at iteration {iter}; matrix not SPD?")));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm2(&r) <= tol * b_norm {
            res = relative_residual(a, &x, b, b_norm);
            if res <= tol {
                return Ok(x);
            }
            let ax = a.spmv(&x)?;
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    res = res.min(relative_residual(a, &x, b, b_norm));
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}
