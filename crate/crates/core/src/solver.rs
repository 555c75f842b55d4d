//! Linear solvers for the normal equations and the discrete solution.

use faer::prelude::Solve;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{Assembled, AssemblyMode, CsrMatrix, NormalSystem};
use crate::dofmap::{DofMap, N_LOCAL_TRIAL};
use crate::mesh::Mesh;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("sparse Cholesky factorization failed: {0}")]
    Factorization(String),
    #[error("point ({t}, {x}) lies outside the space-time domain")]
    OutsideDomain { t: f64, x: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Conjugate gradients with diagonal preconditioning.
    Pcg,
    /// Sparse Cholesky with fill-reducing ordering.
    #[default]
    Cholesky,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Relative residual tolerance of the iterative solver.
    pub tol: f64,
    /// Iteration cap; `None` means `50 sqrt(n)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { kind: SolverKind::default(), tol: 1e-10, max_iter: None }
    }
}

impl SolverOptions {
    pub fn pcg() -> Self {
        SolverOptions { kind: SolverKind::Pcg, ..Self::default() }
    }
}

/// Coefficients of all trial unknowns, laid out as in [`DofMap`].
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub coefficients: Vec<f64>,
    pub n_trace: usize,
    pub iterations: usize,
}

impl Solution {
    pub fn zeros(dofs: &DofMap) -> Solution {
        Solution { coefficients: vec![0.0; dofs.n_total()], n_trace: dofs.n_trace(), iterations: 0 }
    }

    pub fn trace(&self) -> &[f64] {
        &self.coefficients[..self.n_trace]
    }

    /// `(u, σ)` on a cell.
    pub fn field(&self, cell: usize) -> (f64, f64) {
        let k = self.n_trace + 2 * cell;
        (self.coefficients[k], self.coefficients[k + 1])
    }

    /// `(u_h, σ_h, û_h)` at a point of a given cell (boundary points allowed).
    pub fn evaluate_in_cell(&self, mesh: &Mesh, dofs: &DofMap, cell: usize, t: f64, x: f64) -> (f64, f64, f64) {
        let c = mesh.cell(cell);
        let (u, s) = self.field(cell);
        let tr = c.t.to_reference(t);
        let xr = c.x.to_reference(x);
        let v = dofs.corner_values(cell, self.trace());
        let uhat = (1.0 - tr) * ((1.0 - xr) * v[0] + xr * v[1]) + tr * ((1.0 - xr) * v[2] + xr * v[3]);
        (u, s, uhat)
    }

    pub fn evaluate(&self, mesh: &Mesh, dofs: &DofMap, t: f64, x: f64) -> Result<(f64, f64, f64), SolveError> {
        let cell = mesh.locate(t, x).ok_or(SolveError::OutsideDomain { t, x })?;
        Ok(self.evaluate_in_cell(mesh, dofs, cell, t, x))
    }
}

/// Solves the normal equations; in condensed mode also recovers the field unknowns.
pub fn solve(system: &NormalSystem, dofs: &DofMap, opts: &SolverOptions) -> Result<Solution, SolveError> {
    let (x, iterations) = match opts.kind {
        SolverKind::Pcg => {
            let cap = opts.max_iter.unwrap_or_else(|| (50.0 * (system.matrix.n as f64).sqrt()).ceil() as usize);
            pcg(&system.matrix, &system.rhs, opts.tol, cap)?
        }
        SolverKind::Cholesky => (cholesky(&system.matrix, &system.rhs)?, 0),
    };
    let coefficients = match system.mode {
        AssemblyMode::Full => x,
        AssemblyMode::Condensed => {
            let mut all = x;
            all.resize(system.n_total, 0.0);
            for (k, cc) in system.condensed.iter().enumerate() {
                let local = dofs.gather(k, &all);
                let xt = nalgebra::SVector::<f64, 6>::from_fn(|i, _| local[2 + i]);
                let xf = cc.sff_inv * (cc.rf - cc.sft * xt);
                all[dofs.u_dof(k)] = xf[0];
                all[dofs.sigma_dof(k)] = xf[1];
            }
            all
        }
    };
    Ok(Solution { coefficients, n_trace: system.n_trace, iterations })
}

/// Preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize), SolveError> {
    let n = a.n;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok((x, it));
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
    let mut ax = vec![0.0; n];
    a.mul_vec(&x, &mut ax);
    let residual = norm(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>()) / bnorm;
    Err(SolveError::NotConverged { iterations: max_iter, residual })
}

/// Direct solve by sparse Cholesky. The matrix is symmetric, so its CSR
/// arrays double as CSC arrays.
pub fn cholesky(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    let n = a.n;
    if n == 0 {
        return Ok(Vec::new());
    }
    let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &a.row_ptr, None, &a.col_idx);
    let mat = SparseColMatRef::new(symbolic, &a.values);
    let llt = mat.sp_cholesky(faer::Side::Lower).map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
    let rhs = faer::Col::<f64>::from_fn(n, |i| b[i]);
    let x = llt.solve(&rhs);
    Ok((0..n).map(|i| x[i]).collect())
}

/// Max-norm of `Σ_K Bᵀ G⁻¹ (F - B x)` over all trial unknowns.
pub fn galerkin_residual(assembled: &Assembled, dofs: &DofMap, solution: &Solution) -> f64 {
    let mut g = vec![0.0; dofs.n_total()];
    for (k, data) in assembled.cells.iter().enumerate() {
        let sh = &data.shape;
        let local = DVector::from_column_slice(&dofs.gather(k, &solution.coefficients));
        let d = sh.lower_solve(&data.load) - &sh.c * local;
        let r = sh.c.transpose() * d;
        for (a, col) in dofs.cell_columns(k).iter().enumerate().take(N_LOCAL_TRIAL) {
            for &(gl, w) in col {
                g[gl] += w * r[a];
            }
        }
    }
    g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Scale against which [`galerkin_residual`] is judged: `max(1, ‖rhs‖∞)`.
pub fn load_scale(system: &NormalSystem) -> f64 {
    system.rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}
