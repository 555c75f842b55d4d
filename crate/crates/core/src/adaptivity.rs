//! Built-in error estimator, Dörfler marking and the solve-estimate-refine loop.

use std::time::Instant;

use nalgebra::{DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::assembly::{
    self, assemble, initial_rule, AssemblyError, AssemblyMode, CellData, ShapeCache, N_CHI, N_W,
};
use crate::dofmap::{DofError, DofMap};
use crate::experiments::{error_metrics, Problem, RunRecord};
use crate::mesh::{Cell, Mesh, MeshError, Scaling};
use crate::solver::{solve, SolveError, Solution, SolverOptions};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Dofs(#[from] DofError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("Dörfler parameter {0} outside (0, 1]")]
    BadTheta(f64),
}

/// Squared indicator contributions of one cell.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellIndicator {
    /// Test-norm of the lifted residual, including the initial-trace block.
    pub res2: f64,
    /// Initial-trace part of `res2` (zero off the bottom row).
    pub theta2: f64,
    pub osc_space2: f64,
    pub osc_time2: f64,
    pub init2: f64,
}

impl CellIndicator {
    pub fn eta2(&self) -> f64 {
        self.res2 + self.osc_space2 + self.osc_time2 + self.init2
    }

    fn add(&mut self, o: &CellIndicator) {
        self.res2 += o.res2;
        self.theta2 += o.theta2;
        self.osc_space2 += o.osc_space2;
        self.osc_time2 += o.osc_time2;
        self.init2 += o.init2;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Indicator {
    pub cells: Vec<CellIndicator>,
    pub totals: CellIndicator,
    /// Oscillation terms are quadrature values of a divergent integral.
    pub regularized: bool,
}

impl Indicator {
    pub fn eta2(&self) -> f64 {
        self.totals.eta2()
    }

    /// Per-cell values used for marking.
    pub fn marking_values(&self, residual_only: bool) -> Vec<f64> {
        self.cells.iter().map(|c| if residual_only { c.res2 } else { c.eta2() }).collect()
    }
}

/// Residual lift on one cell: `η = G⁻¹ (F - B x)` and `ηᵀ G η`.
pub fn lift_residual(data: &CellData, local: &[f64]) -> (DVector<f64>, f64) {
    let sh = &data.shape;
    let x = DVector::from_column_slice(local);
    // d = L⁻¹ (F - B x), so that ηᵀ G η = |d|²
    let d = sh.lower_solve(&data.load) - &sh.c * x;
    let res2 = d.norm_squared();
    let eta = sh.l.transpose().solve_upper_triangular(&d).expect("nonzero diagonal");
    (eta, res2)
}

/// The initial-trace coefficients `ϑ` of a lifted residual (bottom cells only).
pub fn theta_part(eta: &DVector<f64>) -> Option<Vector2<f64>> {
    (eta.len() > N_W + N_CHI).then(|| Vector2::new(eta[N_W + N_CHI], eta[N_W + N_CHI + 1]))
}

fn p1_mass(hx: f64) -> Matrix2<f64> {
    Matrix2::new(2.0, 1.0, 1.0, 2.0) * (hx / 6.0)
}

pub fn estimate(
    mesh: &Mesh,
    dofs: &DofMap,
    assembled: &assembly::Assembled,
    solution: &Solution,
    problem: &Problem,
) -> Result<Indicator, AssemblyError> {
    let mut cells = Vec::with_capacity(mesh.n_cells());
    let mut totals = CellIndicator::default();
    for (cell, data) in mesh.cells().iter().zip(&assembled.cells) {
        let local = dofs.gather(cell.id, &solution.coefficients);
        let (eta, res2) = lift_residual(data, &local);
        let theta2 = theta_part(&eta).map_or(0.0, |th| th.dot(&(p1_mass(cell.hx()) * th)));
        let (osc_space2, osc_time2) = assembly::data_oscillation(cell, problem)?;
        let init2 = if cell.is_bottom() {
            let v = dofs.corner_values(cell.id, solution.trace());
            assembly::initial_mismatch(cell, problem, (v[0], v[1]))
        } else {
            0.0
        };
        let ind = CellIndicator { res2, theta2, osc_space2, osc_time2, init2 };
        totals.add(&ind);
        cells.push(ind);
    }
    Ok(Indicator { cells, totals, regularized: problem.singular.is_some() && !problem.f_square_integrable })
}

/// Both sides of `‖u0 - û(0,·)‖² = ϑᵀ M ϑ + ‖u0 - P u0‖²` on the bottom side
/// of `cell`, with `P` the L² projection onto affine functions.
pub fn pythagoras_check(cell: &Cell, problem: &Problem, uhat: (f64, f64), theta: Vector2<f64>) -> (f64, f64) {
    let lhs = assembly::initial_mismatch(cell, problem, uhat);
    let hx = cell.hx();
    let x0 = cell.x_lo().to_f64();
    let r = initial_rule(cell, problem);
    let m = p1_mass(hx);
    let moments = Vector2::new(
        hx * r.integrate(|x| (problem.u0)(x0 + hx * x) * (1.0 - x)),
        hx * r.integrate(|x| (problem.u0)(x0 + hx * x) * x),
    );
    let p = m.try_inverse().expect("mass matrix is invertible") * moments;
    let proj_err = hx * r.integrate(|x| ((problem.u0)(x0 + hx * x) - (p[0] * (1.0 - x) + p[1] * x)).powi(2));
    (lhs, theta.dot(&(m * theta)) + proj_err)
}

/// Dörfler marking: the shortest prefix of cells sorted by decreasing value
/// (ties by id) whose sum reaches `theta` times the total.
pub fn mark(values: &[f64], theta: f64) -> Result<Vec<usize>, AdaptError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(AdaptError::BadTheta(theta));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| values[i]).sum();
    if total <= 0.0 {
        return Ok(Vec::new());
    }
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= theta * total {
            break;
        }
        acc += values[i];
        out.push(i);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptConfig {
    pub scaling: Scaling,
    pub theta: f64,
    pub uniform: bool,
    pub ndof_max: usize,
    /// Mark by the residual alone instead of the full indicator.
    pub residual_only: bool,
    pub solver: SolverOptions,
    pub assembly: AssemblyMode,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            scaling: Scaling::Equal,
            theta: 0.5,
            uniform: false,
            ndof_max: 10_000,
            residual_only: false,
            solver: SolverOptions::default(),
            assembly: AssemblyMode::Full,
        }
    }
}

/// Output of one loop iteration besides its record.
pub struct Step<'a> {
    pub mesh: &'a Mesh,
    pub dofs: &'a DofMap,
    pub solution: &'a Solution,
    pub indicator: &'a Indicator,
}

/// Runs solve, estimate, record, mark, refine from the 2×2 mesh until the
/// recorded ndof exceeds `ndof_max`. The first record above the limit is kept.
pub fn adapt_loop(problem: &Problem, config: &AdaptConfig) -> Result<Vec<RunRecord>, AdaptError> {
    adapt_loop_with(problem, config, Mesh::new_uniform(2, 2)?, |_| {})
}

/// [`adapt_loop`] from a given mesh, calling `observe` after each estimate.
pub fn adapt_loop_with(
    problem: &Problem,
    config: &AdaptConfig,
    initial: Mesh,
    mut observe: impl FnMut(&Step),
) -> Result<Vec<RunRecord>, AdaptError> {
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(AdaptError::BadTheta(config.theta));
    }
    let mut cache = ShapeCache::new();
    let mut mesh = initial;
    let mut records = Vec::new();
    loop {
        let start = Instant::now();
        let dofs = DofMap::build(&mesh)?;
        let assembled = assemble(&mesh, &dofs, problem, config.assembly, &mut cache)?;
        let solution = solve(&assembled.system, &dofs, &config.solver)?;
        let indicator = estimate(&mesh, &dofs, &assembled, &solution, problem)?;
        let errors = problem.exact.as_ref().map(|ex| error_metrics(&mesh, &dofs, &solution, ex));
        observe(&Step { mesh: &mesh, dofs: &dofs, solution: &solution, indicator: &indicator });
        let t = &indicator.totals;
        records.push(RunRecord {
            ndof: dofs.n_trace(),
            eta2: indicator.eta2(),
            res2: t.res2,
            osc_space2: t.osc_space2,
            osc_time2: t.osc_time2,
            init2: t.init2,
            err_u: errors.map(|e| e.u),
            err_sigma: errors.map(|e| e.sigma),
            err_uhat: errors.map(|e| e.uhat),
            err_gamma0: errors.map(|e| e.gamma0),
            seconds: start.elapsed().as_secs_f64(),
        });
        if dofs.n_trace() > config.ndof_max {
            return Ok(records);
        }
        let marked = if config.uniform {
            (0..mesh.n_cells()).collect()
        } else {
            mark(&indicator.marking_values(config.residual_only), config.theta)?
        };
        if marked.is_empty() {
            return Ok(records);
        }
        mesh = mesh.refine(&marked, config.scaling)?;
    }
}
