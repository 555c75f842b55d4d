use thiserror::Error;

use crate::dofmap::DofMap;
use crate::experiments::ExactSolution;
use crate::mesh::Mesh;
use crate::quadrature::{gauss_rule, Rule1d};
use crate::solver::Solution;

/// Squared `L²` errors of a discrete solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorComponents {
    /// `‖u - u_h‖²` over the space-time domain.
    pub u: f64,
    /// `‖σ - σ_h‖²`.
    pub sigma: f64,
    /// `‖u - û_h‖²`.
    pub uhat: f64,
    /// `‖u(0,·) - û_h(0,·)‖²` on the initial line.
    pub gamma0: f64,
}

const POINTS: usize = 6;

pub fn error_metrics(mesh: &Mesh, dofs: &DofMap, solution: &Solution, exact: &ExactSolution) -> ErrorComponents {
    let q = gauss_rule(POINTS, POINTS);
    let edge = Rule1d::gauss(POINTS);
    let mut e = ErrorComponents::default();
    for cell in mesh.cells() {
        let (t0, x0, ht, hx) = (cell.t_lo().to_f64(), cell.x_lo().to_f64(), cell.ht(), cell.hx());
        for ((tr, xr), w) in q.iter() {
            let (t, x) = (t0 + ht * tr, x0 + hx * xr);
            let (u, s, uhat) = solution.evaluate_in_cell(mesh, dofs, cell.id, t, x);
            let ue = (exact.u)(t, x);
            let wa = w * ht * hx;
            e.u += wa * (ue - u).powi(2);
            e.sigma += wa * ((exact.sigma)(t, x) - s).powi(2);
            e.uhat += wa * (ue - uhat).powi(2);
        }
        if cell.is_bottom() {
            e.gamma0 += hx * edge.integrate(|xr| {
                let x = x0 + hx * xr;
                let (_, _, uhat) = solution.evaluate_in_cell(mesh, dofs, cell.id, 0.0, x);
                ((exact.u)(0.0, x) - uhat).powi(2)
            });
        }
    }
    e
}

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("rate regression needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("rate regression needs positive values, got ndof {ndof} and value {value}")]
    NonPositive { ndof: f64, value: f64 },
}

/// `-slope` of the least-squares line through `(log ndof, log value)`.
pub fn rate_regression(points: &[(f64, f64)]) -> Result<f64, RateError> {
    if points.len() < 3 {
        return Err(RateError::TooFewPoints(points.len()));
    }
    if let Some(&(ndof, value)) = points.iter().find(|&&(n, v)| !(n > 0.0 && v > 0.0)) {
        return Err(RateError::NonPositive { ndof, value });
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}
