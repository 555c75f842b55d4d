//! Local Gram, trial and load blocks and the global normal equations.
//!
//! Local test functions are ordered `w_0..w_15`, `χ_0..χ_3`, then on bottom
//! cells `ξ_0, ξ_1` (the P1 nodal basis of the bottom side). Local trial
//! columns follow [`crate::dofmap`].

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::basis::{test_basis, TensorBasis};
use crate::dofmap::{Column, DofMap, N_LOCAL_TRIAL};
use crate::experiments::{Axis, Problem};
use crate::mesh::{Cell, Mesh};
use crate::quadrature::{gauss_rule, graded_rule, QuadRule, RefEdge, Rule1d};

pub const N_W: usize = 16;
pub const N_CHI: usize = 4;
pub const N_XI: usize = 2;
pub const GRADED_LEVELS: u32 = 40;
pub const LOAD_POINTS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("Gram matrix of cell {cell} is not positive definite")]
    GramNotPositive { cell: usize },
    #[error("singular line of the load crosses the interior of cell {cell}")]
    SingularInterior { cell: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AssemblyMode {
    #[default]
    Full,
    /// Eliminates the cellwise `(u, σ)` unknowns, leaving a trace-only system.
    Condensed,
}

pub fn n_test(bottom: bool) -> usize {
    N_W + N_CHI + if bottom { N_XI } else { 0 }
}

/// Everything about a cell that depends only on its size and on whether it
/// touches `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShapeKey {
    pub level_t: u32,
    pub level_x: u32,
    pub bottom: bool,
}

impl ShapeKey {
    pub fn of(cell: &Cell) -> ShapeKey {
        ShapeKey { level_t: cell.level_t(), level_x: cell.level_x(), bottom: cell.is_bottom() }
    }

    pub fn ht(&self) -> f64 {
        0.5f64.powi(self.level_t as i32)
    }

    pub fn hx(&self) -> f64 {
        0.5f64.powi(self.level_x as i32)
    }
}

/// Per-shape local matrices. `L` is a triangular factor with `G = L Lᵀ`,
/// `C = L⁻¹ B` and `S = Cᵀ C` the local normal matrix.
#[derive(Clone, Debug)]
pub struct ShapeData {
    pub key: ShapeKey,
    pub gram: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

impl ShapeData {
    pub fn n_test(&self) -> usize {
        self.gram.nrows()
    }

    /// `L⁻¹ v`.
    pub fn lower_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.l.solve_lower_triangular(v).expect("factor has a nonzero diagonal")
    }

    /// `G⁻¹ v`.
    pub fn gram_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let y = self.lower_solve(v);
        self.l.transpose().solve_upper_triangular(&y).expect("factor has a nonzero diagonal")
    }
}

/// Memo of [`ShapeData`]; reusable across meshes of one refinement sequence.
#[derive(Debug, Default)]
pub struct ShapeCache {
    map: HashMap<ShapeKey, Arc<ShapeData>>,
}

impl ShapeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, key: ShapeKey) -> Result<Arc<ShapeData>, AssemblyError> {
        if let Some(s) = self.map.get(&key) {
            return Ok(s.clone());
        }
        let data = Arc::new(shape_data(key)?);
        self.map.insert(key, data.clone());
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

struct TestSpace {
    w: TensorBasis,
    chi: TensorBasis,
}

fn test_space() -> TestSpace {
    let (w, chi) = test_basis(1).expect("one space dimension");
    TestSpace { w, chi }
}

/// Values at one point of `(w, χ, A*_1, A*_2)` for every volume test function.
fn test_features(sp: &TestSpace, t: f64, x: f64, ht: f64, hx: f64) -> [[f64; 4]; N_W + N_CHI] {
    let mut out = [[0.0; 4]; N_W + N_CHI];
    for (i, row) in out.iter_mut().enumerate().take(N_W) {
        let v = sp.w.value(i, t, x);
        let (gt, gx) = sp.w.gradient(i, t, x);
        *row = [v, 0.0, -gt / ht, -gx / hx];
    }
    for j in 0..N_CHI {
        let v = sp.chi.value(j, t, x);
        let (_, gx) = sp.chi.gradient(j, t, x);
        out[N_W + j] = [0.0, v, -gx / hx, v];
    }
    out
}

fn xi(k: usize, x: f64) -> f64 {
    if k == 0 {
        1.0 - x
    } else {
        x
    }
}

/// Rows of weighted feature values whose Gram product is the local Gram matrix.
fn feature_matrix(key: ShapeKey) -> DMatrix<f64> {
    let sp = test_space();
    let (ht, hx) = (key.ht(), key.hx());
    let q = gauss_rule(4, 4);
    let rule_x = Rule1d::gauss(4);
    let n = n_test(key.bottom);
    let rows = 4 * q.len() + if key.bottom { rule_x.len() } else { 0 };
    let mut phi = DMatrix::zeros(rows, n);
    for (k, ((t, x), wq)) in q.iter().enumerate() {
        let s = (wq * ht * hx).sqrt();
        let feats = test_features(&sp, t, x, ht, hx);
        for (i, f) in feats.iter().enumerate() {
            for c in 0..4 {
                phi[(4 * k + c, i)] = s * f[c];
            }
        }
    }
    if key.bottom {
        let base = 4 * q.len();
        for (k, (&x, &wq)) in rule_x.points.iter().zip(&rule_x.weights).enumerate() {
            let s = (wq * hx).sqrt();
            for m in 0..N_XI {
                phi[(base + k, N_W + N_CHI + m)] = s * xi(m, x);
            }
        }
    }
    phi
}

/// Gram matrix of the test inner product on a cell.
pub fn local_gram(cell: &Cell) -> DMatrix<f64> {
    let phi = feature_matrix(ShapeKey::of(cell));
    phi.transpose() * &phi
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // a NaN pivot must fail the check
fn shape_data(key: ShapeKey) -> Result<ShapeData, AssemblyError> {
    let phi = feature_matrix(key);
    let gram = phi.transpose() * &phi;
    // QR of the feature matrix avoids squaring the condition number of G
    let r = phi.qr().r();
    let dmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| !(v.abs() > 1e-14 * dmax)) {
        return Err(AssemblyError::GramNotPositive { cell: usize::MAX });
    }
    let l = r.transpose();
    let b = local_b_shape(key);
    let c = l.solve_lower_triangular(&b).expect("nonzero diagonal");
    let s = c.transpose() * &c;
    Ok(ShapeData { key, gram, l, b, c, s })
}

fn local_b_shape(key: ShapeKey) -> DMatrix<f64> {
    let sp = test_space();
    let (ht, hx) = (key.ht(), key.hx());
    let nt = n_test(key.bottom);
    let mut b = DMatrix::zeros(nt, N_LOCAL_TRIAL);
    let q = gauss_rule(4, 4);
    let corners = TensorBasis::new(1, 1);
    for ((t, x), wq) in q.iter() {
        let wgt = wq * ht * hx;
        let feats = test_features(&sp, t, x, ht, hx);
        for (i, f) in feats.iter().enumerate() {
            let [wv, cv, a1, a2] = *f;
            b[(i, 0)] += wgt * a1;
            b[(i, 1)] += wgt * a2;
            for c in 0..4 {
                let n = corners.value(c, t, x);
                let (nt_, nx_) = corners.gradient(c, t, x);
                // ⟨∂t û, w⟩ + ⟨∂x û, χ⟩ + ⟨û, ∂t w + ∂x χ⟩ with ∂t w + ∂x χ = -A*_1
                b[(i, 2 + c)] += wgt * (nt_ / ht * wv + nx_ / hx * cv - n * a1);
            }
        }
    }
    let g = Rule1d::gauss(4);
    for (&s, &wq) in g.points.iter().zip(&g.weights) {
        for i in 0..N_W {
            b[(i, 6)] -= ht * wq * sp.w.value(i, s, 0.0);
            b[(i, 7)] += ht * wq * sp.w.value(i, s, 1.0);
        }
        if key.bottom {
            for m in 0..N_XI {
                for c in 0..4 {
                    b[(N_W + N_CHI + m, 2 + c)] += hx * wq * corners.value(c, 0.0, s) * xi(m, s);
                }
            }
        }
    }
    b
}

/// Trial block of a cell and its local-to-global column map.
pub fn local_b(cell: &Cell, dofs: &DofMap) -> (DMatrix<f64>, [Column; N_LOCAL_TRIAL]) {
    (local_b_shape(ShapeKey::of(cell)), dofs.cell_columns(cell.id))
}

/// Reference-coordinate breakpoints of `lines` strictly inside `[lo, hi]`.
fn breaks(lines: &[crate::dyadic::DyadicCoord], iv: crate::dyadic::DyadicInterval) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut inner: Vec<f64> =
        lines.iter().filter(|&&c| iv.contains_interior(c)).map(|&c| iv.to_reference(c.to_f64())).collect();
    inner.sort_by(f64::total_cmp);
    out.extend(inner);
    out.push(1.0);
    out
}

/// Quadrature for integrals of the load over a cell: Gauss with
/// [`LOAD_POINTS`] points per direction, split at jump lines and graded
/// toward a singular edge.
pub fn load_rule(cell: &Cell, problem: &Problem) -> Result<QuadRule, AssemblyError> {
    load_rule_graded(cell, problem).map(|(q, _)| q)
}

/// Singular edge touched by a cell: axis, whether it is the low edge, and the
/// graded rule toward 0 on that axis (exact small offsets).
type GradedEdge = (Axis, bool, Rule1d);

fn load_rule_graded(cell: &Cell, problem: &Problem) -> Result<(QuadRule, Option<GradedEdge>), AssemblyError> {
    let g = Rule1d::gauss(LOAD_POINTS);
    let base = QuadRule::tensor(
        Rule1d::composite(&g, &breaks(&problem.f_jumps_t, cell.t)),
        Rule1d::composite(&g, &breaks(&problem.f_jumps_x, cell.x)),
    );
    let Some(line) = problem.singular else { return Ok((base, None)) };
    let (iv, low, high, axis_rule) = match line.axis {
        Axis::Space => (cell.x, RefEdge::SpaceLow, RefEdge::SpaceHigh, &base.x),
        Axis::Time => (cell.t, RefEdge::TimeLow, RefEdge::TimeHigh, &base.t),
    };
    if iv.contains_interior(line.position) {
        Err(AssemblyError::SingularInterior { cell: cell.id })
    } else if iv.lo() == line.position {
        let toward = Rule1d::graded(axis_rule, GRADED_LEVELS, true);
        Ok((graded_rule(low, GRADED_LEVELS, &base), Some((line.axis, true, toward))))
    } else if iv.hi() == line.position {
        let toward = Rule1d::graded(axis_rule, GRADED_LEVELS, true);
        Ok((graded_rule(high, GRADED_LEVELS, &base), Some((line.axis, false, toward))))
    } else {
        Ok((base, None))
    }
}

/// Load rule of a cell with `f` sampled at its points, row-major in `(t, x)`.
fn load_samples(cell: &Cell, problem: &Problem) -> Result<(QuadRule, Vec<f64>), AssemblyError> {
    let (q, edge) = load_rule_graded(cell, problem)?;
    let (t0, x0, ht, hx) = (cell.t_lo().to_f64(), cell.x_lo().to_f64(), cell.ht(), cell.hx());
    let (nt, nx) = (q.t.len(), q.x.len());
    let mut values = Vec::with_capacity(nt * nx);
    match (edge, &problem.f_offset) {
        (Some((axis, is_low, toward)), Some(fo)) => {
            // offsets from the edge, in the order of the (possibly reflected) rule
            let h = if axis == Axis::Space { hx } else { ht };
            let n = toward.len();
            let offset = |k: usize| if is_low { h * toward.points[k] } else { -h * toward.points[n - 1 - k] };
            for i in 0..nt {
                for j in 0..nx {
                    values.push(match axis {
                        Axis::Space => fo(t0 + ht * q.t.points[i], offset(j)),
                        Axis::Time => fo(x0 + hx * q.x.points[j], offset(i)),
                    });
                }
            }
        }
        _ => {
            for &t in &q.t.points {
                for &x in &q.x.points {
                    values.push((problem.f)(t0 + ht * t, x0 + hx * x));
                }
            }
        }
    }
    Ok((q, values))
}

/// Quadrature on the bottom side of a cell, split at jumps of `u0`.
pub fn initial_rule(cell: &Cell, problem: &Problem) -> Rule1d {
    Rule1d::composite(&Rule1d::gauss(LOAD_POINTS), &breaks(&problem.u0_jumps, cell.x))
}

/// Load block `(∫ f w_i, ∫ u0 ξ_k)`.
pub fn local_load(cell: &Cell, problem: &Problem) -> Result<DVector<f64>, AssemblyError> {
    let sp = test_space();
    let mut out = DVector::zeros(n_test(cell.is_bottom()));
    let (q, fvals) = load_samples(cell, problem)?;
    let (x0, ht, hx) = (cell.x_lo().to_f64(), cell.ht(), cell.hx());
    // separable evaluation: g[a][b] = Σ_t wt Lt_a Σ_x wx f Lx_b
    let lt = crate::basis::Lagrange1d::new(sp.w.degree_t);
    let lx = crate::basis::Lagrange1d::new(sp.w.degree_x);
    let (na, nb) = (lt.len(), lx.len());
    let mut acc = vec![0.0; na * nb];
    let lx_vals: Vec<Vec<f64>> = q.x.points.iter().map(|&x| (0..nb).map(|b| lx.value(b, x)).collect()).collect();
    let nx = q.x.len();
    for (i, (&t, &wt)) in q.t.points.iter().zip(&q.t.weights).enumerate() {
        let mut inner = vec![0.0; nb];
        for (k, &wx) in q.x.weights.iter().enumerate() {
            let fv = wx * fvals[i * nx + k];
            for b in 0..nb {
                inner[b] += fv * lx_vals[k][b];
            }
        }
        for a in 0..na {
            let la = wt * lt.value(a, t);
            for b in 0..nb {
                acc[a * nb + b] += la * inner[b];
            }
        }
    }
    for i in 0..N_W {
        out[i] = ht * hx * acc[i];
    }
    if cell.is_bottom() {
        let r = initial_rule(cell, problem);
        for m in 0..N_XI {
            out[N_W + N_CHI + m] = hx * r.integrate(|x| (problem.u0)(x0 + hx * x) * xi(m, x));
        }
    }
    Ok(out)
}

/// `(h_x² ‖P(f - mean f)‖², ‖f - P f‖²)` on a cell, `P` the time average.
pub fn data_oscillation(cell: &Cell, problem: &Problem) -> Result<(f64, f64), AssemblyError> {
    let (q, fvals) = load_samples(cell, problem)?;
    let hx = cell.hx();
    let nx = q.x.len();
    let mut mean = 0.0;
    let mut osc_time = 0.0;
    let mut avgs = Vec::with_capacity(nx);
    for (j, &wx) in q.x.weights.iter().enumerate() {
        let vals: Vec<f64> = (0..q.t.len()).map(|i| fvals[i * nx + j]).collect();
        let avg: f64 = vals.iter().zip(&q.t.weights).map(|(v, w)| v * w).sum();
        osc_time += wx * vals.iter().zip(&q.t.weights).map(|(v, w)| w * (v - avg).powi(2)).sum::<f64>();
        mean += wx * avg;
        avgs.push(avg);
    }
    let spread: f64 = avgs.iter().zip(&q.x.weights).map(|(a, w)| w * (a - mean).powi(2)).sum();
    let area = cell.area();
    Ok((hx * hx * area * spread, area * osc_time))
}

/// `‖u0 - v‖²` on the bottom side of a cell, `v` affine with the given end values.
pub fn initial_mismatch(cell: &Cell, problem: &Problem, values: (f64, f64)) -> f64 {
    let r = initial_rule(cell, problem);
    let (x0, hx) = (cell.x_lo().to_f64(), cell.hx());
    hx * r.integrate(|x| ((problem.u0)(x0 + hx * x) - (values.0 * (1.0 - x) + values.1 * x)).powi(2))
}

/// Square sparse matrix in compressed rows with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Pattern from per-row column lists (duplicates allowed), zero values.
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> CsrMatrix {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix { n, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].binary_search(&j).ok().map(|k| a + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds to an entry that is part of the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.position(i, j).expect("entry outside the sparsity pattern");
        self.values[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            *yi = self.col_idx[a..b].iter().zip(&self.values[a..b]).map(|(&j, v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                worst = worst.max((self.values[k] - self.get(self.col_idx[k], i)).abs());
            }
        }
        worst / scale
    }
}

/// Data kept per cell for field recovery after a condensed solve.
#[derive(Clone, Debug)]
pub struct CondensedCell {
    /// `S_ff⁻¹` of the 2×2 field block.
    pub sff_inv: nalgebra::Matrix2<f64>,
    /// Coupling of the field rows to the six local trace columns.
    pub sft: nalgebra::SMatrix<f64, 2, 6>,
    pub rf: nalgebra::Vector2<f64>,
}

/// Normal equations of the discrete residual minimization.
#[derive(Clone, Debug)]
pub struct NormalSystem {
    pub mode: AssemblyMode,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_trace: usize,
    pub n_total: usize,
    /// Per cell, only in condensed mode.
    pub condensed: Vec<CondensedCell>,
}

/// Per-cell data retained for the estimator.
#[derive(Clone, Debug)]
pub struct CellData {
    pub shape: Arc<ShapeData>,
    pub load: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct Assembled {
    pub system: NormalSystem,
    pub cells: Vec<CellData>,
}

/// Builds `S = Σ Bᵀ G⁻¹ B` and `Σ Bᵀ G⁻¹ F`, constraints expanded at scatter time.
pub fn assemble(
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &Problem,
    mode: AssemblyMode,
    cache: &mut ShapeCache,
) -> Result<Assembled, AssemblyError> {
    let n_trace = dofs.n_trace();
    let n_total = dofs.n_total();
    let n = match mode {
        AssemblyMode::Full => n_total,
        AssemblyMode::Condensed => n_trace,
    };
    let mut cells = Vec::with_capacity(mesh.n_cells());
    let mut cols_of = Vec::with_capacity(mesh.n_cells());
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for cell in mesh.cells() {
        let shape = cache.get(ShapeKey::of(cell)).map_err(|_| AssemblyError::GramNotPositive { cell: cell.id })?;
        let load = local_load(cell, problem)?;
        cells.push(CellData { shape, load });
        let cols = dofs.cell_columns(cell.id);
        let first = if mode == AssemblyMode::Condensed { 2 } else { 0 };
        let mut globals: Vec<usize> = cols[first..].iter().flatten().map(|&(g, _)| g).collect();
        globals.sort_unstable();
        globals.dedup();
        for &g in &globals {
            rows[g].extend_from_slice(&globals);
        }
        cols_of.push(cols);
    }
    let mut matrix = CsrMatrix::from_pattern(rows);
    let mut rhs = vec![0.0; n];
    let mut condensed = Vec::new();

    for (k, data) in cells.iter().enumerate() {
        let sh = &data.shape;
        let d = sh.lower_solve(&data.load);
        let r_loc = sh.c.transpose() * d;
        let cols = &cols_of[k];
        let (s_loc, r_loc, first) = match mode {
            AssemblyMode::Full => (sh.s.clone(), r_loc, 0),
            AssemblyMode::Condensed => {
                let sff = sh.s.fixed_view::<2, 2>(0, 0).into_owned();
                let sft = sh.s.fixed_view::<2, 6>(0, 2).into_owned();
                let stt = sh.s.view((2, 2), (6, 6)).into_owned();
                let sff_inv = sff.try_inverse().ok_or(AssemblyError::GramNotPositive { cell: k })?;
                let rf = nalgebra::Vector2::new(r_loc[0], r_loc[1]);
                let schur = stt - sft.transpose() * sff_inv * sft;
                let rt = r_loc.rows(2, 6).into_owned() - sft.transpose() * (sff_inv * rf);
                condensed.push(CondensedCell { sff_inv, sft, rf });
                let mut s_full = DMatrix::zeros(N_LOCAL_TRIAL, N_LOCAL_TRIAL);
                s_full.view_mut((2, 2), (6, 6)).copy_from(&schur);
                let mut r_full = DVector::zeros(N_LOCAL_TRIAL);
                r_full.rows_mut(2, 6).copy_from(&rt);
                (s_full, r_full, 2)
            }
        };
        for a in first..N_LOCAL_TRIAL {
            for &(ga, wa) in &cols[a] {
                rhs[ga] += wa * r_loc[a];
                for b in first..N_LOCAL_TRIAL {
                    let v = s_loc[(a, b)];
                    if v == 0.0 {
                        continue;
                    }
                    for &(gb, wb) in &cols[b] {
                        matrix.add(ga, gb, wa * wb * v);
                    }
                }
            }
        }
    }
    Ok(Assembled { system: NormalSystem { mode, matrix, rhs, n_trace, n_total, condensed }, cells })
}
