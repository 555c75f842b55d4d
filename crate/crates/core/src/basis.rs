//! Tensor Lagrange bases on equispaced nodes of the reference cell `[0,1]^2`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("only one space dimension is supported, got d={0}")]
    UnsupportedDimension(usize),
}

/// Degree-`k` Lagrange polynomials on the nodes `i/k` of `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lagrange1d {
    nodes: Vec<f64>,
}

impl Lagrange1d {
    pub fn new(degree: usize) -> Self {
        let nodes = if degree == 0 {
            vec![0.5]
        } else {
            (0..=degree).map(|i| i as f64 / degree as f64).collect()
        };
        Lagrange1d { nodes }
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn value(&self, i: usize, s: f64) -> f64 {
        let xi = self.nodes[i];
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &xj)| (s - xj) / (xi - xj))
            .product()
    }

    pub fn derivative(&self, i: usize, s: f64) -> f64 {
        let xi = self.nodes[i];
        let mut sum = 0.0;
        for (m, &xm) in self.nodes.iter().enumerate() {
            if m == i {
                continue;
            }
            let mut term = 1.0 / (xi - xm);
            for (j, &xj) in self.nodes.iter().enumerate() {
                if j != i && j != m {
                    term *= (s - xj) / (xi - xj);
                }
            }
            sum += term;
        }
        sum
    }
}

/// `P_{degree_t} ⊗ P_{degree_x}` on `[0,1]^2`; function `(a, b)` has flat
/// index `a * (degree_x + 1) + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorBasis {
    pub degree_t: usize,
    pub degree_x: usize,
    t: Lagrange1d,
    x: Lagrange1d,
}

impl TensorBasis {
    pub fn new(degree_t: usize, degree_x: usize) -> Self {
        TensorBasis { degree_t, degree_x, t: Lagrange1d::new(degree_t), x: Lagrange1d::new(degree_x) }
    }

    pub fn dim(&self) -> usize {
        (self.degree_t + 1) * (self.degree_x + 1)
    }

    fn split(&self, i: usize) -> (usize, usize) {
        (i / (self.degree_x + 1), i % (self.degree_x + 1))
    }

    /// Reference node `(t̂, x̂)` of function `i`.
    pub fn node(&self, i: usize) -> (f64, f64) {
        let (a, b) = self.split(i);
        (self.t.nodes()[a], self.x.nodes()[b])
    }

    pub fn value(&self, i: usize, t: f64, x: f64) -> f64 {
        let (a, b) = self.split(i);
        self.t.value(a, t) * self.x.value(b, x)
    }

    /// `(∂_t̂, ∂_x̂)` of function `i`.
    pub fn gradient(&self, i: usize, t: f64, x: f64) -> (f64, f64) {
        let (a, b) = self.split(i);
        (
            self.t.derivative(a, t) * self.x.value(b, x),
            self.t.value(a, t) * self.x.derivative(b, x),
        )
    }

    /// Values of all functions at one point.
    pub fn values(&self, t: f64, x: f64) -> Vec<f64> {
        (0..self.dim()).map(|i| self.value(i, t, x)).collect()
    }
}

/// Local test spaces for `(w, χ)`: cubic-by-cubic for `w`, bilinear for `χ`.
pub fn test_basis(dim: usize) -> Result<(TensorBasis, TensorBasis), BasisError> {
    if dim != 1 {
        return Err(BasisError::UnsupportedDimension(dim));
    }
    Ok((TensorBasis::new(3, 3), TensorBasis::new(1, 1)))
}
