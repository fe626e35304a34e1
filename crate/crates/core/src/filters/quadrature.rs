//! Gauss-Hermite rules for expectations under Gaussian beliefs.
//!
//! The chirp/IF dynamics are linear in the state once `v` is fixed. A
//! tensor-product rule built on a square-root factor whose first column is the
//! only one touching `v` therefore collapses: the remaining `order^3` nodes
//! integrate a quadratic exactly, so they can be replaced by closed-form
//! conditional moments. [`VSlices`] holds that reduced rule; for orders >= 2
//! it reproduces the full tensor-product result to rounding error.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};

use super::GaussianBelief;
use crate::error::{Error, Result};
use crate::model::{StateVector, V_INDEX};

pub const MAX_GH_ORDER: usize = 20;

/// One-dimensional probabilists' Gauss-Hermite rule for `N(0, 1)`.
///
/// Nodes are the eigenvalues of the Hermite Jacobi matrix (Golub-Welsch),
/// symmetrised about zero.
pub fn gh_1d(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 || order > MAX_GH_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// Tensor-product Gauss-Hermite nodes and weights for `N(0, I_dim)`.
pub fn gh_points(dim: usize, order: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let (x, w) = gh_1d(order)?;
    let count = order.pow(dim as u32);
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for flat in 0..count {
        let mut rem = flat;
        let mut node = vec![0.0; dim];
        let mut weight = 1.0;
        for slot in node.iter_mut().rev() {
            let i = rem % order;
            rem /= order;
            *slot = x[i];
            weight *= w[i];
        }
        nodes.push(node);
        weights.push(weight);
    }
    Ok((nodes, weights))
}

/// Prepared one-dimensional rule, shared across the steps of a pass.
#[derive(Debug, Clone)]
pub(crate) struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            // the sliced reduction relies on exactness for quadratics
            return Err(Error::UnsupportedOrder(order));
        }
        let (nodes, weights) = gh_1d(order)?;
        Ok(Self { nodes, weights })
    }
}

/// A belief decomposed along `v`: `u = μ_i + r` with `r ~ N(0, residual)`
/// independent of the `v` node.
#[derive(Debug, Clone)]
pub(crate) struct VSlices {
    pub mean: StateVector,
    pub residual: Matrix4<f64>,
    pub points: Vec<(f64, StateVector)>,
}

impl VSlices {
    pub fn new(belief: &GaussianBelief, rule: &Rule1d) -> Self {
        let p = &belief.cov;
        let pvv = p[(V_INDEX, V_INDEX)];
        if pvv <= 0.0 {
            return Self {
                mean: belief.mean,
                residual: *p,
                points: vec![(1.0, belief.mean)],
            };
        }
        let col: StateVector = p.column(V_INDEX) / pvv.sqrt();
        let mut residual = p - col * col.transpose();
        for i in 0..4 {
            residual[(V_INDEX, i)] = 0.0;
            residual[(i, V_INDEX)] = 0.0;
        }
        let points = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| (w, belief.mean + col * x))
            .collect();
        Self {
            mean: belief.mean,
            residual,
            points,
        }
    }

    /// Moments of `u ↦ A(v)·u`: mean, covariance and `Cov[u, A(v)u]`.
    pub fn linear_moments(
        &self,
        matrix: impl Fn(f64) -> Matrix4<f64>,
    ) -> (StateVector, Matrix4<f64>, Matrix4<f64>) {
        let mapped: Vec<(f64, Matrix4<f64>, StateVector)> = self
            .points
            .iter()
            .map(|&(w, mu)| {
                let a = matrix(mu[V_INDEX]);
                (w, a, a * mu)
            })
            .collect();
        let mean = mapped
            .iter()
            .fold(StateVector::zeros(), |acc, (w, _, y)| acc + y * *w);
        let mut cov = Matrix4::zeros();
        let mut cross = Matrix4::zeros();
        for ((w, a, y), (_, mu)) in mapped.iter().zip(&self.points) {
            let dy = y - mean;
            let ra = self.residual * a.transpose();
            cov += (dy * dy.transpose() + a * ra) * *w;
            cross += ((mu - self.mean) * dy.transpose() + ra) * *w;
        }
        (mean, cov, cross)
    }

    pub fn expect_matrix(&self, f: impl Fn(&StateVector) -> Matrix4<f64>) -> Matrix4<f64> {
        self.points
            .iter()
            .fold(Matrix4::zeros(), |acc, (w, mu)| acc + f(mu) * *w)
    }
}

/// Expectation of `f(u)` under `N(m, S·Sᵀ)` with the full tensor-product rule
/// on the supplied square-root factor.
pub fn tensor_expectation<const R: usize, const C: usize>(
    mean: &StateVector,
    sqrt: &Matrix4<f64>,
    order: usize,
    f: impl Fn(&StateVector) -> nalgebra::SMatrix<f64, R, C>,
) -> Result<nalgebra::SMatrix<f64, R, C>> {
    let (nodes, weights) = gh_points(4, order)?;
    Ok(nodes
        .iter()
        .zip(&weights)
        .fold(nalgebra::SMatrix::zeros(), |acc, (xi, w)| {
            let u = mean + sqrt * StateVector::from_column_slice(xi);
            acc + f(&u) * *w
        }))
}
