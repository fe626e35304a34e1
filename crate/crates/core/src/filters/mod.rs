//! Gaussian filtering and smoothing for the chirp/IF model.
//!
//! Prediction integrals are approximated either by first-order linearisation
//! or by Gauss-Hermite quadrature. Prediction can use the closed-form LCD
//! discretisation ([`TimeMode::Discrete`]) or integrate the Gaussian moment
//! ODEs between measurements ([`TimeMode::Continuous`]).

mod continuous;
mod estimate;
mod gaussian;
pub mod quadrature;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StateVector;

pub use continuous::cd_predict;
pub use estimate::{extract_if, IfEstimate};
pub use gaussian::{filter, filter_nll, predict, smooth, update, Prediction, Update};
pub use quadrature::{gh_points, MAX_GH_ORDER};

/// Mean and covariance of the joint state at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: StateVector,
    pub cov: Matrix4<f64>,
}

impl GaussianBelief {
    pub fn new(mean: StateVector, cov: Matrix4<f64>) -> Self {
        Self { mean, cov }
    }

    /// Checks finiteness, symmetry and numerical positive semi-definiteness.
    pub fn validate(&self, eig_tol: f64) -> Result<()> {
        if self.mean.iter().chain(self.cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::numerical("non-finite belief"));
        }
        let scale = self.cov.abs().max().max(1.0);
        if (self.cov - self.cov.transpose()).abs().max() > 1e-10 * scale {
            return Err(Error::numerical("covariance is not symmetric"));
        }
        let min_eig = self.cov.symmetric_eigenvalues().min();
        if min_eig < -eig_tol {
            return Err(Error::numerical(format!(
                "covariance has eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadratureRule {
    /// First-order Taylor expansion (extended Kalman filter/smoother).
    Linearize,
    /// Tensor-product Gauss-Hermite rule of the given order per axis.
    GaussHermite(usize),
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::GaussHermite(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeMode {
    /// Closed-form LCD discretisation between measurements.
    Discrete,
    /// Moment ODEs integrated with RK4 using `substeps` per interval.
    Continuous { substeps: usize },
}

impl Default for TimeMode {
    fn default() -> Self {
        TimeMode::Discrete
    }
}

impl TimeMode {
    pub const DEFAULT_SUBSTEPS: usize = 10;

    pub fn continuous() -> Self {
        TimeMode::Continuous {
            substeps: Self::DEFAULT_SUBSTEPS,
        }
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub times: Vec<f64>,
    /// Prior at the model time origin.
    pub initial: GaussianBelief,
    pub predicted: Vec<GaussianBelief>,
    pub filtered: Vec<GaussianBelief>,
    /// `Cov[u_{k-1}, u_k]` under the previous filtering belief, used by the
    /// smoother gain.
    pub cross_covs: Vec<Matrix4<f64>>,
    pub innovation_vars: Vec<f64>,
    pub nll: f64,
}

impl FilterRun {
    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SmootherRun {
    pub times: Vec<f64>,
    pub smoothed: Vec<GaussianBelief>,
}

pub(crate) fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Rejects covariances with an eigenvalue below `-tol`, using a shifted
/// Cholesky factorisation as the test.
pub(crate) fn check_psd(p: &Matrix4<f64>, tol: f64, what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(format!("{what} covariance is not finite")));
    }
    if (p + Matrix4::identity() * tol).cholesky().is_none() {
        return Err(Error::numerical(format!(
            "{what} covariance lost positive semi-definiteness"
        )));
    }
    Ok(())
}

/// Eigenvalue tolerance used when validating predicted covariances.
pub(crate) const PSD_TOL: f64 = 1e-6;
