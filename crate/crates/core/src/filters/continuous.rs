//! Continuous-discrete prediction: Gaussian moment ODEs between samples.
//!
//! With `a(u) = A(v)·u` the drift,
//!
//! ```text
//! dm/dt = E[a(U)]
//! dP/dt = E[(U - m) a(U)ᵀ] + E[a(U) (U - m)ᵀ] + B Bᵀ
//! dC/dt = C P⁻¹ E[(U - m) a(U)ᵀ]
//! ```
//!
//! where `C = Cov[u_{k-1}, U(t)]` feeds the smoother gain. The last line is
//! what Gaussian conditioning of `u_{k-1}` on `U(t)` gives; it keeps the joint
//! covariance of `(u_{k-1}, U(t))` positive semi-definite under quadrature.
//! When `P` is singular it falls back to `C E[∂a/∂u]ᵀ`, its Stein's-lemma
//! equivalent. The expectations use the same rule as discrete prediction.

use nalgebra::Matrix4;

use super::gaussian::{Prepared, Prediction};
use super::quadrature::VSlices;
use super::{check_psd, symmetrize, GaussianBelief, QuadratureRule, PSD_TOL};
use crate::error::{Error, Result};
use crate::model::{ChirpModel, PositiveMap, StateVector, V_INDEX};

#[derive(Clone, Copy)]
struct Moments {
    mean: StateVector,
    cov: Matrix4<f64>,
    cross: Matrix4<f64>,
}

impl Moments {
    fn axpy(&self, h: f64, d: &Moments) -> Moments {
        Moments {
            mean: self.mean + d.mean * h,
            cov: self.cov + d.cov * h,
            cross: self.cross + d.cross * h,
        }
    }
}

fn rhs<M: PositiveMap>(model: &ChirpModel<M>, state: &Moments, rule: &Prepared) -> Moments {
    let cov = symmetrize(&state.cov);
    let diffusion = model.diffusion();
    match rule {
        Prepared::Linearize => {
            let jac = model.drift_jacobian(&state.mean);
            let pj = cov * jac.transpose();
            Moments {
                mean: model.drift(&state.mean),
                cov: pj + pj.transpose() + diffusion,
                cross: state.cross * jac.transpose(),
            }
        }
        Prepared::Sliced(r) => {
            let slices = VSlices::new(&GaussianBelief::new(state.mean, cov), r);
            let (mean, _, cross_drift) = slices.linear_moments(|v| model.drift_matrix(v));
            let conditioned = cov.cholesky().map(|chol| state.cross * chol.solve(&cross_drift));
            let cross = conditioned.unwrap_or_else(|| {
                let mean_jac = slices.expect_matrix(|mu| {
                    let v = mu[V_INDEX];
                    let mut j = model.drift_matrix(v);
                    let col = model.drift_matrix_dv(v) * mu;
                    for row in 0..4 {
                        j[(row, V_INDEX)] += col[row];
                    }
                    j
                });
                state.cross * mean_jac.transpose()
            });
            Moments {
                mean,
                cov: cross_drift + cross_drift.transpose() + diffusion,
                cross,
            }
        }
    }
}

/// Integrates the moment ODEs over `dt` with `n_substeps` RK4 steps.
pub fn cd_predict<M: PositiveMap>(
    model: &ChirpModel<M>,
    belief: &GaussianBelief,
    dt: f64,
    rule: QuadratureRule,
    n_substeps: usize,
) -> Result<Prediction> {
    cd_predict_with(model, belief, dt, &Prepared::new(rule)?, n_substeps)
}

pub(crate) fn cd_predict_with<M: PositiveMap>(
    model: &ChirpModel<M>,
    belief: &GaussianBelief,
    dt: f64,
    rule: &Prepared,
    n_substeps: usize,
) -> Result<Prediction> {
    if n_substeps == 0 {
        return Err(Error::InvalidArgument("n_substeps must be >= 1".into()));
    }
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(Prediction {
            belief: *belief,
            cross_cov: belief.cov,
        });
    }
    let h = dt / n_substeps as f64;
    let mut state = Moments {
        mean: belief.mean,
        cov: belief.cov,
        cross: belief.cov,
    };
    for _ in 0..n_substeps {
        let k1 = rhs(model, &state, rule);
        let k2 = rhs(model, &state.axpy(0.5 * h, &k1), rule);
        let k3 = rhs(model, &state.axpy(0.5 * h, &k2), rule);
        let k4 = rhs(model, &state.axpy(h, &k3), rule);
        state = Moments {
            mean: state.mean + (k1.mean + (k2.mean + k3.mean) * 2.0 + k4.mean) * (h / 6.0),
            cov: symmetrize(
                &(state.cov + (k1.cov + (k2.cov + k3.cov) * 2.0 + k4.cov) * (h / 6.0)),
            ),
            cross: state.cross + (k1.cross + (k2.cross + k3.cross) * 2.0 + k4.cross) * (h / 6.0),
        };
    }
    check_psd(&state.cov, PSD_TOL, "continuous-discrete predicted")?;
    if state.mean.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite predicted mean"));
    }
    Ok(Prediction {
        belief: GaussianBelief::new(state.mean, state.cov),
        cross_cov: state.cross,
    })
}
