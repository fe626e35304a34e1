use std::f64::consts::TAU;

use nalgebra::{Matrix4, SymmetricEigen};

use super::continuous::cd_predict_with;
use super::quadrature::{Rule1d, VSlices};
use super::{
    check_psd, symmetrize, FilterRun, GaussianBelief, QuadratureRule, SmootherRun, TimeMode,
    PSD_TOL,
};
use crate::error::{Error, Result};
use crate::model::{ChirpModel, PositiveMap, StateVector, CHIRP_INDEX};
use crate::simulate::TimeSeries;

/// Quadrature rule with its nodes computed once per pass.
#[derive(Debug, Clone)]
pub(crate) enum Prepared {
    Linearize,
    Sliced(Rule1d),
}

impl Prepared {
    pub fn new(rule: QuadratureRule) -> Result<Self> {
        match rule {
            QuadratureRule::Linearize => Ok(Prepared::Linearize),
            QuadratureRule::GaussHermite(order) => Ok(Prepared::Sliced(Rule1d::new(order)?)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub belief: GaussianBelief,
    /// `Cov[u_{k-1}, u_k]`.
    pub cross_cov: Matrix4<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Update {
    pub belief: GaussianBelief,
    /// `log N(y | H m⁻, S)`.
    pub log_likelihood: f64,
    pub innovation_var: f64,
}

/// Discrete-time (LCD) moment-matched prediction over `dt`.
pub fn predict<M: PositiveMap>(
    model: &ChirpModel<M>,
    belief: &GaussianBelief,
    dt: f64,
    rule: QuadratureRule,
) -> Result<Prediction> {
    predict_with(model, belief, dt, &Prepared::new(rule)?)
}

pub(crate) fn predict_with<M: PositiveMap>(
    model: &ChirpModel<M>,
    belief: &GaussianBelief,
    dt: f64,
    rule: &Prepared,
) -> Result<Prediction> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(Prediction {
            belief: *belief,
            cross_cov: belief.cov,
        });
    }
    let (mean, cov, cross) = match rule {
        Prepared::Linearize => {
            let jac = model.lcd_jacobian(&belief.mean, dt);
            let mean = model.lcd_mean(&belief.mean, dt);
            (mean, jac * belief.cov * jac.transpose(), belief.cov * jac.transpose())
        }
        Prepared::Sliced(rule) => {
            VSlices::new(belief, rule).linear_moments(|v| model.transition_matrix(v, dt))
        }
    };
    let cov = symmetrize(&(cov + model.lcd_cov(dt)));
    check_psd(&cov, PSD_TOL, "predicted")?;
    Ok(Prediction {
        belief: GaussianBelief::new(mean, cov),
        cross_cov: cross,
    })
}

/// Scalar Kalman update against `y = x2 + noise(xi)` in Joseph form.
pub fn update(pred: &GaussianBelief, y: f64, xi: f64) -> Result<Update> {
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument("xi must be > 0".into()));
    }
    let p = &pred.cov;
    let s = p[(CHIRP_INDEX, CHIRP_INDEX)] + xi;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::numerical(format!("innovation variance {s}")));
    }
    let gain: StateVector = p.column(CHIRP_INDEX) / s;
    let innovation = y - pred.mean[CHIRP_INDEX];
    let mean = pred.mean + gain * innovation;
    let mut a = Matrix4::identity();
    for r in 0..4 {
        a[(r, CHIRP_INDEX)] -= gain[r];
    }
    let cov = symmetrize(&(a * p * a.transpose() + gain * gain.transpose() * xi));
    let log_likelihood = -0.5 * ((TAU * s).ln() + innovation * innovation / s);
    Ok(Update {
        belief: GaussianBelief::new(mean, cov),
        log_likelihood,
        innovation_var: s,
    })
}

struct Step {
    predicted: Prediction,
    update: Update,
}

fn forward<M: PositiveMap>(
    model: &ChirpModel<M>,
    series: &TimeSeries,
    rule: QuadratureRule,
    mode: TimeMode,
    mut sink: impl FnMut(Step),
) -> Result<f64> {
    model.params.validate()?;
    if series.is_empty() {
        return Err(Error::InvalidArgument("series is empty".into()));
    }
    if series.t[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "first timestamp precedes the model time origin".into(),
        ));
    }
    if let TimeMode::Continuous { substeps: 0 } = mode {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    let prepared = Prepared::new(rule)?;
    let xi = model.params.xi;
    let mut belief = model.initial_belief();
    let mut prev_t = 0.0;
    let mut nll = 0.0;
    for (k, (&t, &y)) in series.t.iter().zip(&series.y).enumerate() {
        let dt = t - prev_t;
        let predicted = match mode {
            TimeMode::Discrete => predict_with(model, &belief, dt, &prepared),
            TimeMode::Continuous { substeps } => {
                cd_predict_with(model, &belief, dt, &prepared, substeps)
            }
        }
        .map_err(|e| e.at_step(k))?;
        let upd = update(&predicted.belief, y, xi).map_err(|e| e.at_step(k))?;
        nll -= upd.log_likelihood;
        belief = upd.belief;
        prev_t = t;
        sink(Step {
            predicted,
            update: upd,
        });
    }
    if !nll.is_finite() {
        return Err(Error::NumericalFailure {
            step: series.len() - 1,
            reason: "negative log-likelihood is not finite".into(),
        });
    }
    Ok(nll)
}

/// Runs the Gaussian filter over all measurements.
///
/// The prior is anchored at time zero, so the first prediction spans
/// `(0, t_1]`.
pub fn filter<M: PositiveMap>(
    model: &ChirpModel<M>,
    series: &TimeSeries,
    rule: QuadratureRule,
    mode: TimeMode,
) -> Result<FilterRun> {
    let n = series.len();
    let mut predicted = Vec::with_capacity(n);
    let mut filtered = Vec::with_capacity(n);
    let mut cross_covs = Vec::with_capacity(n);
    let mut innovation_vars = Vec::with_capacity(n);
    let nll = forward(model, series, rule, mode, |step| {
        predicted.push(step.predicted.belief);
        cross_covs.push(step.predicted.cross_cov);
        filtered.push(step.update.belief);
        innovation_vars.push(step.update.innovation_var);
    })?;
    Ok(FilterRun {
        times: series.t.clone(),
        initial: model.initial_belief(),
        predicted,
        filtered,
        cross_covs,
        innovation_vars,
        nll,
    })
}

/// Negative log-likelihood only, without storing the pass.
pub fn filter_nll<M: PositiveMap>(
    model: &ChirpModel<M>,
    series: &TimeSeries,
    rule: QuadratureRule,
    mode: TimeMode,
) -> Result<f64> {
    forward(model, series, rule, mode, |_| {})
}

/// Solves `G · P⁻ = D` for the smoother gain.
fn smoother_gain(cross: &Matrix4<f64>, pred_cov: &Matrix4<f64>) -> Option<Matrix4<f64>> {
    if let Some(chol) = pred_cov.cholesky() {
        return Some(chol.solve(&cross.transpose()).transpose());
    }
    // rank-deficient prediction: pseudo-inverse on the eigenbasis
    let eig = SymmetricEigen::new(*pred_cov);
    let cutoff = eig.eigenvalues.abs().max() * 1e-12;
    let inv_vals = eig
        .eigenvalues
        .map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let pinv = eig.eigenvectors * Matrix4::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    let gain = cross * pinv;
    gain.iter().all(|x| x.is_finite()).then_some(gain)
}

/// Rauch-Tung-Striebel backward pass over a completed filter run.
///
/// Cross-covariances were computed during prediction with the same rule, so
/// the smoother needs nothing beyond the run itself.
pub fn smooth(run: &FilterRun) -> Result<SmootherRun> {
    let n = run.len();
    if n == 0 {
        return Err(Error::InvalidArgument("filter run is empty".into()));
    }
    let mut smoothed = run.filtered.clone();
    for k in (0..n - 1).rev() {
        let pred = &run.predicted[k + 1];
        let gain = smoother_gain(&run.cross_covs[k + 1], &pred.cov).ok_or_else(|| {
            Error::NumericalFailure {
                step: k,
                reason: "singular predicted covariance in smoother".into(),
            }
        })?;
        let next = smoothed[k + 1];
        let filt = &run.filtered[k];
        let mean = filt.mean + gain * (next.mean - pred.mean);
        let cov = symmetrize(&(filt.cov + gain * (next.cov - pred.cov) * gain.transpose()));
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure {
                step: k,
                reason: "non-finite smoothed belief".into(),
            });
        }
        smoothed[k] = GaussianBelief::new(mean, cov);
    }
    Ok(SmootherRun {
        times: run.times.clone(),
        smoothed,
    })
}
