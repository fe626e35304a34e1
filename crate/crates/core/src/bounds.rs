//! Mean-square error bound for the IF estimate of the Gaussian filter.
//!
//! With `E_k = E|g⁻¹(f_k) - H_V m_k|²` the error satisfies the recursion
//! `E_k <= 3 z(Δ_k) E_{k-1} + γ + ζ_k`, whose unrolled form is evaluated by
//! [`error_bound`]. [`corollary_bound`] is the contractive closed form valid
//! for `c_K < 1/2` and `z <= c_z < 1/3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::quadrature::{Rule1d, VSlices};
use crate::filters::{FilterRun, GaussianBelief};
use crate::model::{ChirpModel, PositiveMap, StateVector, V_INDEX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Uniform bound on the growth factor `z(Δ_j)`.
    pub c_z: f64,
    /// Offset `c` of the IF-regularity assumption.
    pub c: f64,
    /// Bound on `tr P_k`.
    pub c_p: f64,
    /// Bound on `‖P⁻_k‖₂²`.
    pub c_pbar: f64,
    /// Infimum of the chirp noise variance over the steps.
    pub c_sigma: f64,
    /// Measurement-noise variance.
    pub xi: f64,
    /// Bound on `‖I - K H‖₂²`; derived from the other constants when absent.
    pub c_k: Option<f64>,
    pub e0: f64,
    pub m0_norm_sq: f64,
    pub trace_p0: f64,
}

impl BoundConstants {
    /// Every constant finite and non-negative, with `c_Σ + Ξ > 0`.
    pub fn check(&self) -> Result<()> {
        let named = [
            ("c_z", self.c_z),
            ("c", self.c),
            ("c_p", self.c_p),
            ("c_pbar", self.c_pbar),
            ("c_sigma", self.c_sigma),
            ("xi", self.xi),
            ("e0", self.e0),
            ("m0_norm_sq", self.m0_norm_sq),
            ("trace_p0", self.trace_p0),
            ("c_k", self.c_k.unwrap_or(0.0)),
        ];
        if let Some((name, v)) = named.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "constant {name} = {v} must be finite and >= 0"
            )));
        }
        if self.c_sigma + self.xi <= 0.0 {
            return Err(Error::InvalidArgument("c_sigma + xi must be > 0".into()));
        }
        Ok(())
    }

    fn gain_sq(&self) -> f64 {
        self.c_pbar / (self.c_sigma + self.xi).powi(2)
    }

    /// `c_K`, defaulting to `1 + κ(1 + 2√c_P̄/(c_Σ+Ξ))` with
    /// `κ = c_P̄/(c_Σ+Ξ)²` the squared gain bound.
    pub fn c_k(&self) -> f64 {
        self.c_k.unwrap_or_else(|| {
            1.0 + self.gain_sq() * (1.0 + 2.0 * self.c_pbar.sqrt() / (self.c_sigma + self.xi))
        })
    }

    fn mean_growth_offset(&self) -> f64 {
        2.0 * self.gain_sq() * (1.0 + self.xi) + self.c_p
    }
}

/// `γ = 3c + 6 c_P̄ / (c_Σ + Ξ)²`.
pub fn gamma_const(bc: &BoundConstants) -> Result<f64> {
    bc.check()?;
    Ok(3.0 * bc.c + 6.0 * bc.gain_sq())
}

/// `ζ_k`, including the geometric partial sum `Σ_{j<k} (2c_K)^j`.
pub fn zeta_k(k: usize, bc: &BoundConstants) -> Result<f64> {
    bc.check()?;
    if k == 0 {
        return Err(Error::InvalidArgument("zeta_k needs k >= 1".into()));
    }
    let a = 3.0 * bc.gain_sq();
    let r = 2.0 * bc.c_k();
    let partial: f64 = (0..k).map(|j| r.powi(j as i32)).sum();
    Ok(r.powi(k as i32) * a * (bc.m0_norm_sq + bc.trace_p0)
        + a * bc.mean_growth_offset() * partial)
}

/// Unrolled bound at step `k` given per-step growth factors `z[j-1] = z(Δ_j)`.
pub fn error_bound(k: usize, z: &[f64], bc: &BoundConstants) -> Result<f64> {
    if z.len() < k {
        return Err(Error::InvalidArgument(format!(
            "need {k} growth factors, got {}",
            z.len()
        )));
    }
    if z.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("growth factors must be >= 0".into()));
    }
    let gamma = gamma_const(bc)?;
    let head: f64 = z[..k].iter().map(|zj| 3.0 * zj).product();
    // tail(j) = Π_{i=1}^{j-1} 3 z(Δ_{k-i+1}); z is zero-based
    let mut total = bc.e0 * head;
    let mut tail = 1.0;
    for j in 1..=k {
        if j > 1 {
            tail *= 3.0 * z[k - (j - 1)];
        }
        total += (gamma + zeta_k(k - j + 1, bc)?) * tail;
    }
    Ok(total)
}

/// Contractive closed form `(3c_z)^k e₀ + (γ + ζ̄)/(1 - 3c_z)`.
pub fn corollary_bound(k: usize, bc: &BoundConstants) -> Result<f64> {
    bc.check()?;
    let c_k = bc.c_k();
    if !(c_k < 0.5) {
        return Err(Error::PreconditionViolated(format!(
            "c_K < 1/2 violated (c_K = {c_k})"
        )));
    }
    if !(bc.c_z < 1.0 / 3.0) {
        return Err(Error::PreconditionViolated(format!(
            "c_z < 1/3 violated (c_z = {})",
            bc.c_z
        )));
    }
    let gamma = gamma_const(bc)?;
    let a = 3.0 * bc.gain_sq();
    let zeta_bar =
        a * (bc.m0_norm_sq + bc.trace_p0 + bc.mean_growth_offset() / (1.0 - 2.0 * c_k));
    Ok((3.0 * bc.c_z).powi(k as i32) * bc.e0 + (gamma + zeta_bar) / (1.0 - 3.0 * bc.c_z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compares `E‖Φ(u)‖²` under `N(μ, Θ)` with `‖μ‖² + tr Θ`.
///
/// The expectation uses `n_quad` Gauss-Hermite nodes along `v`; the other
/// coordinates enter only through a quadratic form and are integrated exactly.
pub fn lemma1_check<M: PositiveMap>(
    mu: &StateVector,
    theta: &nalgebra::Matrix4<f64>,
    model: &ChirpModel<M>,
    dt: f64,
    n_quad: usize,
) -> Result<Lemma1Check> {
    let rule = Rule1d::new(n_quad)?;
    let belief = GaussianBelief::new(*mu, *theta);
    let slices = VSlices::new(&belief, &rule);
    let lhs: f64 = slices
        .points
        .iter()
        .map(|(w, m)| {
            let a = model.transition_matrix(m[V_INDEX], dt);
            let ata = a.transpose() * a;
            w * (m.dot(&(ata * m)) + (ata * slices.residual).trace())
        })
        .sum();
    let rhs = mu.norm_squared() + theta.trace();
    Ok(Lemma1Check {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStep {
    pub k: usize,
    pub empirical_mse: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub constants: BoundConstants,
    pub steps: Vec<BoundStep>,
    pub within_bound: bool,
}

/// A filter run paired with the true IF at its timestamps.
pub struct RunWithTruth<'a> {
    pub run: &'a FilterRun,
    pub f_true: &'a [f64],
}

/// Mean over runs of `(g⁻¹(f_k) - H_V m_k)²` at every step.
pub fn empirical_mse<M: PositiveMap>(runs: &[RunWithTruth], map: &M) -> Result<Vec<f64>> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidArgument("no runs supplied".into()));
    };
    let n = first.run.len();
    if runs
        .iter()
        .any(|r| r.run.len() != n || r.f_true.len() != n || r.run.times != first.run.times)
    {
        return Err(Error::InvalidArgument("runs must share a time grid".into()));
    }
    Ok((0..n)
        .map(|k| {
            runs.iter()
                .map(|r| (map.inverse(r.f_true[k]) - r.run.filtered[k].mean[V_INDEX]).powi(2))
                .sum::<f64>()
                / runs.len() as f64
        })
        .collect())
}

/// Fills the bound constants from realised runs.
///
/// `c_P`, `c_P̄` are the observed maxima, `c_Σ` the smallest chirp noise
/// variance over the grid, and `c` the smallest offset for which the
/// regularity inequality holds with growth factor `z` along the realised
/// means. `e0` uses the first truth sample against the prior mean.
pub fn extract_constants<M: PositiveMap>(
    runs: &[RunWithTruth],
    model: &ChirpModel<M>,
    z: f64,
    c_k: Option<f64>,
) -> Result<BoundConstants> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidArgument("no runs supplied".into()));
    };
    let map = &model.map;
    let init = model.initial_belief();
    let mut c_p: f64 = 0.0;
    let mut c_pbar: f64 = 0.0;
    let mut c = 0.0f64;
    let mut e0 = 0.0;
    for r in runs {
        let mut prev = &init;
        let mut prev_t = 0.0;
        let mut prev_target = map.inverse(r.f_true[0]);
        e0 += (prev_target - init.mean[V_INDEX]).powi(2) / runs.len() as f64;
        for (k, (filt, pred)) in r.run.filtered.iter().zip(&r.run.predicted).enumerate() {
            c_p = c_p.max(filt.cov.trace());
            let spectral = pred.cov.symmetric_eigenvalues().abs().max();
            c_pbar = c_pbar.max(spectral * spectral);
            let dt = r.run.times[k] - prev_t;
            let target = map.inverse(r.f_true[k]);
            let x = nalgebra::Vector2::new(prev.mean[V_INDEX], prev.mean[V_INDEX + 1]);
            let propagated = (crate::model::matern32_transition(dt, model.params.ell) * x)[0];
            let lhs = (target - propagated).powi(2);
            let rhs = z * (prev_target - x[0]).powi(2);
            c = c.max(lhs - rhs);
            prev = filt;
            prev_t = r.run.times[k];
            prev_target = target;
        }
    }
    let c_sigma = first
        .run
        .times
        .iter()
        .scan(0.0, |prev, &t| {
            let dt = t - *prev;
            *prev = t;
            Some(crate::model::harmonic_noise_cov(dt, model.params.lambda, model.params.b)[(0, 0)])
        })
        .fold(f64::INFINITY, f64::min);
    Ok(BoundConstants {
        c_z: z,
        c,
        c_p,
        c_pbar,
        c_sigma,
        xi: model.params.xi,
        c_k,
        e0,
        m0_norm_sq: init.mean.norm_squared(),
        trace_p0: init.cov.trace(),
    })
}

/// Empirical per-step error alongside the bound with constant `z = c_z`.
pub fn empirical_vs_bound<M: PositiveMap>(
    runs: &[RunWithTruth],
    bc: &BoundConstants,
    map: &M,
) -> Result<BoundReport> {
    let mse = empirical_mse(runs, map)?;
    let z = vec![bc.c_z; mse.len()];
    let mut bound = bc.e0;
    let gamma = gamma_const(bc)?;
    let mut steps = Vec::with_capacity(mse.len());
    for (i, &e) in mse.iter().enumerate() {
        let k = i + 1;
        // recursion form; equal to error_bound(k, ..) and O(1) per step
        bound = 3.0 * z[i] * bound + gamma + zeta_k(k, bc)?;
        steps.push(BoundStep {
            k,
            empirical_mse: e,
            bound,
        });
    }
    let within_bound = steps.iter().all(|s| s.empirical_mse <= s.bound);
    Ok(BoundReport {
        constants: bc.clone(),
        steps,
        within_bound,
    })
}
