//! The joint chirp/IF stochastic differential equation and its discretisation.
//!
//! State layout is `u = [x1, x2, v, dv/dt]`: a two-dimensional damped harmonic
//! oscillator `x` whose angular rate is `2π g(v)`, stacked with the Matérn 3/2
//! state of the frequency driver `v`. Measurements read `x2`.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::GaussianBelief;

pub type StateVector = Vector4<f64>;

/// Index of the measured chirp component in the state.
pub const CHIRP_INDEX: usize = 1;
/// Index of the frequency driver `v` in the state.
pub const V_INDEX: usize = 2;

/// Tunable model parameters.
///
/// `xi` is the measurement-noise variance. Tables that report `δ` for the
/// noise level are read as this variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub b: f64,
    pub xi: f64,
    pub ell: f64,
    pub sigma: f64,
    pub m0v: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, b: f64, xi: f64, ell: f64, sigma: f64, m0v: f64) -> Result<Self> {
        let p = Self {
            lambda,
            b,
            xi,
            ell,
            sigma,
            m0v,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda", self.lambda),
            ("b", self.b),
            ("xi", self.xi),
            ("ell", self.ell),
            ("sigma", self.sigma),
            ("m0v", self.m0v),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be finite")));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument("lambda must be >= 0".into()));
        }
        if self.b < 0.0 {
            return Err(Error::InvalidArgument("b must be >= 0".into()));
        }
        if self.xi <= 0.0 {
            return Err(Error::InvalidArgument("xi must be > 0".into()));
        }
        if self.ell <= 0.0 {
            return Err(Error::InvalidArgument("ell must be > 0".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidArgument("sigma must be > 0".into()));
        }
        Ok(())
    }

    /// Matérn rate `√3 / ℓ`.
    pub fn gamma(&self) -> f64 {
        3f64.sqrt() / self.ell
    }
}

/// Positive map from the latent driver `v` to frequency in Hz.
///
/// Implemented by [`Bijection`]; tests substitute degenerate maps (for
/// example a constant) to obtain linear submodels.
pub trait PositiveMap: Sync {
    fn apply(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn inverse(&self, f: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bijection {
    /// `log(1 + e^x)`
    #[default]
    Softplus,
    Exp,
}

impl PositiveMap for Bijection {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Bijection::Softplus => {
                if x > 0.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            }
            Bijection::Exp => x.exp(),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Bijection::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Bijection::Exp => x.exp(),
        }
    }

    fn inverse(&self, f: f64) -> f64 {
        match self {
            Bijection::Softplus => {
                // log(e^f - 1) without overflowing for large f
                if f > 30.0 {
                    f + (-(-f).exp()).ln_1p()
                } else {
                    f.exp_m1().ln()
                }
            }
            Bijection::Exp => f.ln(),
        }
    }
}

impl std::str::FromStr for Bijection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softplus" => Ok(Bijection::Softplus),
            "exp" => Ok(Bijection::Exp),
            other => Err(Error::InvalidArgument(format!("unknown bijection '{other}'"))),
        }
    }
}

/// `e^{-λ dt}` times the rotation by `2π f dt`.
pub fn harmonic_transition(f: f64, dt: f64, lambda: f64) -> Result<Matrix2<f64>> {
    if !(f.is_finite() && dt.is_finite() && lambda.is_finite()) {
        return Err(Error::InvalidArgument(
            "harmonic_transition needs finite inputs".into(),
        ));
    }
    if dt < 0.0 {
        return Err(Error::InvalidArgument("dt must be >= 0".into()));
    }
    Ok(damped_rotation(TAU * f * dt, (-lambda * dt).exp()))
}

fn damped_rotation(angle: f64, scale: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c) * scale
}

/// Covariance of the harmonic oscillator's noise increment over `dt`.
pub fn harmonic_noise_cov(dt: f64, lambda: f64, b: f64) -> Matrix2<f64> {
    debug_assert!(dt >= 0.0);
    Matrix2::identity() * harmonic_noise_var(dt, lambda, b)
}

fn harmonic_noise_var(dt: f64, lambda: f64, b: f64) -> f64 {
    if lambda > 0.0 {
        // -expm1(-2λdt) keeps precision for small λ·dt
        b * b * -(-2.0 * lambda * dt).exp_m1() / (2.0 * lambda)
    } else {
        b * b * dt
    }
}

/// Drift matrix of the Matérn 3/2 SDE.
pub fn matern32_drift(ell: f64) -> Matrix2<f64> {
    let g = 3f64.sqrt() / ell;
    Matrix2::new(0.0, 1.0, -g * g, -2.0 * g)
}

/// Stationary covariance of the Matérn 3/2 state `[v, dv/dt]`.
pub fn matern32_stationary_cov(ell: f64, sigma: f64) -> Matrix2<f64> {
    let s2 = sigma * sigma;
    Matrix2::new(s2, 0.0, 0.0, 3.0 * s2 / (ell * ell))
}

/// `exp(dt·M)` for the Matérn 3/2 drift.
pub fn matern32_transition(dt: f64, ell: f64) -> Matrix2<f64> {
    debug_assert!(dt >= 0.0 && ell > 0.0);
    let g = 3f64.sqrt() / ell;
    let eta = dt * g;
    Matrix2::new(1.0 + eta, dt, -dt * g * g, 1.0 - eta) * (-eta).exp()
}

/// Noise covariance of the Matérn 3/2 state over `dt`.
pub fn matern32_noise_cov(dt: f64, ell: f64, sigma: f64) -> Matrix2<f64> {
    debug_assert!(dt >= 0.0 && ell > 0.0);
    let g = 3f64.sqrt() / ell;
    let eta = dt * g;
    let s2 = sigma * sigma;
    let beta = s2 * (-2.0 * eta).exp();
    let off = 2.0 * dt * dt * g.powi(3) * beta;
    Matrix2::new(
        s2 - beta * (2.0 * eta + 2.0 * eta * eta + 1.0),
        off,
        off,
        g * g * (s2 + beta * (2.0 * eta - 2.0 * eta * eta - 1.0)),
    )
}

/// Matérn 3/2 covariance function.
pub fn matern32_kernel(t: f64, t_prime: f64, ell: f64, sigma: f64) -> f64 {
    let psi = 3f64.sqrt() * (t - t_prime).abs() / ell;
    sigma * sigma * (1.0 + psi) * (-psi).exp()
}

/// Cross-covariance `Cov[X(t), X(t')]` of the constant-frequency oscillator
/// started from `N(·, p0x)` at time zero.
pub fn harmonic_kernel(
    t: f64,
    t_prime: f64,
    f: f64,
    lambda: f64,
    b: f64,
    p0x: &Matrix2<f64>,
) -> Result<Matrix2<f64>> {
    if t < 0.0 || t_prime < 0.0 {
        return Err(Error::InvalidArgument("kernel times must be >= 0".into()));
    }
    let marginal = |s: f64| -> Result<Matrix2<f64>> {
        let tr = harmonic_transition(f, s, lambda)?;
        Ok(tr * p0x * tr.transpose() + harmonic_noise_cov(s, lambda, b))
    };
    if t < t_prime {
        Ok(marginal(t)? * harmonic_transition(f, t_prime - t, lambda)?.transpose())
    } else {
        Ok(harmonic_transition(f, t - t_prime, lambda)? * marginal(t_prime)?)
    }
}

/// The chirp/IF model: parameters, frequency map and initial chirp spread.
#[derive(Debug, Clone, Copy)]
pub struct ChirpModel<M = Bijection> {
    pub params: ModelParams,
    pub map: M,
    /// Initial variance of each chirp component, `P0x = chirp_var · I₂`.
    pub chirp_var: f64,
}

impl<M: PositiveMap> ChirpModel<M> {
    pub fn new(params: ModelParams, map: M) -> Self {
        Self {
            params,
            map,
            chirp_var: 1.0,
        }
    }

    pub fn with_chirp_var(mut self, chirp_var: f64) -> Self {
        self.chirp_var = chirp_var;
        self
    }

    /// Frequency in Hz for a given driver value.
    pub fn frequency(&self, v: f64) -> f64 {
        self.map.apply(v)
    }

    pub fn initial_belief(&self) -> GaussianBelief {
        let mut mean = StateVector::zeros();
        mean[V_INDEX] = self.params.m0v;
        let mut cov = Matrix4::zeros();
        cov.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&(Matrix2::identity() * self.chirp_var));
        cov.fixed_view_mut::<2, 2>(2, 2)
            .copy_from(&matern32_stationary_cov(self.params.ell, self.params.sigma));
        GaussianBelief::new(mean, cov)
    }

    /// State-dependent drift matrix `A(v)` so that the drift is `A(v)·u`.
    pub fn drift_matrix(&self, v: f64) -> Matrix4<f64> {
        let w = TAU * self.map.apply(v);
        let lam = self.params.lambda;
        let mut a = Matrix4::zeros();
        a.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&Matrix2::new(-lam, -w, w, -lam));
        a.fixed_view_mut::<2, 2>(2, 2)
            .copy_from(&matern32_drift(self.params.ell));
        a
    }

    /// `dA/dv`; only the chirp block depends on `v`.
    pub fn drift_matrix_dv(&self, v: f64) -> Matrix4<f64> {
        let dw = TAU * self.map.derivative(v);
        let mut a = Matrix4::zeros();
        a[(0, 1)] = -dw;
        a[(1, 0)] = dw;
        a
    }

    pub fn drift(&self, u: &StateVector) -> StateVector {
        self.drift_matrix(u[V_INDEX]) * u
    }

    pub fn drift_jacobian(&self, u: &StateVector) -> Matrix4<f64> {
        let v = u[V_INDEX];
        let mut j = self.drift_matrix(v);
        let col = self.drift_matrix_dv(v) * u;
        for r in 0..4 {
            j[(r, V_INDEX)] += col[r];
        }
        j
    }

    /// Diffusion `B·Bᵀ`.
    pub fn diffusion(&self) -> Matrix4<f64> {
        let p = &self.params;
        let g = p.gamma();
        let l = 2.0 * p.sigma * g.powf(1.5);
        Matrix4::from_diagonal(&Vector4::new(p.b * p.b, p.b * p.b, 0.0, l * l))
    }

    /// LCD transition matrix with the rotation frozen at `g(v)`.
    pub fn transition_matrix(&self, v: f64, dt: f64) -> Matrix4<f64> {
        let mut f = Matrix4::zeros();
        f.fixed_view_mut::<2, 2>(0, 0).copy_from(&damped_rotation(
            TAU * dt * self.map.apply(v),
            (-self.params.lambda * dt).exp(),
        ));
        f.fixed_view_mut::<2, 2>(2, 2)
            .copy_from(&matern32_transition(dt, self.params.ell));
        f
    }

    /// `d/dv` of [`Self::transition_matrix`].
    pub fn transition_matrix_dv(&self, v: f64, dt: f64) -> Matrix4<f64> {
        let phi = TAU * dt * self.map.apply(v);
        let dphi = TAU * dt * self.map.derivative(v);
        let (s, c) = phi.sin_cos();
        let scale = (-self.params.lambda * dt).exp() * dphi;
        let mut f = Matrix4::zeros();
        f.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&(Matrix2::new(-s, -c, c, -s) * scale));
        f
    }

    /// Conditional mean of the next state under the LCD scheme.
    pub fn lcd_mean(&self, u: &StateVector, dt: f64) -> StateVector {
        self.transition_matrix(u[V_INDEX], dt) * u
    }

    pub fn lcd_jacobian(&self, u: &StateVector, dt: f64) -> Matrix4<f64> {
        let v = u[V_INDEX];
        let mut j = self.transition_matrix(v, dt);
        let col = self.transition_matrix_dv(v, dt) * u;
        for r in 0..4 {
            j[(r, V_INDEX)] += col[r];
        }
        j
    }

    /// Conditional covariance of the next state under the LCD scheme.
    pub fn lcd_cov(&self, dt: f64) -> Matrix4<f64> {
        let p = &self.params;
        let mut q = Matrix4::zeros();
        let hv = harmonic_noise_var(dt, p.lambda, p.b);
        q[(0, 0)] = hv;
        q[(1, 1)] = hv;
        q.fixed_view_mut::<2, 2>(2, 2)
            .copy_from(&matern32_noise_cov(dt, p.ell, p.sigma));
        q
    }
}

/// Chirp block of a state as a 2-vector.
pub fn chirp_block(u: &StateVector) -> Vector2<f64> {
    Vector2::new(u[0], u[1])
}
