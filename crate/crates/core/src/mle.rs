//! Maximum-likelihood fitting of [`ModelParams`].
//!
//! The objective is the filter's prediction-error negative log-likelihood.
//! Positive parameters are optimised on the log scale; `m0v` is left as is.
//! Any subset of parameters can be pinned to fixed values, which is how the
//! deterministic, constant-amplitude chirp baseline (`λ = b = 0`) is fitted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{filter_nll, QuadratureRule, TimeMode};
use crate::model::{ChirpModel, ModelParams, PositiveMap};
use crate::optim::{minimize, LbfgsOptions};
use crate::simulate::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamName {
    Lambda,
    B,
    Xi,
    Ell,
    Sigma,
    M0v,
}

impl ParamName {
    pub const ALL: [ParamName; 6] = [
        ParamName::Lambda,
        ParamName::B,
        ParamName::Xi,
        ParamName::Ell,
        ParamName::Sigma,
        ParamName::M0v,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" => Ok(ParamName::Lambda),
            "b" => Ok(ParamName::B),
            "xi" | "delta" => Ok(ParamName::Xi),
            "ell" => Ok(ParamName::Ell),
            "sigma" => Ok(ParamName::Sigma),
            "m0v" => Ok(ParamName::M0v),
            other => Err(Error::InvalidArgument(format!("unknown parameter '{other}'"))),
        }
    }
}

fn to_array(p: &ModelParams) -> [f64; 6] {
    [p.lambda, p.b, p.xi, p.ell, p.sigma, p.m0v]
}

fn from_array(a: [f64; 6]) -> ModelParams {
    ModelParams {
        lambda: a[0],
        b: a[1],
        xi: a[2],
        ell: a[3],
        sigma: a[4],
        m0v: a[5],
    }
}

/// `[log λ, log b, log ξ, log ℓ, log σ, m0v]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnconstrainedParams(pub [f64; 6]);

impl UnconstrainedParams {
    pub fn from_params(p: &ModelParams) -> Self {
        let mut a = to_array(p);
        a[..5].iter_mut().for_each(|x| *x = x.ln());
        Self(a)
    }

    /// Maps back to constrained parameters, validating the result.
    pub fn to_params(&self) -> Result<ModelParams> {
        let mut a = self.0;
        a[..5].iter_mut().for_each(|x| *x = x.exp());
        let p = from_array(a);
        p.validate()?;
        Ok(p)
    }
}

/// Parameters held fixed during a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pins(pub Vec<(ParamName, f64)>);

impl Pins {
    /// Deterministic chirp with constant amplitude: no diffusion, no damping.
    pub fn legacy() -> Self {
        Pins(vec![(ParamName::Lambda, 0.0), (ParamName::B, 0.0)])
    }

    /// Only the chirp diffusion removed; damping stays free.
    pub fn no_diffusion() -> Self {
        Pins(vec![(ParamName::B, 0.0)])
    }

    pub fn get(&self, name: ParamName) -> Option<f64> {
        self.0.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    fn apply(&self, p: &mut ModelParams) {
        let mut a = to_array(p);
        for (name, value) in &self.0 {
            a[name.index()] = *value;
        }
        *p = from_array(a);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub rule: QuadratureRule,
    pub mode: TimeMode,
    pub optimizer: LbfgsOptions,
    pub pins: Pins,
    /// Initial variance of each chirp component.
    pub chirp_var: f64,
    /// Keep the per-iteration objective trace of the winning start.
    pub verbose: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::default(),
            mode: TimeMode::Discrete,
            optimizer: LbfgsOptions::default(),
            pins: Pins::default(),
            chirp_var: 1.0,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub nll: f64,
    pub n_evaluations: usize,
    pub converged: bool,
    pub start_index: usize,
    /// Final objective of every start; infinite where the start failed.
    pub start_nlls: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// Filter negative log-likelihood at unconstrained parameters.
///
/// Returns `+∞` for invalid parameters or any numerical failure.
pub fn nll<M: PositiveMap + Copy>(
    uparams: &UnconstrainedParams,
    series: &TimeSeries,
    map: M,
    rule: QuadratureRule,
    mode: TimeMode,
    chirp_var: f64,
) -> f64 {
    let Ok(params) = uparams.to_params() else {
        return f64::INFINITY;
    };
    constrained_nll(&params, series, map, rule, mode, chirp_var)
}

fn constrained_nll<M: PositiveMap + Copy>(
    params: &ModelParams,
    series: &TimeSeries,
    map: M,
    rule: QuadratureRule,
    mode: TimeMode,
    chirp_var: f64,
) -> f64 {
    if params.validate().is_err() {
        return f64::INFINITY;
    }
    let model = ChirpModel::new(*params, map).with_chirp_var(chirp_var);
    filter_nll(&model, series, rule, mode).unwrap_or(f64::INFINITY)
}

/// Default multi-start grid: `m0v ∈ g⁻¹{5, 10, 20}` crossed with
/// `ℓ ∈ {0.5, 1.5}`, other parameters at `λ = b = ξ = 0.1`, `σ = 3`.
pub fn default_starts<M: PositiveMap>(map: &M) -> Vec<ModelParams> {
    let mut starts = Vec::with_capacity(6);
    for f in [5.0, 10.0, 20.0] {
        for ell in [0.5, 1.5] {
            starts.push(ModelParams {
                lambda: 0.1,
                b: 0.1,
                xi: 0.1,
                ell,
                sigma: 3.0,
                m0v: map.inverse(f),
            });
        }
    }
    starts
}

struct StartOutcome {
    params: ModelParams,
    nll: f64,
    evaluations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn fit_one<M: PositiveMap + Copy>(
    series: &TimeSeries,
    map: M,
    start: &ModelParams,
    opts: &FitOptions,
) -> StartOutcome {
    let free: Vec<ParamName> = ParamName::ALL
        .into_iter()
        .filter(|n| opts.pins.get(*n).is_none())
        .collect();
    let mut base = *start;
    opts.pins.apply(&mut base);
    let assemble = |x: &[f64]| -> ModelParams {
        let mut a = to_array(&base);
        for (name, value) in free.iter().zip(x) {
            a[name.index()] = if *name == ParamName::M0v {
                *value
            } else {
                value.exp()
            };
        }
        from_array(a)
    };
    let start_u = UnconstrainedParams::from_params(&base);
    let x0: Vec<f64> = free.iter().map(|n| start_u.0[n.index()]).collect();
    let objective =
        |x: &[f64]| constrained_nll(&assemble(x), series, map, opts.rule, opts.mode, opts.chirp_var);
    let res = minimize(objective, &x0, &opts.optimizer);
    StartOutcome {
        params: assemble(&res.x),
        nll: res.f,
        evaluations: res.evaluations,
        converged: res.converged,
        trace: res.trace,
    }
}

/// Multi-start likelihood fit. Starts run in parallel; the lowest final
/// objective wins, ties going to the lowest start index.
pub fn fit<M: PositiveMap + Copy>(
    series: &TimeSeries,
    map: M,
    starts: &[ModelParams],
    opts: &FitOptions,
) -> Result<FitResult> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("at least one start is required".into()));
    }
    for (name, value) in &opts.pins.0 {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("pin {name:?} is not finite")));
        }
    }
    let outcomes: Vec<StartOutcome> = starts
        .par_iter()
        .map(|s| fit_one(series, map, s, opts))
        .collect();
    let start_nlls: Vec<f64> = outcomes
        .iter()
        .map(|o| if o.nll.is_finite() { o.nll } else { f64::INFINITY })
        .collect();
    let best = start_nlls
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((i, v)),
        });
    let n_evaluations = outcomes.iter().map(|o| o.evaluations).sum();
    let Some((start_index, nll)) = best else {
        return Err(Error::FitFailed {
            n_starts: starts.len(),
            diagnostics: format!("final objectives {start_nlls:?}"),
        });
    };
    let winner = &outcomes[start_index];
    winner.params.validate()?;
    Ok(FitResult {
        params: winner.params,
        nll,
        n_evaluations,
        converged: winner.converged,
        start_index,
        start_nlls,
        trace: opts.verbose.then(|| winner.trace.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Bijection;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn reparameterisation_round_trip(
            lambda in 1e-4..10.0f64, b in 1e-4..10.0f64, xi in 1e-4..10.0f64,
            ell in 1e-2..10.0f64, sigma in 1e-2..10.0f64, m0v in -20.0..20.0f64,
        ) {
            let p = ModelParams::new(lambda, b, xi, ell, sigma, m0v).unwrap();
            let back = UnconstrainedParams::from_params(&p).to_params().unwrap();
            for (x, y) in to_array(&p).iter().zip(to_array(&back)) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pins_and_names() {
        assert_eq!("delta".parse::<ParamName>().unwrap(), ParamName::Xi);
        assert!("nu".parse::<ParamName>().is_err());
        let mut p = default_starts(&Bijection::Softplus)[0];
        Pins::legacy().apply(&mut p);
        assert_eq!((p.b, p.lambda), (0.0, 0.0));
        assert_eq!(Pins::legacy().get(ParamName::B), Some(0.0));
        assert_eq!(Pins::no_diffusion().get(ParamName::Lambda), None);
        assert_eq!(Pins::legacy().get(ParamName::Xi), None);
    }

    #[test]
    fn default_grid_brackets_benchmark_frequencies() {
        let starts = default_starts(&Bijection::Softplus);
        assert_eq!(starts.len(), 6);
        let f: Vec<f64> = starts.iter().map(|s| Bijection::Softplus.apply(s.m0v)).collect();
        assert!((f[0] - 5.0).abs() < 1e-12 && (f[5] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_give_infinite_nll() {
        let series = TimeSeries::new(vec![0.1, 0.2], vec![0.0, 1.0]).unwrap();
        let u = UnconstrainedParams([0.0, 0.0, f64::NEG_INFINITY, 0.0, 0.0, 0.0]);
        let v = nll(
            &u,
            &series,
            Bijection::Softplus,
            QuadratureRule::Linearize,
            TimeMode::Discrete,
            1.0,
        );
        assert_eq!(v, f64::INFINITY);
    }
}
