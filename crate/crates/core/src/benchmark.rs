//! Monte Carlo comparison of IF estimators on the synthetic benchmark.

use serde::{Deserialize, Serialize};

use crate::baselines::{hilbert_if, spectrogram_if};
use crate::error::{Error, Result};
use crate::filters::{filter, smooth, FilterRun, QuadratureRule, SmootherRun, TimeMode};
use crate::mle::{default_starts, fit, FitOptions, FitResult, Pins};
use crate::model::{Bijection, ChirpModel, ModelParams, PositiveMap};
use crate::simulate::{derive_seed, gen_benchmark, AmplitudeMode, IfLaw, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Ghfs,
    Ekfs,
    CdGhfs,
    CdEkfs,
    LegacyGhfs,
    LegacyEkfs,
    Hilbert,
    Spectrogram,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ghfs,
        Method::Ekfs,
        Method::CdGhfs,
        Method::CdEkfs,
        Method::LegacyGhfs,
        Method::LegacyEkfs,
        Method::Hilbert,
        Method::Spectrogram,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ghfs => "ghfs",
            Method::Ekfs => "ekfs",
            Method::CdGhfs => "cd-ghfs",
            Method::CdEkfs => "cd-ekfs",
            Method::LegacyGhfs => "legacy-ghfs",
            Method::LegacyEkfs => "legacy-ekfs",
            Method::Hilbert => "hilbert",
            Method::Spectrogram => "spectrogram",
        }
    }

    /// Filter configuration for the state-space methods.
    pub fn filter_config(&self) -> Option<(QuadratureRule, TimeMode, bool)> {
        let gh = QuadratureRule::default();
        let lin = QuadratureRule::Linearize;
        let cd = TimeMode::continuous();
        Some(match self {
            Method::Ghfs => (gh, TimeMode::Discrete, false),
            Method::Ekfs => (lin, TimeMode::Discrete, false),
            Method::CdGhfs => (gh, cd, false),
            Method::CdEkfs => (lin, cd, false),
            Method::LegacyGhfs => (gh, TimeMode::Discrete, true),
            Method::LegacyEkfs => (lin, TimeMode::Discrete, true),
            Method::Hilbert | Method::Spectrogram => return None,
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Which state-space posterior is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posterior {
    #[default]
    Smoothed,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub fs: f64,
    pub noise_var: f64,
    pub mc_runs: usize,
    pub base_seed: u64,
    pub modes: Vec<AmplitudeMode>,
    pub methods: Vec<Method>,
    pub law: IfLaw,
    /// Start grid for the likelihood fits; the default grid when empty.
    pub starts: Vec<ModelParams>,
    pub fit: FitOptions,
    pub posterior: Posterior,
    pub window_len: usize,
    pub overlap: usize,
    /// Optional low-pass cutoff (Hz) applied inside both non-parametric baselines.
    pub baseline_cutoff: Option<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            fs: 1000.0,
            noise_var: 0.1,
            mc_runs: 20,
            base_seed: 2024,
            modes: vec![
                AmplitudeMode::Constant,
                AmplitudeMode::damped(),
                AmplitudeMode::OrnsteinUhlenbeck,
            ],
            methods: Method::ALL.to_vec(),
            law: IfLaw::default(),
            starts: Vec::new(),
            fit: FitOptions::default(),
            posterior: Posterior::Smoothed,
            window_len: 450,
            overlap: 449,
            baseline_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: String,
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    pub rmse: Option<f64>,
    pub error: Option<String>,
    pub params: Option<ModelParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: String,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || estimate.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    let sse: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Output of the fit → filter → smooth pipeline.
#[derive(Debug, Clone)]
pub struct StateSpaceFit {
    pub fit: FitResult,
    pub run: FilterRun,
    pub smoothed: SmootherRun,
}

impl StateSpaceFit {
    pub fn if_mean<M: PositiveMap>(&self, map: &M, posterior: Posterior) -> Vec<f64> {
        let estimates = match posterior {
            Posterior::Smoothed => self.smoothed.if_estimates(map),
            Posterior::Filtered => self.run.if_estimates(map),
        };
        estimates.into_iter().map(|e| e.if_mean).collect()
    }
}

/// Fits the model, then filters and smooths at the fitted parameters.
pub fn fit_filter_smooth<M: PositiveMap + Copy>(
    series: &TimeSeries,
    map: M,
    starts: &[ModelParams],
    opts: &FitOptions,
) -> Result<StateSpaceFit> {
    let fitted = fit(series, map, starts, opts)?;
    let model = ChirpModel::new(fitted.params, map).with_chirp_var(opts.chirp_var);
    let run = filter(&model, series, opts.rule, opts.mode)?;
    let smoothed = smooth(&run)?;
    Ok(StateSpaceFit {
        fit: fitted,
        run,
        smoothed,
    })
}

/// Estimates the IF with one method on one series.
pub fn estimate_with(
    method: Method,
    series: &TimeSeries,
    cfg: &BenchmarkConfig,
) -> Result<(Vec<f64>, Option<ModelParams>)> {
    let map = Bijection::Softplus;
    match method.filter_config() {
        None if method == Method::Hilbert => {
            Ok((hilbert_if(series, cfg.baseline_cutoff)?.if_est, None))
        }
        None => Ok((
            spectrogram_if(series, cfg.window_len, cfg.overlap, cfg.baseline_cutoff)?.if_est,
            None,
        )),
        Some((rule, mode, legacy)) => {
            let mut opts = cfg.fit.clone();
            opts.rule = rule;
            opts.mode = mode;
            if legacy {
                opts.pins.0.extend(Pins::legacy().0);
            }
            let starts = if cfg.starts.is_empty() {
                default_starts(&map)
            } else {
                cfg.starts.clone()
            };
            let out = fit_filter_smooth(series, map, &starts, &opts)?;
            Ok((out.if_mean(&map, cfg.posterior), Some(out.fit.params)))
        }
    }
}

/// One Monte Carlo replicate for one method.
pub fn run_single(mode: AmplitudeMode, method: Method, run: usize, cfg: &BenchmarkConfig) -> RunRecord {
    let seed = derive_seed(cfg.base_seed, run as u64);
    let outcome = gen_benchmark(cfg.fs, mode, cfg.noise_var, seed, &cfg.law).and_then(
        |(truth, series)| {
            let (est, params) = estimate_with(method, &series, cfg)?;
            Ok((rmse(&est, &truth.f_true)?, params))
        },
    );
    let (rmse, error, params) = match outcome {
        Ok((r, p)) if r.is_finite() => (Some(r), None, p),
        Ok((r, p)) => (None, Some(format!("non-finite rmse {r}")), p),
        Err(e) => (None, Some(e.to_string()), None),
    };
    RunRecord {
        mode: mode.name().to_string(),
        method,
        run,
        seed,
        rmse,
        error,
        params,
    }
}

pub fn summarise(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Method)> = Vec::new();
    for r in records {
        let key = (r.mode.clone(), r.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(mode, method)| {
            let ok: Vec<f64> = records
                .iter()
                .filter(|r| r.mode == mode && r.method == method)
                .filter_map(|r| r.rmse)
                .collect();
            let total = records
                .iter()
                .filter(|r| r.mode == mode && r.method == method)
                .count();
            let n = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / n;
            let std = (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            SummaryRow {
                mode,
                method,
                mean,
                std,
                n_ok: ok.len(),
                n_failed: total - ok.len(),
            }
        })
        .collect()
}

/// Runs every (mode, method, replicate) combination. Replicate `r` uses the
/// same data for every method.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.mc_runs == 0 {
        return Err(Error::InvalidArgument("mc_runs must be >= 1".into()));
    }
    let mut runs = Vec::new();
    for &mode in &cfg.modes {
        for &method in &cfg.methods {
            for r in 0..cfg.mc_runs {
                runs.push(run_single(mode, method, r, cfg));
            }
        }
    }
    Ok(BenchmarkReport {
        summary: summarise(&runs),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn summary_counts_failures() {
        let rec = |rmse: Option<f64>| RunRecord {
            mode: "constant".into(),
            method: Method::Hilbert,
            run: 0,
            seed: 0,
            rmse,
            error: None,
            params: None,
        };
        let rows = summarise(&[rec(Some(1.0)), rec(Some(3.0)), rec(None)]);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].n_ok, rows[0].n_failed), (2, 1));
        assert_eq!((rows[0].mean, rows[0].std), (2.0, 1.0));
    }

    #[test]
    fn baseline_replicate_is_deterministic() {
        let cfg = BenchmarkConfig {
            fs: 100.0,
            window_len: 50,
            overlap: 49,
            ..Default::default()
        };
        let a = run_single(AmplitudeMode::Constant, Method::Spectrogram, 3, &cfg);
        let b = run_single(AmplitudeMode::Constant, Method::Spectrogram, 3, &cfg);
        assert_eq!(a, b);
        assert!(a.rmse.is_some());
    }
}
