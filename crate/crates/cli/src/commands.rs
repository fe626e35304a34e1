use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chirpgp::benchmark::{run_benchmark, BenchmarkConfig, Method, Posterior};
use chirpgp::bounds::{
    corollary_bound, empirical_vs_bound, error_bound, extract_constants, gamma_const, BoundConstants, BoundStep,
    RunWithTruth,
};
use chirpgp::filters::{filter, smooth};
use chirpgp::gw::run_gw;
use chirpgp::mle::{default_starts, fit as fit_params, FitOptions, FitResult, ParamName, Pins};
use chirpgp::simulate::{gen_benchmark, IfLaw};
use chirpgp::{Bijection, ChirpModel, IfEstimate, ModelParams, QuadratureRule, TimeMode};
use serde::Serialize;

use crate::io::{prepare_dir, prepare_file, read_columns, read_json, read_series, require_file, write_csv, write_json};
use crate::{BenchmarkArgs, BoundsArgs, EstimateArgs, FilterOpts, FitArgs, GwArgs, SimulateArgs};

const IF_HEADER: [&str; 6] = ["t", "if_mean", "if_lower", "if_upper", "chirp_mean", "chirp_std"];

fn if_rows(est: &[IfEstimate]) -> impl Iterator<Item = Vec<f64>> + '_ {
    est.iter()
        .map(|e| vec![e.t, e.if_mean, e.if_lower, e.if_upper, e.chirp_mean, e.chirp_std])
}

fn pins_from(raw: &[(String, f64)]) -> Result<Pins> {
    let pins = raw
        .iter()
        .map(|(name, v)| Ok((name.parse::<ParamName>()?, *v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pins(pins))
}

fn read_starts(path: Option<&Path>, map: Bijection) -> Result<Vec<ModelParams>> {
    match path {
        None => Ok(default_starts(&map)),
        Some(p) => {
            require_file(p)?;
            let starts: Vec<ModelParams> = read_json(p)?;
            if starts.is_empty() {
                bail!("{}: no starts given", p.display());
            }
            for s in &starts {
                s.validate().with_context(|| format!("{}: invalid start", p.display()))?;
            }
            Ok(starts)
        }
    }
}

/// Accepts either a fit output (with a `params` field) or bare parameters.
fn read_params(path: &Path) -> Result<ModelParams> {
    require_file(path)?;
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("params").cloned().unwrap_or(value);
    let params: ModelParams =
        serde_json::from_value(inner).with_context(|| format!("{}: not a parameter set", path.display()))?;
    params.validate()?;
    Ok(params)
}

#[derive(Serialize)]
struct Settings {
    rule: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gh_order: Option<usize>,
    time: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    substeps: Option<usize>,
    bijection: Bijection,
    chirp_var: f64,
    pins: BTreeMap<String, f64>,
}

impl Settings {
    fn new(f: &FilterOpts, chirp_var: f64, pins: &Pins) -> Self {
        let (rule, gh_order) = match f.rule() {
            QuadratureRule::Linearize => ("ekf", None),
            QuadratureRule::GaussHermite(n) => ("ghf", Some(n)),
        };
        let (time, substeps) = match f.mode() {
            TimeMode::Discrete => ("discrete", None),
            TimeMode::Continuous { substeps } => ("cd", Some(substeps)),
        };
        let pins = pins
            .0
            .iter()
            .map(|(n, v)| (format!("{n:?}").to_lowercase(), *v))
            .collect();
        Self {
            rule,
            gh_order,
            time,
            substeps,
            bijection: f.bijection,
            chirp_var,
            pins,
        }
    }
}

fn fit_options(f: &FilterOpts, pins: Pins, chirp_var: f64, verbose: bool) -> FitOptions {
    FitOptions {
        rule: f.rule(),
        mode: f.mode(),
        pins,
        chirp_var,
        verbose,
        ..FitOptions::default()
    }
}

pub fn simulate(a: SimulateArgs, verbose: bool) -> Result<()> {
    let dir = prepare_dir(&a.output)?;
    let (truth, series) = gen_benchmark(a.fs, a.amplitude, a.noise_var, a.seed, &IfLaw::default())?;
    write_csv(
        &dir.join("truth.csv"),
        &["t", "f_true", "phase", "alpha", "clean"],
        (0..truth.t.len()).map(|k| vec![truth.t[k], truth.f_true[k], truth.phase[k], truth.alpha[k], truth.clean[k]]),
    )?;
    write_csv(
        &dir.join("measurements.csv"),
        &["t", "y"],
        series.t.iter().zip(&series.y).map(|(t, y)| vec![*t, *y]),
    )?;
    if verbose {
        eprintln!("wrote {} samples ({}) to {}", series.len(), a.amplitude.name(), dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    result: &'a FitResult,
    settings: &'a Settings,
}

#[derive(Serialize)]
struct FitFailure<'a> {
    error: String,
    settings: &'a Settings,
    n_starts: usize,
}

pub fn fit(a: FitArgs, verbose: bool) -> Result<()> {
    require_file(&a.input)?;
    prepare_file(&a.output)?;
    let series = read_series(&a.input)?;
    let map = a.filter.bijection;
    let starts = read_starts(a.starts.as_deref(), map)?;
    let pins = pins_from(&a.pins)?;
    let settings = Settings::new(&a.filter, a.chirp_var, &pins);
    let opts = fit_options(&a.filter, pins, a.chirp_var, verbose);
    let clock = Instant::now();
    match fit_params(&series, map, &starts, &opts) {
        Ok(result) => {
            if verbose {
                eprintln!(
                    "nll {:.6} from start {} after {} evaluations in {:.1?}",
                    result.nll,
                    result.start_index,
                    result.n_evaluations,
                    clock.elapsed()
                );
            }
            write_json(&a.output, &FitOutput {
                result: &result,
                settings: &settings,
            })
        }
        Err(e) => {
            write_json(&a.output, &FitFailure {
                error: e.to_string(),
                settings: &settings,
                n_starts: starts.len(),
            })?;
            bail!("fit failed: {e}")
        }
    }
}

#[derive(Serialize)]
struct RunDump {
    params: ModelParams,
    nll: f64,
    t: Vec<f64>,
    filtered_mean: Vec<[f64; 4]>,
    filtered_var: Vec<[f64; 4]>,
    smoothed_mean: Vec<[f64; 4]>,
    smoothed_var: Vec<[f64; 4]>,
    filtered_if: Vec<IfEstimate>,
    smoothed_if: Vec<IfEstimate>,
}

fn as_array(v: impl Iterator<Item = f64>) -> [f64; 4] {
    let mut out = [0.0; 4];
    out.iter_mut().zip(v).for_each(|(o, x)| *o = x);
    out
}

pub fn estimate(a: EstimateArgs, verbose: bool) -> Result<()> {
    require_file(&a.input)?;
    let params = read_params(&a.params)?;
    let dir = prepare_dir(&a.output)?;
    let series = read_series(&a.input)?;
    let map = a.filter.bijection;
    let model = ChirpModel::new(params, map).with_chirp_var(a.chirp_var);
    let run = filter(&model, &series, a.filter.rule(), a.filter.mode())?;
    let smoothed = smooth(&run)?;
    let filtered_if = run.if_estimates(&map);
    let smoothed_if = smoothed.if_estimates(&map);
    write_csv(&dir.join("filtered.csv"), &IF_HEADER, if_rows(&filtered_if))?;
    write_csv(&dir.join("smoothed.csv"), &IF_HEADER, if_rows(&smoothed_if))?;
    let dump = RunDump {
        params,
        nll: run.nll,
        t: run.times.clone(),
        filtered_mean: run.filtered.iter().map(|b| as_array(b.mean.iter().copied())).collect(),
        filtered_var: run.filtered.iter().map(|b| as_array(b.cov.diagonal().iter().copied())).collect(),
        smoothed_mean: smoothed.smoothed.iter().map(|b| as_array(b.mean.iter().copied())).collect(),
        smoothed_var: smoothed.smoothed.iter().map(|b| as_array(b.cov.diagonal().iter().copied())).collect(),
        filtered_if,
        smoothed_if,
    };
    write_json(&dir.join("run.json"), &dump)?;
    if verbose {
        eprintln!("nll {:.6} over {} samples", run.nll, run.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryOut<'a> {
    mode: &'a str,
    method: &'static str,
    mean: f64,
    std: f64,
    n_ok: usize,
    n_failed: usize,
}

pub fn benchmark(a: BenchmarkArgs, verbose: bool) -> Result<()> {
    let dir = prepare_dir(&a.output)?;
    let mut cfg = BenchmarkConfig {
        fs: a.fs,
        noise_var: a.noise_var,
        mc_runs: a.mc_runs,
        base_seed: a.seed,
        posterior: if a.filtered {
            Posterior::Filtered
        } else {
            Posterior::Smoothed
        },
        baseline_cutoff: a.cutoff,
        ..BenchmarkConfig::default()
    };
    if !a.amplitude.is_empty() {
        cfg.modes = a.amplitude.clone();
    }
    if !a.methods.is_empty() {
        cfg.methods = a
            .methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<chirpgp::Result<_>>()?;
    }
    cfg.fit.pins = pins_from(&a.pins)?;
    if let Some(p) = a.starts.as_deref() {
        cfg.starts = read_starts(Some(p), Bijection::Softplus)?;
    }
    let clock = Instant::now();
    let report = run_benchmark(&cfg)?;
    if verbose {
        eprintln!("{} runs in {:.1?}", report.runs.len(), clock.elapsed());
    }

    let summary: Vec<SummaryOut> = report
        .summary
        .iter()
        .map(|r| SummaryOut {
            mode: &r.mode,
            method: r.method.name(),
            mean: r.mean,
            std: r.std,
            n_ok: r.n_ok,
            n_failed: r.n_failed,
        })
        .collect();
    write_json(&dir.join("summary.json"), &summary)?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["mode", "method", "mean", "std", "n_ok", "n_failed"])?;
    for r in &summary {
        w.write_record([
            r.mode.to_string(),
            r.method.to_string(),
            crate::io::fmt_f64(r.mean),
            crate::io::fmt_f64(r.std),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    w.write_record(["mode", "method", "run", "seed", "rmse", "error"])?;
    for r in &report.runs {
        w.write_record([
            r.mode.clone(),
            r.method.name().to_string(),
            r.run.to_string(),
            r.seed.to_string(),
            r.rmse.map(crate::io::fmt_f64).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    if verbose {
        for r in &summary {
            eprintln!("{:>9} {:>12}  {:.4} ± {:.4}  ({} failed)", r.mode, r.method, r.mean, r.std, r.n_failed);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GwParams<'a> {
    #[serde(flatten)]
    result: &'a FitResult,
    standardisation: chirpgp::gw::Standardisation,
    settings: &'a Settings,
}

pub fn gw(a: GwArgs, verbose: bool) -> Result<()> {
    require_file(&a.input)?;
    let dir = prepare_dir(&a.output)?;
    let series = read_series(&a.input)?;
    let map = a.filter.bijection;
    let starts = match a.starts.as_deref() {
        Some(p) => Some(read_starts(Some(p), map)?),
        None => None,
    };
    let pins = pins_from(&a.pins)?;
    let settings = Settings::new(&a.filter, 1.0, &pins);
    let opts = fit_options(&a.filter, pins, 1.0, verbose);
    let out = run_gw(&series, map, starts.as_deref(), &opts, a.expect_rows)?;
    write_csv(&dir.join("filtered.csv"), &IF_HEADER, if_rows(&out.filtered))?;
    write_csv(&dir.join("smoothed.csv"), &IF_HEADER, if_rows(&out.smoothed))?;
    write_json(&dir.join("params.json"), &GwParams {
        result: &out.fit.fit,
        standardisation: out.standardisation,
        settings: &settings,
    })?;
    if verbose {
        eprintln!("nll {:.6}, params {:?}", out.fit.fit.nll, out.fit.fit.params);
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundRow {
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical_mse: Option<f64>,
    bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    corollary: Option<f64>,
}

#[derive(Serialize)]
struct BoundsOut {
    constants: BoundConstants,
    c_k: f64,
    gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    within_bound: Option<bool>,
    steps: Vec<BoundRow>,
}

pub fn bounds(a: BoundsArgs, verbose: bool) -> Result<()> {
    prepare_file(&a.output)?;
    let given: Option<BoundConstants> = match a.constants.as_deref() {
        Some(p) => {
            require_file(p)?;
            let bc: BoundConstants = read_json(p)?;
            bc.check()?;
            Some(bc)
        }
        None => None,
    };

    let (constants, empirical, within): (BoundConstants, Option<Vec<BoundStep>>, Option<bool>) =
        match (&a.input, &a.truth, &a.params) {
            (Some(input), Some(truth), Some(params)) => {
                require_file(input)?;
                require_file(truth)?;
                let series = read_series(input)?;
                let f_true = read_columns(truth, &["f_true"])?.remove(0);
                if f_true.len() != series.len() {
                    bail!("truth has {} rows but measurements have {}", f_true.len(), series.len());
                }
                let map = a.filter.bijection;
                let model = ChirpModel::new(read_params(params)?, map);
                let run = filter(&model, &series, a.filter.rule(), a.filter.mode())?;
                let runs = [RunWithTruth {
                    run: &run,
                    f_true: &f_true,
                }];
                let bc = match given {
                    Some(bc) => bc,
                    None => extract_constants(&runs, &model, a.z, None)?,
                };
                let report = empirical_vs_bound(&runs, &bc, &map)?;
                (bc, Some(report.steps), Some(report.within_bound))
            }
            (None, None, None) => match given {
                Some(bc) => (bc, None, None),
                None => bail!("either --constants or all of --input, --truth and --params are required"),
            },
            _ => bail!("--input, --truth and --params must be given together"),
        };

    let gamma = gamma_const(&constants)?;
    let steps = match empirical {
        Some(steps) => steps
            .into_iter()
            .map(|s| {
                Ok(BoundRow {
                    k: s.k,
                    empirical_mse: Some(s.empirical_mse),
                    bound: s.bound,
                    corollary: a.corollary.then(|| corollary_bound(s.k, &constants)).transpose()?,
                })
            })
            .collect::<chirpgp::Result<Vec<_>>>()?,
        None => {
            let z = vec![constants.c_z; a.steps];
            (1..=a.steps)
                .map(|k| {
                    Ok(BoundRow {
                        k,
                        empirical_mse: None,
                        bound: error_bound(k, &z[..k], &constants)?,
                        corollary: a.corollary.then(|| corollary_bound(k, &constants)).transpose()?,
                    })
                })
                .collect::<chirpgp::Result<Vec<_>>>()?
        }
    };
    if verbose {
        if let Some(last) = steps.last() {
            eprintln!("k = {}: bound {:.6e}", last.k, last.bound);
        }
    }
    write_json(&a.output, &BoundsOut {
        c_k: constants.c_k(),
        constants,
        gamma,
        within_bound: within,
        steps,
    })
}
