//! Frequency tracking on gravitational-wave strain excerpts.
//!
//! The strain is standardised to unit variance and its time axis shifted so
//! that the first sample sits one sampling period after the model origin.
//! Estimates are reported on the original time axis.

use serde::{Deserialize, Serialize};

use crate::benchmark::{fit_filter_smooth, StateSpaceFit};
use crate::error::{Error, Result};
use crate::filters::IfEstimate;
use crate::mle::FitOptions;
use crate::model::{ModelParams, PositiveMap};
use crate::simulate::TimeSeries;

/// Sample count of the reference event excerpt.
pub const EVENT_LEN: usize = 3441;

/// Shortest series the pipeline accepts.
pub const MIN_LEN: usize = 64;

/// Start grid sized for tens-to-hundreds of Hz over tens of milliseconds.
pub fn gw_starts<M: PositiveMap>(map: &M) -> Vec<ModelParams> {
    let mut starts = Vec::with_capacity(6);
    for f in [30.0, 60.0, 120.0] {
        for ell in [0.02, 0.05] {
            starts.push(ModelParams {
                lambda: 10.0,
                b: 1.0,
                xi: 0.1,
                ell,
                sigma: 100.0,
                m0v: map.inverse(f),
            });
        }
    }
    starts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardisation {
    pub y_mean: f64,
    pub y_std: f64,
    /// Added to the model time axis to recover the input times.
    pub t_offset: f64,
}

/// Standardises values and moves the first sample to `1/fs`.
pub fn prepare(series: &TimeSeries) -> Result<(TimeSeries, Standardisation)> {
    if series.len() < MIN_LEN {
        return Err(Error::UnsupportedInput(format!(
            "need at least {MIN_LEN} samples, got {}",
            series.len()
        )));
    }
    let fs = series
        .sampling_rate()
        .ok_or_else(|| Error::UnsupportedInput("strain must be evenly sampled".into()))?;
    let n = series.len() as f64;
    let y_mean = series.y.iter().sum::<f64>() / n;
    let y_std = (series.y.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(y_std > 0.0) {
        return Err(Error::UnsupportedInput("strain is constant".into()));
    }
    let t_offset = series.t[0] - 1.0 / fs;
    let prepared = TimeSeries::new(
        series.t.iter().map(|t| t - t_offset).collect(),
        series.y.iter().map(|y| (y - y_mean) / y_std).collect(),
    )?;
    Ok((
        prepared,
        Standardisation {
            y_mean,
            y_std,
            t_offset,
        },
    ))
}

pub struct GwOutput {
    pub fit: StateSpaceFit,
    pub standardisation: Standardisation,
    pub filtered: Vec<IfEstimate>,
    pub smoothed: Vec<IfEstimate>,
}

/// Fits the model to a strain excerpt and returns IF estimates on the input
/// time axis. `expected_len` enforces an exact sample count.
pub fn run_gw<M: PositiveMap + Copy>(
    series: &TimeSeries,
    map: M,
    starts: Option<&[ModelParams]>,
    opts: &FitOptions,
    expected_len: Option<usize>,
) -> Result<GwOutput> {
    if let Some(n) = expected_len {
        if series.len() != n {
            return Err(Error::UnsupportedInput(format!(
                "expected {n} samples, got {}",
                series.len()
            )));
        }
    }
    let (prepared, standardisation) = prepare(series)?;
    let default_starts;
    let starts = match starts {
        Some(s) => s,
        None => {
            default_starts = gw_starts(&map);
            &default_starts
        }
    };
    let fit = fit_filter_smooth(&prepared, map, starts, opts)?;
    let shift = |mut v: Vec<IfEstimate>| {
        v.iter_mut().for_each(|e| e.t += standardisation.t_offset);
        v
    };
    let filtered = shift(fit.run.if_estimates(&map));
    let smoothed = shift(fit.smoothed.if_estimates(&map));
    Ok(GwOutput {
        fit,
        standardisation,
        filtered,
        smoothed,
    })
}
