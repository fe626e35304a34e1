//! Reference IF estimators: analytic-signal phase differentiation, the
//! spectrogram first moment, and the deterministic constant-amplitude chirp
//! state-space model.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{filter, smooth};
use crate::mle::{fit, FitOptions, FitResult, Pins};
use crate::model::{ChirpModel, ModelParams, PositiveMap};
use crate::simulate::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Hilbert,
    Spectrogram,
    LegacySs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub t: Vec<f64>,
    pub if_est: Vec<f64>,
    pub method: BaselineMethod,
    /// Samples whose value comes from one-sided differences or constant
    /// extrapolation beyond the first/last spectrogram frame.
    pub edge: Vec<bool>,
}

fn require_even(series: &TimeSeries, min_len: usize) -> Result<f64> {
    if series.len() < min_len {
        return Err(Error::UnsupportedInput(format!(
            "need at least {min_len} samples, got {}",
            series.len()
        )));
    }
    series
        .sampling_rate()
        .ok_or_else(|| Error::UnsupportedInput("series is not evenly sampled".into()))
}

/// Analytic signal by zeroing negative frequencies. With `cutoff`, bins above
/// it are zeroed too (an ideal low-pass).
pub fn analytic_signal(y: &[f64], fs: f64, cutoff: Option<f64>) -> Vec<Complex64> {
    let n = y.len();
    let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        let freq = k as f64 * fs / n as f64;
        let pass = cutoff.map_or(true, |fc| freq <= fc);
        *c *= if pass { gain } else { 0.0 };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c * scale).collect()
}

/// Removes 2π jumps from a wrapped phase sequence.
pub fn unwrap_phase(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in wrapped {
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= TAU * ((d + PI) / TAU).floor();
            } else if d < -PI {
                offset += TAU * ((-d + PI) / TAU).floor();
            }
        }
        prev = Some(p);
        out.push(p + offset);
    }
    out
}

/// IF from the derivative of the unwrapped analytic-signal phase.
pub fn hilbert_if(series: &TimeSeries, cutoff: Option<f64>) -> Result<BaselineEstimate> {
    let fs = require_even(series, 8)?;
    let z = analytic_signal(&series.y, fs, cutoff);
    let phase = unwrap_phase(&z.iter().map(|c| c.im.atan2(c.re)).collect::<Vec<_>>());
    let n = phase.len();
    let to_hz = fs / TAU;
    let if_est: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => (phase[1] - phase[0]) * to_hz,
            k if k == n - 1 => (phase[k] - phase[k - 1]) * to_hz,
            k => (phase[k + 1] - phase[k - 1]) * 0.5 * to_hz,
        })
        .collect();
    let mut edge = vec![false; n];
    edge[0] = true;
    edge[n - 1] = true;
    Ok(BaselineEstimate {
        t: series.t.clone(),
        if_est,
        method: BaselineMethod::Hilbert,
        edge,
    })
}

/// Per-frame first moment of the Hann-windowed power spectrum.
///
/// Returns `(frame_centre_times, frame_if)`. With `cutoff`, the moment is
/// taken over `[0, cutoff]` only.
pub fn spectrogram_frames(
    series: &TimeSeries,
    window_len: usize,
    overlap: usize,
    cutoff: Option<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fs = require_even(series, 2)?;
    if window_len < 2 || window_len > series.len() {
        return Err(Error::InvalidArgument(format!(
            "window length {window_len} must lie in [2, {}]",
            series.len()
        )));
    }
    if overlap >= window_len {
        return Err(Error::InvalidArgument("overlap must be below the window length".into()));
    }
    let hop = window_len - overlap;
    let window: Vec<f64> = (0..window_len)
        .map(|n| 0.5 - 0.5 * (TAU * n as f64 / (window_len - 1) as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(window_len);
    let bins = window_len / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * fs / window_len as f64).collect();
    let band = freqs
        .iter()
        .take_while(|&&f| cutoff.map_or(true, |fc| f <= fc))
        .count()
        .max(1);
    let mut centres = Vec::new();
    let mut moments = Vec::new();
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    let mut start = 0;
    while start + window_len <= series.len() {
        for (b, (y, w)) in buf.iter_mut().zip(series.y[start..].iter().zip(&window)) {
            *b = Complex64::new(y * w, 0.0);
        }
        fft.process(&mut buf);
        let (num, den) = buf[..band]
            .iter()
            .zip(&freqs)
            .fold((0.0, 0.0), |(n, d), (c, f)| {
                let p = c.norm_sqr();
                (n + f * p, d + p)
            });
        let mid = start as f64 + 0.5 * (window_len - 1) as f64;
        centres.push(series.t[0] + mid / fs);
        moments.push(if den > 0.0 { num / den } else { 0.0 });
        start += hop;
    }
    Ok((centres, moments))
}

/// Spectrogram first-moment IF interpolated back to every measurement time.
pub fn spectrogram_if(
    series: &TimeSeries,
    window_len: usize,
    overlap: usize,
    cutoff: Option<f64>,
) -> Result<BaselineEstimate> {
    let (centres, moments) = spectrogram_frames(series, window_len, overlap, cutoff)?;
    let last = centres.len() - 1;
    let mut idx = 0;
    let mut if_est = Vec::with_capacity(series.len());
    let mut edge = Vec::with_capacity(series.len());
    for &t in &series.t {
        if t <= centres[0] {
            if_est.push(moments[0]);
            edge.push(t < centres[0]);
        } else if t >= centres[last] {
            if_est.push(moments[last]);
            edge.push(t > centres[last]);
        } else {
            while centres[idx + 1] < t {
                idx += 1;
            }
            let w = (t - centres[idx]) / (centres[idx + 1] - centres[idx]);
            if_est.push(moments[idx] * (1.0 - w) + moments[idx + 1] * w);
            edge.push(false);
        }
    }
    Ok(BaselineEstimate {
        t: series.t.clone(),
        if_est,
        method: BaselineMethod::Spectrogram,
        edge,
    })
}

/// Deterministic-chirp state-space baseline: fit with `λ` and `b` pinned to
/// zero, then report the smoothed IF.
pub fn legacy_ss_if<M: PositiveMap + Copy>(
    series: &TimeSeries,
    map: M,
    starts: &[ModelParams],
    opts: &FitOptions,
) -> Result<(BaselineEstimate, FitResult)> {
    let mut opts = opts.clone();
    opts.pins.0.extend(Pins::legacy().0);
    let fitted = fit(series, map, starts, &opts)?;
    let model = ChirpModel::new(fitted.params, map).with_chirp_var(opts.chirp_var);
    let run = filter(&model, series, opts.rule, opts.mode)?;
    let smoothed = smooth(&run)?;
    let if_est = smoothed
        .if_estimates(&map)
        .into_iter()
        .map(|e| e.if_mean)
        .collect();
    Ok((
        BaselineEstimate {
            t: series.t.clone(),
            if_est,
            method: BaselineMethod::LegacySs,
            edge: vec![false; series.len()],
        },
        fitted,
    ))
}
