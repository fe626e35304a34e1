//! Benchmark signal generation and sampling from the chirp/IF prior.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{harmonic_noise_cov, ChirpModel, PositiveMap, StateVector, CHIRP_INDEX, V_INDEX};

/// Measurements at strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "timestamps ({}) and measurements ({}) differ in length",
                t.len(),
                y.len()
            )));
        }
        if t.is_empty() {
            return Err(Error::InvalidArgument("series must be non-empty".into()));
        }
        if t.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("series contains non-finite values".into()));
        }
        if let Some(k) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "timestamps not strictly increasing at index {}",
                k + 1
            )));
        }
        Ok(Self { t, y })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sampling rate if the timestamps are evenly spaced (relative
    /// tolerance 1e-6 on the spacing).
    pub fn sampling_rate(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let dt = (self.t[self.len() - 1] - self.t[0]) / (self.len() - 1) as f64;
        self.t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt)
            .then_some(1.0 / dt)
    }
}

/// Parameters of the benchmark frequency law
/// `f(t) = a·b·cot(t)·csc(t)·exp(-b·csc(t)) + c` on `(0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfLaw {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for IfLaw {
    fn default() -> Self {
        Self {
            a: 500.0,
            b: 5.0,
            c: 8.0,
        }
    }
}

fn check_domain(t: f64) -> Result<()> {
    if t > 0.0 && t < PI {
        Ok(())
    } else {
        Err(Error::Domain(t))
    }
}

/// Benchmark instantaneous frequency in Hz.
pub fn true_if(t: f64, law: &IfLaw) -> Result<f64> {
    check_domain(t)?;
    let csc = 1.0 / t.sin();
    let cot = t.cos() * csc;
    Ok(law.a * law.b * cot * csc * (-law.b * csc).exp() + law.c)
}

/// Benchmark phase in cycles, the antiderivative of [`true_if`].
pub fn true_phase(t: f64, law: &IfLaw) -> Result<f64> {
    check_domain(t)?;
    Ok(law.a * (-law.b / t.sin()).exp() + law.c * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AmplitudeMode {
    Constant,
    Damped { rate: f64 },
    /// Stationary `dα = -α dt + dW`.
    OrnsteinUhlenbeck,
}

impl AmplitudeMode {
    pub const BENCHMARK_DAMPING: f64 = 0.3;

    pub fn damped() -> Self {
        AmplitudeMode::Damped {
            rate: Self::BENCHMARK_DAMPING,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AmplitudeMode::Constant => "constant",
            AmplitudeMode::Damped { .. } => "damped",
            AmplitudeMode::OrnsteinUhlenbeck => "ou",
        }
    }
}

impl std::str::FromStr for AmplitudeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(AmplitudeMode::Constant),
            "damped" => Ok(AmplitudeMode::damped()),
            "ou" | "random" => Ok(AmplitudeMode::OrnsteinUhlenbeck),
            other => Err(Error::InvalidArgument(format!("unknown amplitude mode '{other}'"))),
        }
    }
}

/// Noise-free ground truth behind a benchmark series.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub t: Vec<f64>,
    pub f_true: Vec<f64>,
    pub phase: Vec<f64>,
    pub alpha: Vec<f64>,
    pub clean: Vec<f64>,
}

const NOISE_STREAM: u64 = 0;
const AMPLITUDE_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent seed for run `index` (splitmix64 finaliser).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample times `k/fs` for every `k >= 1` with `k/fs < π`.
pub fn benchmark_grid(fs: f64) -> Result<Vec<f64>> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidArgument("fs must be positive".into()));
    }
    let mut n = (PI * fs).floor() as usize;
    while n > 0 && n as f64 / fs >= PI {
        n -= 1;
    }
    Ok((1..=n).map(|k| k as f64 / fs).collect())
}

fn ou_path(t: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut alpha = (0.5f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut prev = 0.0;
    t.iter()
        .map(|&tk| {
            let decay = (-(tk - prev)).exp();
            let sd = ((1.0 - decay * decay) / 2.0).sqrt();
            alpha = decay * alpha + sd * rng.sample::<f64, _>(StandardNormal);
            prev = tk;
            alpha
        })
        .collect()
}

/// Generates the synthetic benchmark: the frequency law of [`IfLaw`] with the
/// chosen amplitude, observed in Gaussian noise of variance `noise_var`.
pub fn gen_benchmark(
    fs: f64,
    mode: AmplitudeMode,
    noise_var: f64,
    seed: u64,
    law: &IfLaw,
) -> Result<(SyntheticTruth, TimeSeries)> {
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidArgument("noise_var must be >= 0".into()));
    }
    let t = benchmark_grid(fs)?;
    let f_true = t.iter().map(|&s| true_if(s, law)).collect::<Result<Vec<_>>>()?;
    let phase = t.iter().map(|&s| true_phase(s, law)).collect::<Result<Vec<_>>>()?;
    let alpha: Vec<f64> = match mode {
        AmplitudeMode::Constant => vec![1.0; t.len()],
        AmplitudeMode::Damped { rate } => t.iter().map(|&s| (-rate * s).exp()).collect(),
        AmplitudeMode::OrnsteinUhlenbeck => ou_path(&t, &mut stream_rng(seed, AMPLITUDE_STREAM)),
    };
    let clean: Vec<f64> = alpha
        .iter()
        .zip(&phase)
        .map(|(a, p)| a * (TAU * p).sin())
        .collect();
    let mut noise_rng = stream_rng(seed, NOISE_STREAM);
    let sd = noise_var.sqrt();
    let y = clean
        .iter()
        .map(|c| c + sd * noise_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let series = TimeSeries::new(t.clone(), y)?;
    Ok((
        SyntheticTruth {
            t,
            f_true,
            phase,
            alpha,
            clean,
        },
        series,
    ))
}

/// A lower-triangular-ish square root of a PSD matrix; falls back to the
/// eigendecomposition when Cholesky fails on a singular input.
pub(crate) fn psd_sqrt(cov: &Matrix4<f64>) -> Matrix4<f64> {
    if let Some(chol) = cov.cholesky() {
        return chol.l();
    }
    let eig = SymmetricEigen::new(*cov);
    eig.eigenvectors * Matrix4::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
}

fn sample_gaussian(mean: &StateVector, sqrt: &Matrix4<f64>, rng: &mut ChaCha8Rng) -> StateVector {
    let z = StateVector::from_fn(|_, _| rng.sample(StandardNormal));
    mean + sqrt * z
}

/// One draw from the prior SDE on a time grid.
#[derive(Debug, Clone)]
pub struct PriorSample {
    pub t: Vec<f64>,
    pub states: Vec<StateVector>,
    pub chirp: Vec<f64>,
    pub freq: Vec<f64>,
}

/// Samples the joint state sequentially through the LCD transition, starting
/// from the model prior at time zero.
pub fn sample_prior_path<M: PositiveMap>(
    model: &ChirpModel<M>,
    t_grid: &[f64],
    seed: u64,
) -> Result<PriorSample> {
    model.params.validate()?;
    if t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("grid must start at t >= 0".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = model.initial_belief();
    let mut u = sample_gaussian(&init.mean, &psd_sqrt(&init.cov), &mut rng);
    let mut prev = 0.0;
    let mut states = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let dt = t - prev;
        if dt > 0.0 {
            let mean = model.lcd_mean(&u, dt);
            u = sample_gaussian(&mean, &psd_sqrt(&model.lcd_cov(dt)), &mut rng);
        }
        prev = t;
        states.push(u);
    }
    Ok(PriorSample {
        t: t_grid.to_vec(),
        chirp: states.iter().map(|u| u[CHIRP_INDEX]).collect(),
        freq: states.iter().map(|u| model.map.apply(u[V_INDEX])).collect(),
        states,
    })
}

/// Monte-Carlo estimate of `Cov[x2(t), x2(t')]` given a frequency path.
///
/// Only the chirp block is simulated: starting from the model's chirp prior
/// at time zero, each interval rotates at the frequency supplied for its left
/// endpoint (the first interval uses `f_path[0]`). Paths use per-index seeds,
/// so the estimate does not depend on thread scheduling.
pub fn conditional_cov_mc<M: PositiveMap>(
    model: &ChirpModel<M>,
    f_path: &[f64],
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("n_samples must be >= 2".into()));
    }
    if f_path.len() != t_grid.len() || t_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "f_path and t_grid must be non-empty and equal in length".into(),
        ));
    }
    if t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("invalid time grid".into()));
    }
    let p = model.params;
    let n = t_grid.len();
    let paths: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let sd0 = model.chirp_var.sqrt();
            let mut x = [
                sd0 * rng.sample::<f64, _>(StandardNormal),
                sd0 * rng.sample::<f64, _>(StandardNormal),
            ];
            let mut prev = 0.0;
            let mut f_prev = f_path[0];
            let mut out = Vec::with_capacity(n);
            for (&t, &f) in t_grid.iter().zip(f_path) {
                let dt = t - prev;
                if dt > 0.0 {
                    let (s, c) = (TAU * f_prev * dt).sin_cos();
                    let decay = (-p.lambda * dt).exp();
                    let sd = harmonic_noise_cov(dt, p.lambda, p.b)[(0, 0)].sqrt();
                    x = [
                        decay * (c * x[0] - s * x[1]) + sd * rng.sample::<f64, _>(StandardNormal),
                        decay * (s * x[0] + c * x[1]) + sd * rng.sample::<f64, _>(StandardNormal),
                    ];
                }
                prev = t;
                f_prev = f;
                out.push(x[1]);
            }
            out
        })
        .collect();
    let mut mean = vec![0.0; n];
    for path in &paths {
        for (m, x) in mean.iter_mut().zip(path) {
            *m += x / n_samples as f64;
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for path in &paths {
        for i in 0..n {
            let di = path[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (path[j] - mean[j]);
            }
        }
    }
    let denom = (n_samples - 1) as f64;
    for i in 0..n {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{harmonic_kernel, harmonic_transition, Bijection, ModelParams};
    use nalgebra::Matrix2;

    #[test]
    fn if_law_examples() {
        let law = IfLaw::default();
        assert!((true_if(PI / 2.0, &law).unwrap() - 8.0).abs() < 1e-12);
        let flat = IfLaw { a: 0.0, ..law };
        for t in [0.1, 1.0, 3.0] {
            assert_eq!(true_if(t, &flat).unwrap(), 8.0);
        }
        assert!(matches!(true_if(0.0, &law), Err(Error::Domain(_))));
        assert!(true_if(PI, &law).is_err());
        assert!(true_phase(-1.0, &law).is_err());
        let tiny = 1e-3;
        assert!((true_phase(tiny, &law).unwrap() - 8.0 * tiny).abs() < 1e-15);
        let half = true_phase(PI / 2.0, &law).unwrap();
        assert!((half - (500.0 * (-5.0f64).exp() + 4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn phase_derivative_is_frequency() {
        let law = IfLaw::default();
        let h = 1e-6;
        let t = 1.0;
        let fd = (true_phase(t + h, &law).unwrap() - true_phase(t - h, &law).unwrap()) / (2.0 * h);
        assert!((fd - true_if(t, &law).unwrap()).abs() < 1e-6);

        let fs = 1000.0;
        let grid = benchmark_grid(fs).unwrap();
        let mut worst: f64 = 0.0;
        for &t in &grid[1..grid.len() - 1] {
            let d = (true_phase(t + 1.0 / fs, &law).unwrap()
                - true_phase(t - 1.0 / fs, &law).unwrap())
                * fs
                / 2.0;
            worst = worst.max((d - true_if(t, &law).unwrap()).abs());
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn benchmark_length_and_positivity() {
        let (truth, series) =
            gen_benchmark(1000.0, AmplitudeMode::Constant, 0.1, 1, &IfLaw::default()).unwrap();
        assert_eq!(series.len(), 3141);
        assert_eq!(series.t[0], 0.001);
        assert!(*series.t.last().unwrap() < PI);
        assert!(truth.f_true.iter().all(|&f| f > 0.0));
        assert!((series.sampling_rate().unwrap() - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn noiseless_constant_matches_clean() {
        let (truth, series) =
            gen_benchmark(1000.0, AmplitudeMode::Constant, 0.0, 9, &IfLaw::default()).unwrap();
        assert_eq!(series.y, truth.clean);
        for (c, p) in truth.clean.iter().zip(&truth.phase) {
            assert_eq!(*c, (TAU * p).sin());
        }
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let law = IfLaw::default();
        for mode in [AmplitudeMode::damped(), AmplitudeMode::OrnsteinUhlenbeck] {
            let a = gen_benchmark(1000.0, mode, 0.1, 42, &law).unwrap();
            let b = gen_benchmark(1000.0, mode, 0.1, 42, &law).unwrap();
            let c = gen_benchmark(1000.0, mode, 0.1, 43, &law).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.1.y, c.1.y);
        }
    }

    #[test]
    fn noise_level_matches_request() {
        for mode in [
            AmplitudeMode::Constant,
            AmplitudeMode::damped(),
            AmplitudeMode::OrnsteinUhlenbeck,
        ] {
            let (truth, series) = gen_benchmark(1000.0, mode, 0.1, 5, &IfLaw::default()).unwrap();
            let rms = (series
                .y
                .iter()
                .zip(&truth.clean)
                .map(|(y, c)| (y - c).powi(2))
                .sum::<f64>()
                / series.len() as f64)
                .sqrt();
            assert!((rms / 0.1f64.sqrt() - 1.0).abs() < 0.05, "{rms}");
        }
    }

    #[test]
    fn ou_amplitude_is_stationary() {
        let law = IfLaw::default();
        let samples: Vec<f64> = (0..200)
            .map(|s| {
                let (truth, _) =
                    gen_benchmark(100.0, AmplitudeMode::OrnsteinUhlenbeck, 0.1, s, &law).unwrap();
                *truth.alpha.last().unwrap()
            })
            .collect();
        let var = samples.iter().map(|a| a * a).sum::<f64>() / samples.len() as f64;
        // var of a sample variance of 200 normals with variance 1/2 is ~0.05
        assert!((var - 0.5).abs() < 0.15, "{var}");
    }

    #[test]
    fn series_validation() {
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(TimeSeries::new(vec![], vec![]).is_err());
        assert!(TimeSeries::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
        let uneven = TimeSeries::new(vec![0.0, 1.0, 3.0], vec![0.0; 3]).unwrap();
        assert!(uneven.sampling_rate().is_none());
    }

    fn quiet_model(b: f64, sigma: f64, m0v: f64) -> ChirpModel {
        ChirpModel::new(
            ModelParams::new(0.2, b, 0.1, 1.0, sigma, m0v).unwrap(),
            Bijection::Softplus,
        )
    }

    #[test]
    fn noiseless_prior_is_damped_sinusoid() {
        // without diffusion the chirp block is a damped rotation at the
        // rate of v frozen over each step
        let model = quiet_model(0.0, 1e-12, 1.0);
        let grid: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let sample = sample_prior_path(&model, &grid, 3).unwrap();
        let mut x = nalgebra::Vector2::new(sample.states[0][0], sample.states[0][1]);
        for w in sample.states.windows(2) {
            let f = Bijection::Softplus.apply(w[0][V_INDEX]);
            x = harmonic_transition(f, 0.01, 0.2).unwrap() * x;
            assert!((x[1] - w[1][1]).abs() < 1e-9 && (x[0] - w[1][0]).abs() < 1e-9);
        }
        assert!(sample.freq.iter().all(|&f| f > 0.0));
    }

    #[test]
    fn prior_v_mean_reverts_to_zero() {
        let model = quiet_model(0.3, 0.05, 1.5);
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
        let finals: Vec<f64> = (0..500)
            .map(|s| sample_prior_path(&model, &grid, s).unwrap().states.last().unwrap()[V_INDEX])
            .collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = (crate::model::matern32_transition(1.0, 1.0) * nalgebra::Vector2::new(1.5, 0.0))[0];
        assert!((mean - target).abs() < 4.0 * 0.05 / n.sqrt(), "{mean} vs {target}");
        // the stationary variance is preserved
        assert!((var / 0.0025 - 1.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn conditional_cov_matches_closed_form_for_constant_frequency() {
        let model = quiet_model(0.5, 1.0, 0.0).with_chirp_var(1.25);
        let grid: Vec<f64> = (1..=6).map(|k| k as f64 * 0.4).collect();
        let f = 0.5;
        let n = 4000;
        let est = conditional_cov_mc(&model, &vec![f; grid.len()], &grid, n, 11).unwrap();
        let p0 = Matrix2::identity() * 1.25;
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                let exact = harmonic_kernel(grid[i], grid[j], f, 0.2, 0.5, &p0).unwrap()[(1, 1)];
                // standard error of a Gaussian sample covariance
                let vi = harmonic_kernel(grid[i], grid[i], f, 0.2, 0.5, &p0).unwrap()[(1, 1)];
                let vj = harmonic_kernel(grid[j], grid[j], f, 0.2, 0.5, &p0).unwrap()[(1, 1)];
                let se = ((vi * vj + exact * exact) / n as f64).sqrt();
                assert!((est[(i, j)] - exact).abs() < 5.0 * se, "({i},{j})");
            }
        }
        let small = conditional_cov_mc(&model, &vec![f; grid.len()], &grid, 2, 1).unwrap();
        assert_eq!(small.clone(), small.transpose());
        assert!((0..grid.len()).all(|i| small[(i, i)] >= 0.0));
        assert!(conditional_cov_mc(&model, &[f], &[0.1], 1, 1).is_err());
    }
}
