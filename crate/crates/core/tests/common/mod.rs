#![allow(dead_code)]

use chirpgp::{GaussianBelief, ModelParams, PositiveMap, StateVector, TimeSeries};
use nalgebra::{Matrix4, SMatrix, Vector4};

/// Frequency frozen at a constant: the model becomes linear-Gaussian.
#[derive(Clone, Copy)]
pub struct ConstantMap(pub f64);

impl PositiveMap for ConstantMap {
    fn apply(&self, _: f64) -> f64 {
        self.0
    }
    fn derivative(&self, _: f64) -> f64 {
        0.0
    }
    fn inverse(&self, _: f64) -> f64 {
        0.0
    }
}

pub fn h() -> Vector4<f64> {
    Vector4::new(0.0, 1.0, 0.0, 0.0)
}

pub fn generator(p: &ModelParams, f: f64) -> Matrix4<f64> {
    let w = 2.0 * std::f64::consts::PI * f;
    let g = 3f64.sqrt() / p.ell;
    Matrix4::new(
        -p.lambda, -w, 0.0, 0.0, //
        w, -p.lambda, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -g * g, -2.0 * g,
    )
}

pub fn diffusion(p: &ModelParams) -> Matrix4<f64> {
    let g = 3f64.sqrt() / p.ell;
    let q = 4.0 * p.sigma * p.sigma * g.powi(3);
    Matrix4::from_diagonal(&Vector4::new(p.b * p.b, p.b * p.b, 0.0, q))
}

/// Van Loan: transition and noise covariance from one 8×8 exponential.
pub fn exact_discretisation(a: &Matrix4<f64>, l: &Matrix4<f64>, dt: f64) -> (Matrix4<f64>, Matrix4<f64>) {
    let mut big = SMatrix::<f64, 8, 8>::zeros();
    big.fixed_view_mut::<4, 4>(0, 0).copy_from(&(-a));
    big.fixed_view_mut::<4, 4>(0, 4).copy_from(l);
    big.fixed_view_mut::<4, 4>(4, 4).copy_from(&a.transpose());
    let e = (big * dt).exp();
    let phi = e.fixed_view::<4, 4>(4, 4).transpose();
    let q = phi * e.fixed_view::<4, 4>(0, 4);
    (phi, (q + q.transpose()) * 0.5)
}

pub struct Exact {
    pub predicted: Vec<(StateVector, Matrix4<f64>)>,
    pub filtered: Vec<(StateVector, Matrix4<f64>)>,
    pub smoothed: Vec<(StateVector, Matrix4<f64>)>,
    pub nll: f64,
}

pub fn exact_kalman(p: &ModelParams, f: f64, m0: StateVector, p0: Matrix4<f64>, series: &TimeSeries) -> Exact {
    let a = generator(p, f);
    let l = diffusion(p);
    let hv = h();
    let (mut m, mut cov) = (m0, p0);
    let mut prev = 0.0;
    let mut out = Exact {
        predicted: vec![],
        filtered: vec![],
        smoothed: vec![],
        nll: 0.0,
    };
    let mut phis = vec![];
    for (&t, &y) in series.t.iter().zip(&series.y) {
        let (phi, q) = exact_discretisation(&a, &l, t - prev);
        prev = t;
        let mp = phi * m;
        let pp = phi * cov * phi.transpose() + q;
        let s = hv.dot(&(pp * hv)) + p.xi;
        let k = pp * hv / s;
        let e = y - hv.dot(&mp);
        m = mp + k * e;
        cov = pp - k * k.transpose() * s;
        out.nll += 0.5 * ((2.0 * std::f64::consts::PI * s).ln() + e * e / s);
        out.predicted.push((mp, pp));
        out.filtered.push((m, cov));
        phis.push(phi);
    }
    let n = out.filtered.len();
    out.smoothed = out.filtered.clone();
    for k in (0..n - 1).rev() {
        let (mf, pf) = out.filtered[k];
        let (mp, pp) = out.predicted[k + 1];
        let g = pf * phis[k + 1].transpose() * pp.try_inverse().unwrap();
        let (ms, ps) = out.smoothed[k + 1];
        out.smoothed[k] = (mf + g * (ms - mp), pf + g * (ps - pp) * g.transpose());
    }
    out
}

/// Largest entrywise error relative to `max(1, |want|)`.
pub fn belief_error(got: &GaussianBelief, want: &(StateVector, Matrix4<f64>)) -> f64 {
    got.mean
        .iter()
        .zip(want.0.iter())
        .chain(got.cov.iter().zip(want.1.iter()))
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn random_series(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> TimeSeries {
    use rand::Rng;
    let mut t = 0.0;
    let times: Vec<f64> = (0..n)
        .map(|_| {
            t += rng.gen_range(0.005..0.05);
            t
        })
        .collect();
    let y = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    TimeSeries::new(times, y).unwrap()
}

/// Random linear-submodel case: parameters, frozen frequency and 40 samples.
pub fn linear_case(seed: u64) -> (ModelParams, f64, TimeSeries) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = ModelParams::new(
        rng.gen_range(0.0..2.0),
        rng.gen_range(0.05..2.0),
        rng.gen_range(0.05..1.0),
        rng.gen_range(0.3..3.0),
        rng.gen_range(0.2..2.0),
        rng.gen_range(-1.0..1.0),
    )
    .unwrap();
    let f = rng.gen_range(0.5..5.0);
    (p, f, random_series(&mut rng, 40))
}
