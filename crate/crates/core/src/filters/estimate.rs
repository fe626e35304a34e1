use serde::{Deserialize, Serialize};

use super::{FilterRun, GaussianBelief, SmootherRun};
use crate::model::{PositiveMap, CHIRP_INDEX, V_INDEX};

/// Two-sided 95% standard-normal quantile.
const Z95: f64 = 1.96;

/// Instantaneous-frequency and chirp estimate at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfEstimate {
    pub t: f64,
    pub if_mean: f64,
    pub if_lower: f64,
    pub if_upper: f64,
    pub chirp_mean: f64,
    pub chirp_std: f64,
}

/// Maps beliefs to frequency estimates.
///
/// The band transforms `m_v ± 1.96 σ_v` through the monotone map, so it is a
/// 95% interval for the frequency and `if_mean = g(m_v)` is its median.
pub fn extract_if<M: PositiveMap>(
    times: &[f64],
    beliefs: &[GaussianBelief],
    map: &M,
) -> Vec<IfEstimate> {
    times
        .iter()
        .zip(beliefs)
        .map(|(&t, b)| {
            let mv = b.mean[V_INDEX];
            let sv = b.cov[(V_INDEX, V_INDEX)].max(0.0).sqrt();
            IfEstimate {
                t,
                if_mean: map.apply(mv),
                if_lower: map.apply(mv - Z95 * sv),
                if_upper: map.apply(mv + Z95 * sv),
                chirp_mean: b.mean[CHIRP_INDEX],
                chirp_std: b.cov[(CHIRP_INDEX, CHIRP_INDEX)].max(0.0).sqrt(),
            }
        })
        .collect()
}

impl FilterRun {
    pub fn if_estimates<M: PositiveMap>(&self, map: &M) -> Vec<IfEstimate> {
        extract_if(&self.times, &self.filtered, map)
    }
}

impl SmootherRun {
    pub fn if_estimates<M: PositiveMap>(&self, map: &M) -> Vec<IfEstimate> {
        extract_if(&self.times, &self.smoothed, map)
    }
}
