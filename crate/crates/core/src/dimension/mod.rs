//! Box-counting dimension of sample clouds, closed-form dimension bounds,
//! and the entropy-to-Lyapunov ratio of an IFS.

mod bounds;
mod boxcount;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::PowerIterConfig;
use crate::error::{IfsError, Result};
use crate::ifs::{IfsSystem, MapDescriptor, SampleCloud};

pub use bounds::{analytic_bound, BoundFamily, BoundSpec};
pub use boxcount::{box_counting_dimension, BoxCountConfig, DimensionEstimate, MAX_AMBIENT_DIM, MIN_POINTS};

/// `-Ent / sum_i p_i E[log ||J_{h_i}||]`, an upper bound on the dimension of
/// the invariant measure when the denominator is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamsBound {
    pub neg_entropy: f64,
    pub mean_log_jacobian: f64,
    pub ratio: f64,
    pub n_mc_samples: usize,
}

impl RamsBound {
    /// Builds the ratio from its parts; `ratio` is NaN unless
    /// `mean_log_jacobian < 0`.
    pub fn from_parts(neg_entropy: f64, mean_log_jacobian: f64, n_mc_samples: usize) -> Self {
        let ratio = if mean_log_jacobian < 0.0 { neg_entropy / -mean_log_jacobian } else { f64::NAN };
        Self { neg_entropy, mean_log_jacobian, ratio, n_mc_samples }
    }
}

/// Ratio for an explicit map family, averaging `log ||J_{h_i}(w)||` over
/// `n_w` evenly strided cloud points for every map (affine maps are
/// evaluated once). Errors with `NonContractiveEstimate` when the average is
/// not negative.
pub fn rams_ratio(system: &IfsSystem, cloud: &SampleCloud, n_w: usize, config: &PowerIterConfig) -> Result<RamsBound> {
    if cloud.is_empty() || n_w == 0 {
        return Err(IfsError::InvalidArgument("need a nonempty cloud and n_w >= 1".into()));
    }
    if cloud.dim() != system.dim() {
        return Err(IfsError::DimensionMismatch { expected: system.dim(), got: cloud.dim() });
    }
    let rows = cloud.strided_indices(n_w.min(cloud.len()));
    let per_map: Vec<f64> = system
        .maps()
        .par_iter()
        .map(|map| match map {
            MapDescriptor::Affine(_) => Ok(map.jacobian_norm(&cloud.point_vec(0), config)?.norm.ln()),
            MapDescriptor::ProblemBacked(_) => {
                let mut s = 0.0;
                for &k in &rows {
                    s += map.jacobian_norm(&cloud.point_vec(k), config)?.norm.ln();
                }
                Ok(s / rows.len() as f64)
            }
        })
        .collect::<Result<_>>()?;
    let mean_log: f64 = per_map.iter().zip(system.probs()).map(|(l, p)| p * l).sum();
    let rams = RamsBound::from_parts(system.neg_entropy(), mean_log, rows.len() * system.num_maps());
    if !(mean_log < 0.0) {
        return Err(IfsError::NonContractiveEstimate { mean_log });
    }
    Ok(rams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::AffineMap;

    fn cloud1(pts: &[f64]) -> SampleCloud {
        SampleCloud::new(pts.to_vec(), 1, 0, 1, 0).unwrap()
    }

    #[test]
    fn cantor_ratio() {
        let r = rams_ratio(&IfsSystem::cantor(), &cloud1(&[0.1, 0.5]), 2, &PowerIterConfig::default()).unwrap();
        assert!((r.neg_entropy - 2f64.ln()).abs() < 1e-15);
        assert!((r.mean_log_jacobian - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((r.ratio - 3f64.log(2.0).recip()).abs() < 1e-12);
    }

    #[test]
    fn two_slopes() {
        let sys = IfsSystem::uniform(vec![
            MapDescriptor::Affine(AffineMap::scalar(0.9, 0.0)),
            MapDescriptor::Affine(AffineMap::scalar(0.8, 1.0)),
        ])
        .unwrap();
        let r = rams_ratio(&sys, &cloud1(&[0.0]), 1, &PowerIterConfig::default()).unwrap();
        let expect = 2f64.ln() / -(0.9f64.ln() + 0.8f64.ln()) * 2.0;
        assert!((r.ratio - expect).abs() < 1e-12);
        assert!((r.ratio - 4.220).abs() < 1e-3);
    }

    #[test]
    fn expanding_system_is_rejected() {
        let sys = IfsSystem::uniform(vec![
            MapDescriptor::Affine(AffineMap::scalar(1.5, 0.0)),
            MapDescriptor::Affine(AffineMap::scalar(0.9, 1.0)),
        ])
        .unwrap();
        let e = rams_ratio(&sys, &cloud1(&[0.0]), 1, &PowerIterConfig::default());
        assert!(matches!(e, Err(IfsError::NonContractiveEstimate { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let c = SampleCloud::new(vec![0.0, 0.0], 2, 0, 1, 0).unwrap();
        assert!(rams_ratio(&IfsSystem::cantor(), &c, 1, &PowerIterConfig::default()).is_err());
    }
}
