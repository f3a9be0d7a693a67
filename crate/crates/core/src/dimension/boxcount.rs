use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IfsError, Result};
use crate::ifs::SampleCloud;

/// Minimum cloud size accepted by [`box_counting_dimension`].
pub const MIN_POINTS: usize = 1000;
/// Largest ambient dimension the grid counter handles.
pub const MAX_AMBIENT_DIM: usize = 3;
const MIN_FIT_SCALES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxCountConfig {
    pub num_scales: usize,
    /// Coarsest cell size; `None` means a quarter of the bounding-box diagonal.
    pub coarsest_scale: Option<f64>,
    pub scale_ratio: f64,
    /// Mass fraction that may be discarded from the lightest cells.
    pub mass_truncation: f64,
    /// A scale is saturated once its count exceeds `sqrt(N) * min_occupied`.
    pub min_occupied: usize,
    /// Half-open range `[lo, hi)` of scale indices used in the fit.
    pub fit_range: (usize, usize),
}

impl Default for BoxCountConfig {
    fn default() -> Self {
        Self {
            num_scales: 12,
            coarsest_scale: None,
            scale_ratio: 0.5,
            mass_truncation: 0.01,
            min_occupied: 64,
            fit_range: (3, 9),
        }
    }
}

impl BoxCountConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.fit_range;
        if self.num_scales < MIN_FIT_SCALES {
            return Err(IfsError::InvalidArgument("num_scales must be >= 4".into()));
        }
        if !(self.scale_ratio > 0.0 && self.scale_ratio < 1.0) {
            return Err(IfsError::InvalidArgument("scale_ratio must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.mass_truncation) {
            return Err(IfsError::InvalidArgument("mass_truncation must lie in [0, 1)".into()));
        }
        if lo >= hi || hi > self.num_scales {
            return Err(IfsError::InvalidArgument(format!(
                "fit_range ({lo}, {hi}) must be a nonempty range within [0, {})",
                self.num_scales
            )));
        }
        if let Some(d0) = self.coarsest_scale {
            if !(d0 > 0.0 && d0.is_finite()) {
                return Err(IfsError::InvalidArgument("coarsest_scale must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Fitted slope clipped to `[0, ambient d]`.
    pub value: f64,
    /// `delta_j`, coarsest first.
    pub scales: Vec<f64>,
    /// Occupied cells after mass truncation, one per scale.
    pub counts: Vec<usize>,
    pub fit_r2: f64,
    pub raw_slope: f64,
    /// Indices of the scales that entered the fit.
    pub fit_scales: Vec<usize>,
    pub config: BoxCountConfig,
}

/// Box-counting dimension of a cloud: the slope of `log N_delta` against
/// `log(1/delta)` over the configured scale range.
///
/// Cells are `[k delta, (k+1) delta)` per axis, anchored at the cloud's
/// coordinate-wise minimum. Scales are counted in parallel; the result does
/// not depend on the thread count.
pub fn box_counting_dimension(cloud: &SampleCloud, config: &BoxCountConfig) -> Result<DimensionEstimate> {
    config.validate()?;
    let d = cloud.dim();
    if d > MAX_AMBIENT_DIM {
        return Err(IfsError::DimensionTooLarge { dim: d });
    }
    if cloud.len() < MIN_POINTS {
        return Err(IfsError::InvalidArgument(format!(
            "box counting needs at least {MIN_POINTS} points, got {}",
            cloud.len()
        )));
    }
    let (lo, hi) = cloud.bounds();
    let diameter = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let delta0 = match config.coarsest_scale {
        Some(d0) => d0,
        None if diameter > 0.0 => diameter / 4.0,
        None => return Err(IfsError::InvalidArgument("cloud is a single point".into())),
    };
    let scales: Vec<f64> = (0..config.num_scales)
        .map(|j| delta0 * config.scale_ratio.powi(j as i32))
        .collect();

    let n = cloud.len();
    let counts: Vec<usize> = scales
        .par_iter()
        .map(|&delta| occupied_cells(cloud, &lo, delta, config.mass_truncation))
        .collect();

    let cap = (n as f64).sqrt() * config.min_occupied as f64;
    let fit_scales: Vec<usize> = (config.fit_range.0..config.fit_range.1)
        .filter(|&j| (counts[j] as f64) <= cap)
        .collect();
    if fit_scales.len() < MIN_FIT_SCALES {
        return Err(IfsError::InsufficientScales { surviving: fit_scales.len() });
    }
    let xs: Vec<f64> = fit_scales.iter().map(|&j| -scales[j].ln()).collect();
    let ys: Vec<f64> = fit_scales.iter().map(|&j| (counts[j] as f64).ln()).collect();
    let (slope, r2) = least_squares_slope(&xs, &ys);
    Ok(DimensionEstimate {
        value: slope.clamp(0.0, d as f64),
        scales,
        counts,
        fit_r2: r2,
        raw_slope: slope,
        fit_scales,
        config: config.clone(),
    })
}

fn occupied_cells(cloud: &SampleCloud, lo: &[f64], delta: f64, truncation: f64) -> usize {
    let d = cloud.dim();
    let mut keys: Vec<[i64; MAX_AMBIENT_DIM]> = cloud
        .points()
        .map(|p| {
            let mut k = [0i64; MAX_AMBIENT_DIM];
            for a in 0..d {
                k[a] = ((p[a] - lo[a]) / delta).floor() as i64;
            }
            k
        })
        .collect();
    keys.sort_unstable();
    let mut masses: Vec<usize> = Vec::new();
    let mut run = 1usize;
    for w in keys.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            masses.push(run);
            run = 1;
        }
    }
    masses.push(run);
    if truncation == 0.0 {
        return masses.len();
    }
    // Drop the lightest cells while the removed mass stays within budget.
    masses.sort_unstable();
    let budget = truncation * keys.len() as f64;
    let mut removed = 0usize;
    let mut dropped = 0usize;
    for m in &masses {
        if (removed + m) as f64 > budget {
            break;
        }
        removed += m;
        dropped += 1;
    }
    masses.len() - dropped
}

/// Ordinary least-squares slope of `ys` on `xs` and the fit's R^2.
fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256PlusPlus;

    fn cloud_from(points: Vec<f64>, dim: usize) -> SampleCloud {
        SampleCloud::new(points, dim, 0, 1, 0).unwrap()
    }

    #[test]
    fn slope_fit() {
        let (s, r2) = least_squares_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert_eq!((s, r2), (2.0, 1.0));
    }

    #[test]
    fn uniform_interval_is_one() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let pts: Vec<f64> = (0..200_000).map(|_| rng.next_f64()).collect();
        let est = box_counting_dimension(&cloud_from(pts, 1), &BoxCountConfig::default()).unwrap();
        assert!((est.value - 1.0).abs() < 0.05, "{est:?}");
        assert!(est.fit_r2 > 0.99);
    }

    #[test]
    fn embedded_segment_is_one() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
        let pts: Vec<f64> = (0..200_000).flat_map(|_| [rng.next_f64(), 0.5]).collect();
        let est = box_counting_dimension(&cloud_from(pts, 2), &BoxCountConfig::default()).unwrap();
        assert!((est.value - 1.0).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn plain_counts_are_monotone() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let pts: Vec<f64> = (0..5000).flat_map(|_| [rng.normal(), rng.normal() * 0.1]).collect();
        let cfg = BoxCountConfig { mass_truncation: 0.0, ..Default::default() };
        let est = box_counting_dimension(&cloud_from(pts, 2), &cfg).unwrap();
        // Scales shrink with the index, so counts must not decrease.
        assert!(est.counts.windows(2).all(|w| w[0] <= w[1]), "{:?}", est.counts);
    }

    #[test]
    fn preconditions() {
        let small = cloud_from(vec![0.0; 10], 1);
        assert!(box_counting_dimension(&small, &BoxCountConfig::default()).is_err());
        let four = cloud_from((0..4000).map(|i| i as f64).collect(), 4);
        assert_eq!(
            box_counting_dimension(&four, &BoxCountConfig::default()).unwrap_err(),
            IfsError::DimensionTooLarge { dim: 4 }
        );
        let bad = BoxCountConfig { fit_range: (3, 13), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = BoxCountConfig { num_scales: 3, fit_range: (0, 3), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn saturation_filter_reports_insufficient_scales() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
        let pts: Vec<f64> = (0..2000).map(|_| rng.next_f64()).collect();
        let cfg = BoxCountConfig { min_occupied: 1, mass_truncation: 0.0, ..Default::default() };
        assert!(matches!(
            box_counting_dimension(&cloud_from(pts, 1), &cfg),
            Err(IfsError::InsufficientScales { .. })
        ));
    }

    #[test]
    fn truncation_budget() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let mut pts: Vec<f64> = (0..10_000).map(|_| rng.next_f64() * 0.01).collect();
        pts.extend((0..50).map(|i| 0.5 + i as f64 * 0.01));
        let cloud = cloud_from(pts, 1);
        let (lo, _) = cloud.bounds();
        // 50 singleton outliers weigh < 1% of the mass and are all removed.
        let full = occupied_cells(&cloud, &lo, 0.1, 0.0);
        let trunc = occupied_cells(&cloud, &lo, 0.1, 0.01);
        assert!(full > trunc);
        assert_eq!(trunc, 1);
    }
}
