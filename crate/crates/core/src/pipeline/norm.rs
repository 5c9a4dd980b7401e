use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::PointCloudSample;

pub const NORM_EPS: f64 = 1e-8;

/// Per-dimension mean and standard deviation of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: [f64; 6],
    pub input_std: [f64; 6],
    pub disp_mean: [f64; 3],
    pub disp_std: [f64; 3],
    pub force_mean: f64,
    pub force_std: f64,
    /// Time is passed through unchanged unless these are edited.
    pub time_mean: f64,
    pub time_std: f64,
    pub eps: f64,
}

/// Population mean and standard deviation of a column stream (two passes, fixed order).
pub fn population_stats<'a>(values: impl Iterator<Item = f64> + Clone + 'a) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

#[inline]
pub fn normalize_value(v: f64, mean: f64, std: f64, eps: f64) -> f64 {
    (v - mean) / (std + eps)
}

#[inline]
pub fn denormalize_value(v: f64, mean: f64, std: f64, eps: f64) -> f64 {
    v * (std + eps) + mean
}

/// Fits statistics on the given (training) samples only.
pub fn normalize_fit(train: &[&PointCloudSample]) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit normalization on an empty split"));
    }
    let mut input_mean = [0.0; 6];
    let mut input_std = [0.0; 6];
    for c in 0..6 {
        let col = train.iter().flat_map(move |s| {
            let t = if c < 3 {
                &s.cloud.points
            } else {
                &s.cloud.normals
            };
            (0..t.rows()).map(move |i| t.at(i, c % 3))
        });
        (input_mean[c], input_std[c]) = population_stats(col);
    }
    let mut disp_mean = [0.0; 3];
    let mut disp_std = [0.0; 3];
    for c in 0..3 {
        let col = train.iter().flat_map(move |s| {
            let u = &s.displacement.u;
            (0..u.rows()).map(move |i| u.at(i, c))
        });
        (disp_mean[c], disp_std[c]) = population_stats(col);
    }
    let (force_mean, force_std) =
        population_stats(train.iter().flat_map(|s| s.force.forces.iter().copied()));
    Ok(NormStats {
        input_mean,
        input_std,
        disp_mean,
        disp_std,
        force_mean,
        force_std,
        time_mean: 0.0,
        time_std: 1.0,
        eps: NORM_EPS,
    })
}

impl NormStats {
    pub fn normalize_input(&self, c: usize, v: f64) -> f64 {
        normalize_value(v, self.input_mean[c], self.input_std[c], self.eps)
    }

    pub fn normalize_disp(&self, c: usize, v: f64) -> f64 {
        normalize_value(v, self.disp_mean[c], self.disp_std[c], self.eps)
    }

    pub fn denormalize_disp(&self, c: usize, v: f64) -> f64 {
        denormalize_value(v, self.disp_mean[c], self.disp_std[c], self.eps)
    }

    pub fn normalize_force(&self, v: f64) -> f64 {
        normalize_value(v, self.force_mean, self.force_std, self.eps)
    }

    pub fn denormalize_force(&self, v: f64) -> f64 {
        denormalize_value(v, self.force_mean, self.force_std, self.eps)
    }

    /// Identity with the default statistics (mean 0, std 1, no epsilon).
    pub fn normalize_time(&self, t: f64) -> f64 {
        (t - self.time_mean) / self.time_std
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_population_stats() {
        let (m, s) = population_stats([0.0, 2.0].into_iter());
        assert_eq!((m, s), (1.0, 1.0));
        assert!((normalize_value(0.0, m, s, NORM_EPS) + 1.0).abs() < 1e-8);
        assert!((normalize_value(2.0, m, s, NORM_EPS) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_dimension_maps_to_zero() {
        let (m, s) = population_stats([4.5; 10].into_iter());
        assert_eq!(s, 0.0);
        assert_eq!(normalize_value(4.5, m, s, NORM_EPS), 0.0);
        // Finite even for values away from the mean, thanks to the epsilon.
        assert!(normalize_value(4.6, m, s, NORM_EPS).is_finite());
    }

    #[test]
    fn roundtrip() {
        for &(v, m, s) in &[(3.7, 1.2, 0.4), (-120.0, 5.0, 33.0), (1e-3, 0.0, 1e-4)] {
            let back = denormalize_value(normalize_value(v, m, s, NORM_EPS), m, s, NORM_EPS);
            assert!(((back - v) / v).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_split_rejected() {
        assert!(normalize_fit(&[]).is_err());
    }
}
