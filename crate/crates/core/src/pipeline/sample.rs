use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{generate_bottle, BottleParams, PointCloud};
use crate::numerics::Tensor;
use crate::oracle::{displacement_field, perturb, reaction_curve, DisplacementField, ForceCurve};

/// Surface lattice resolution `n_z × n_theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub n_z: usize,
    pub n_theta: usize,
}

impl Resolution {
    pub const DESK: Resolution = Resolution {
        n_z: 64,
        n_theta: 16,
    };

    pub fn points(&self) -> usize {
        self.n_z * self.n_theta
    }
}

impl std::str::FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid(format!("resolution {s:?} is not NZxNT")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("resolution {s:?} is not NZxNT")))
        };
        Ok(Resolution {
            n_z: parse(a)?,
            n_theta: parse(b)?,
        })
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n_z, self.n_theta)
    }
}

/// One geometry with its response. All arrays hold values exactly representable in `f32`,
/// the on-disk precision, so a write/read cycle is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudSample {
    pub id: String,
    /// Design metadata; never an input to the network.
    pub params: BottleParams,
    pub cloud: PointCloud,
    pub displacement: DisplacementField,
    pub force: ForceCurve,
}

/// Rounds to the nearest `f32`, the on-disk precision.
pub fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn quantize_tensor(t: &Tensor<f64>) -> Tensor<f64> {
    t.map(quantize)
}

/// The cloud as it reads back from a dataset.
pub fn quantize_cloud(cloud: &PointCloud) -> Result<PointCloud> {
    PointCloud::new(
        quantize_tensor(&cloud.points),
        quantize_tensor(&cloud.normals),
    )
}

impl PointCloudSample {
    /// Builds a sample, rounding every array to `f32` precision.
    pub fn new(
        id: impl Into<String>,
        params: BottleParams,
        cloud: PointCloud,
        displacement: DisplacementField,
        force: ForceCurve,
    ) -> Result<Self> {
        let s = Self {
            id: id.into(),
            params,
            cloud: PointCloud::new(
                quantize_tensor(&cloud.points),
                quantize_tensor(&cloud.normals),
            )?,
            displacement: DisplacementField {
                u: quantize_tensor(&displacement.u),
            },
            force: ForceCurve {
                times: force.times.iter().map(|&v| quantize(v)).collect(),
                forces: force.forces.iter().map(|&v| quantize(v)).collect(),
                t_end: quantize(force.t_end),
            },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n_points(&self) -> usize {
        self.cloud.len()
    }

    pub fn n_times(&self) -> usize {
        self.force.times.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cloud.len();
        if self.displacement.u.shape() != [n, 3] {
            return Err(Error::Integrity(format!(
                "sample {}: displacement shape {:?} does not match {n} points",
                self.id,
                self.displacement.u.shape()
            )));
        }
        self.force
            .validate()
            .map_err(|e| Error::Integrity(format!("sample {}: {e}", self.id)))
    }
}

/// Generation settings shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub resolution: Resolution,
    pub n_times: usize,
    /// Standard deviation of optional Gaussian response noise.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            resolution: Resolution::DESK,
            n_times: crate::oracle::DEFAULT_TIME_STEPS,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:04}")
}

/// Geometry + synthetic response for one design.
pub fn synthesize(
    id: impl Into<String>,
    params: &BottleParams,
    cfg: &SynthesisConfig,
    index: usize,
) -> Result<PointCloudSample> {
    let cloud = generate_bottle(params, cfg.resolution.n_z, cfg.resolution.n_theta)?;
    let mut disp = displacement_field(&cloud, params)?;
    let mut force = reaction_curve(params, cfg.n_times)?;
    if cfg.noise_sigma > 0.0 {
        perturb(
            &mut disp,
            &mut force,
            &cloud,
            cfg.noise_sigma,
            cfg.noise_seed.wrapping_add(index as u64),
        )?;
    }
    PointCloudSample::new(id, *params, cloud, disp, force)
}

/// One sample per design, ids `s0000`, `s0001`, ...
pub fn synthesize_all(
    designs: &[BottleParams],
    cfg: &SynthesisConfig,
) -> Result<Vec<PointCloudSample>> {
    designs
        .iter()
        .enumerate()
        .map(|(i, p)| synthesize(sample_id(i), p, cfg, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_parsing() {
        let r: Resolution = "64x16".parse().unwrap();
        assert_eq!(r, Resolution::DESK);
        assert_eq!(r.to_string(), "64x16");
        assert!("64-16".parse::<Resolution>().is_err());
        assert!("ax16".parse::<Resolution>().is_err());
    }

    #[test]
    fn synthesized_sample_is_consistent() {
        let p = BottleParams::two_param(25.0, 15.0);
        let cfg = SynthesisConfig {
            resolution: Resolution {
                n_z: 16,
                n_theta: 8,
            },
            n_times: 11,
            ..Default::default()
        };
        let s = synthesize("a", &p, &cfg, 0).unwrap();
        assert_eq!(s.n_points(), 128);
        assert_eq!(s.n_times(), 11);
        for v in s.cloud.points.data() {
            assert_eq!(*v, quantize(*v));
        }
    }
}
