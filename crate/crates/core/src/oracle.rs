//! Deterministic synthetic top-load response used in place of finite-element results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{profile, BottleParams, Family, PointCloud};
use crate::numerics::Tensor;

/// Prescribed downward displacement of the top ring (mm).
pub const TOP_DISPLACEMENT: f64 = 10.0;
/// Height of the radial bulge center (mm).
pub const BULGE_CENTER: f64 = 75.0;
pub const BULGE_WIDTH: f64 = 20.0;
pub const DEFAULT_TIME_STEPS: usize = 101;
/// Peak time used for the non-buckling family; lies beyond the simulated window.
pub const TWO_PARAM_PEAK_TIME: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    /// `N×3` (u_x, u_y, u_z) in mm.
    pub u: Tensor<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceCurve {
    pub times: Vec<f64>,
    pub forces: Vec<f64>,
    pub t_end: f64,
}

impl ForceCurve {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.forces.len() || self.times.is_empty() {
            return Err(Error::Integrity(format!(
                "force curve has {} times and {} forces",
                self.times.len(),
                self.forces.len()
            )));
        }
        if self.times[0] != 0.0 || self.forces[0] != 0.0 {
            return Err(Error::Integrity("force curve must start at (0, 0)".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Integrity(
                "force curve times not strictly increasing".into(),
            ));
        }
        if self.times.iter().any(|&t| t > self.t_end) || self.t_end > 1.0 {
            return Err(Error::Integrity("force curve time beyond t_end".into()));
        }
        Ok(())
    }

    /// Time of the largest force, first occurrence on ties.
    pub fn argmax_time(&self) -> f64 {
        argmax_time(&self.times, &self.forces)
    }
}

pub fn argmax_time(times: &[f64], forces: &[f64]) -> f64 {
    let mut best = 0;
    for (i, &f) in forces.iter().enumerate() {
        if f > forces[best] {
            best = i;
        }
    }
    times[best]
}

/// Amplitude (mm) of the radial bulge.
pub fn bulge_amplitude(p: &BottleParams) -> f64 {
    0.4 * p.r_rib * (p.d_rib / 25.0) * (35.0 / p.r_top)
}

/// Peak force (N) of the reaction curve.
pub fn peak_force(p: &BottleParams) -> f64 {
    50.0 * (p.r_top / 20.0) * (25.0 / p.d_rib)
}

/// Time of the force peak; beyond the window for the two-parameter family.
pub fn peak_time(p: &BottleParams) -> f64 {
    match p.family {
        Family::TwoParam => TWO_PARAM_PEAK_TIME,
        Family::FourParam => 0.4 + 0.5 * (p.r_rib - 2.0) / 2.5,
    }
}

/// Synthetic end-of-load displacement at every node of `cloud`.
pub fn displacement_field(cloud: &PointCloud, p: &BottleParams) -> Result<DisplacementField> {
    let n = cloud.len();
    let amp = bulge_amplitude(p);
    let mut u = Vec::with_capacity(n * 3);
    for i in 0..n {
        let pt = cloud.points.row(i);
        let (x, y, z) = (pt[0], pt[1], pt[2]);
        if !(0.0..=profile::HEIGHT).contains(&z) {
            return Err(Error::invalid(format!(
                "node {i} at z = {z} outside the bottle height"
            )));
        }
        if z == 0.0 {
            u.extend_from_slice(&[0.0, 0.0, 0.0]);
            continue;
        }
        let zeta = z / profile::HEIGHT;
        let uz = if z == profile::HEIGHT {
            -TOP_DISPLACEMENT
        } else {
            -TOP_DISPLACEMENT * zeta * zeta * (3.0 - 2.0 * zeta)
        };
        let s = (z - BULGE_CENTER) / BULGE_WIDTH;
        let ur = amp * (-s * s).exp();
        let rho = x.hypot(y);
        let (c, sn) = if rho > 0.0 {
            (x / rho, y / rho)
        } else {
            (0.0, 0.0)
        };
        u.extend_from_slice(&[ur * c, ur * sn, uz]);
    }
    Ok(DisplacementField {
        u: Tensor::new(vec![n, 3], u)?,
    })
}

/// Reaction-force history on a uniform grid of `n_t` normalized times.
pub fn reaction_curve(p: &BottleParams, n_t: usize) -> Result<ForceCurve> {
    if n_t < 2 {
        return Err(Error::invalid(
            "reaction curve needs at least two time steps",
        ));
    }
    let times: Vec<f64> = (0..n_t).map(|i| i as f64 / (n_t - 1) as f64).collect();
    let forces = reaction_force_at(p, &times);
    Ok(ForceCurve {
        times,
        forces,
        t_end: 1.0,
    })
}

/// Reaction force at arbitrary times.
pub fn reaction_force_at(p: &BottleParams, times: &[f64]) -> Vec<f64> {
    let f_peak = peak_force(p);
    let t_star = peak_time(p);
    times
        .iter()
        .map(|&t| {
            let x = t / t_star;
            f_peak * x * (1.0 - x).exp()
        })
        .collect()
}

/// Seeded Gaussian perturbation of a response; boundary values stay exact.
pub fn perturb(
    field: &mut DisplacementField,
    curve: &mut ForceCurve,
    cloud: &PointCloud,
    sigma: f64,
    seed: u64,
) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..cloud.len() {
        let z = cloud.points.at(i, 2);
        let row = field.u.row_mut(i);
        let noise = [
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ];
        if z == 0.0 {
            continue;
        }
        row[0] += noise[0];
        row[1] += noise[1];
        if z != profile::HEIGHT {
            row[2] += noise[2];
        }
    }
    for f in curve.forces.iter_mut().skip(1) {
        *f += normal.sample(&mut rng);
    }
    Ok(())
}
