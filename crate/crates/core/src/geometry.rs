//! Parametric bottle surfaces and design-space sampling.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Fixed profile constants of the synthetic bottle family (mm).
pub mod profile {
    pub const HEIGHT: f64 = 160.0;
    pub const BASE_RADIUS: f64 = 30.0;
    pub const BASE_TOP: f64 = 40.0;
    pub const SHOULDER_START: f64 = 110.0;
    pub const SHOULDER_END: f64 = 150.0;
    pub const RIB_BAND_START: f64 = 45.0;
    /// Span divided by rib spacing gives the number of pitches in the band.
    pub const RIB_BAND_SPAN: f64 = 60.0;
    pub const FIRST_RIB: f64 = 50.0;
    pub const LAST_RIB_LIMIT: f64 = 105.0;
    pub const RIB_WIDTH: f64 = 3.0;
    pub const MIN_RADIUS: f64 = 5.0;

    pub const TWO_PARAM_R_RIB: f64 = 3.0;
    pub const TWO_PARAM_P_RIB: f64 = 12.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    TwoParam,
    FourParam,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::TwoParam => "two_param",
            Family::FourParam => "four_param",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_param" => Ok(Family::TwoParam),
            "four_param" => Ok(Family::FourParam),
            other => Err(Error::invalid(format!("unknown family {other:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Design parameters of one bottle, all in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottleParams {
    pub r_rib: f64,
    pub r_top: f64,
    pub p_rib: f64,
    pub d_rib: f64,
    pub family: Family,
}

impl BottleParams {
    pub fn two_param(r_top: f64, d_rib: f64) -> Self {
        Self {
            r_rib: profile::TWO_PARAM_R_RIB,
            r_top,
            p_rib: profile::TWO_PARAM_P_RIB,
            d_rib,
            family: Family::TwoParam,
        }
    }

    pub fn four_param(r_rib: f64, r_top: f64, p_rib: f64, d_rib: f64) -> Self {
        Self {
            r_rib,
            r_top,
            p_rib,
            d_rib,
            family: Family::FourParam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        DesignSpace::for_family(self.family).check(self)
    }

    /// Centers of the Gaussian rib grooves.
    pub fn rib_centers(&self) -> Vec<f64> {
        let mut centers = Vec::new();
        if self.d_rib <= 0.0 {
            return centers;
        }
        let mut k = 0;
        loop {
            let z = profile::FIRST_RIB + k as f64 * self.d_rib;
            if z >= profile::LAST_RIB_LIMIT {
                break;
            }
            centers.push(z);
            k += 1;
        }
        centers
    }

    pub fn rib_band_end(&self) -> f64 {
        profile::RIB_BAND_START + self.p_rib * (profile::RIB_BAND_SPAN / self.d_rib).floor()
    }
}

/// Axis-aligned box of admissible parameters for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub family: Family,
    pub r_rib: (f64, f64),
    pub r_top: (f64, f64),
    pub p_rib: (f64, f64),
    pub d_rib: (f64, f64),
}

impl DesignSpace {
    pub fn two_param() -> Self {
        Self {
            family: Family::TwoParam,
            r_rib: (profile::TWO_PARAM_R_RIB, profile::TWO_PARAM_R_RIB),
            r_top: (20.0, 35.0),
            p_rib: (profile::TWO_PARAM_P_RIB, profile::TWO_PARAM_P_RIB),
            d_rib: (10.0, 25.0),
        }
    }

    pub fn four_param() -> Self {
        Self {
            family: Family::FourParam,
            r_rib: (2.0, 4.5),
            r_top: (20.0, 35.0),
            p_rib: (5.0, 20.0),
            d_rib: (10.0, 25.0),
        }
    }

    pub fn for_family(family: Family) -> Self {
        match family {
            Family::TwoParam => Self::two_param(),
            Family::FourParam => Self::four_param(),
        }
    }

    /// Bounds of the free axes, in `BottleParams` field order.
    pub fn free_axes(&self) -> Vec<(&'static str, (f64, f64))> {
        match self.family {
            Family::TwoParam => vec![("r_top", self.r_top), ("d_rib", self.d_rib)],
            Family::FourParam => vec![
                ("r_rib", self.r_rib),
                ("r_top", self.r_top),
                ("p_rib", self.p_rib),
                ("d_rib", self.d_rib),
            ],
        }
    }

    fn params_from_axes(&self, v: &[f64]) -> BottleParams {
        match self.family {
            Family::TwoParam => BottleParams::two_param(v[0], v[1]),
            Family::FourParam => BottleParams::four_param(v[0], v[1], v[2], v[3]),
        }
    }

    pub fn axes_of(&self, p: &BottleParams) -> Vec<f64> {
        match self.family {
            Family::TwoParam => vec![p.r_top, p.d_rib],
            Family::FourParam => vec![p.r_rib, p.r_top, p.p_rib, p.d_rib],
        }
    }

    pub fn check(&self, p: &BottleParams) -> Result<()> {
        if p.family != self.family {
            return Err(Error::invalid(format!(
                "family {} does not match design space {}",
                p.family, self.family
            )));
        }
        let fields = [
            ("r_rib", p.r_rib, self.r_rib),
            ("r_top", p.r_top, self.r_top),
            ("p_rib", p.p_rib, self.p_rib),
            ("d_rib", p.d_rib, self.d_rib),
        ];
        for (name, v, (lo, hi)) in fields {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::invalid(format!(
                    "{name} = {v} outside [{lo}, {hi}] for family {}",
                    self.family
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &BottleParams) -> bool {
        self.check(p).is_ok()
    }
}

#[inline]
fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

#[inline]
fn smoothstep_slope(s: f64) -> f64 {
    6.0 * s * (1.0 - s)
}

/// Radius and its z-derivative, without range checks.
fn radius_and_slope(z: f64, p: &BottleParams) -> (f64, f64) {
    use profile::*;
    let (mut r, mut dr) = if z < SHOULDER_START {
        (BASE_RADIUS, 0.0)
    } else if z < SHOULDER_END {
        let span = SHOULDER_END - SHOULDER_START;
        let s = (z - SHOULDER_START) / span;
        (
            BASE_RADIUS + (p.r_top - BASE_RADIUS) * smoothstep(s),
            (p.r_top - BASE_RADIUS) * smoothstep_slope(s) / span,
        )
    } else {
        (p.r_top, 0.0)
    };
    if z >= RIB_BAND_START && z <= p.rib_band_end() {
        for zk in p.rib_centers() {
            let u = (z - zk) / RIB_WIDTH;
            let g = p.r_rib * (-u * u).exp();
            r -= g;
            dr += g * 2.0 * u / RIB_WIDTH;
        }
    }
    if r < MIN_RADIUS {
        (MIN_RADIUS, 0.0)
    } else {
        (r, dr)
    }
}

fn check_height(z: f64) -> Result<()> {
    if !(0.0..=profile::HEIGHT).contains(&z) {
        return Err(Error::invalid(format!(
            "z = {z} outside [0, {}]",
            profile::HEIGHT
        )));
    }
    Ok(())
}

/// Profile radius r(z) of the bottle surface of revolution.
pub fn profile_radius(z: f64, p: &BottleParams) -> Result<f64> {
    check_height(z)?;
    Ok(radius_and_slope(z, p).0)
}

/// Analytic dr/dz.
pub fn profile_slope(z: f64, p: &BottleParams) -> Result<f64> {
    check_height(z)?;
    Ok(radius_and_slope(z, p).1)
}

/// Surface points and outward unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Tensor<f64>,
    pub normals: Tensor<f64>,
}

impl PointCloud {
    pub fn new(points: Tensor<f64>, normals: Tensor<f64>) -> Result<Self> {
        if points.shape().len() != 2 || points.cols() != 3 {
            return Err(Error::shape(
                "PointCloud points",
                &[points.rows(), 3],
                points.shape(),
            ));
        }
        if normals.shape() != points.shape() {
            return Err(Error::shape(
                "PointCloud normals",
                points.shape(),
                normals.shape(),
            ));
        }
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `N×6` feature matrix: coordinates then normals.
    pub fn features(&self) -> Tensor<f64> {
        let n = self.len();
        let mut data = Vec::with_capacity(n * 6);
        for i in 0..n {
            data.extend_from_slice(self.points.row(i));
            data.extend_from_slice(self.normals.row(i));
        }
        Tensor::new(vec![n, 6], data).expect("n×6")
    }

    /// Reorders points (and normals) so that row `i` of the result is row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let gather = |t: &Tensor<f64>| {
            let mut data = Vec::with_capacity(t.len());
            for &j in perm {
                data.extend_from_slice(t.row(j));
            }
            Tensor::new(vec![perm.len(), 3], data).expect("n×3")
        };
        Self {
            points: gather(&self.points),
            normals: gather(&self.normals),
        }
    }
}

/// Lattice sample of the surface without design-space validation (extrapolation).
pub fn sample_surface(p: &BottleParams, n_z: usize, n_theta: usize) -> Result<PointCloud> {
    if n_z < 4 || n_theta < 8 {
        return Err(Error::invalid(format!(
            "resolution {n_z}x{n_theta} below minimum 4x8"
        )));
    }
    let n = n_z * n_theta;
    let mut points = Vec::with_capacity(n * 3);
    let mut normals = Vec::with_capacity(n * 3);
    for i in 0..n_z {
        let z = profile::HEIGHT * i as f64 / (n_z - 1) as f64;
        let (r, dr) = radius_and_slope(z, p);
        let inv = 1.0 / (1.0 + dr * dr).sqrt();
        for k in 0..n_theta {
            let theta = 2.0 * PI * k as f64 / n_theta as f64;
            let (s, c) = theta.sin_cos();
            points.extend_from_slice(&[r * c, r * s, z]);
            normals.extend_from_slice(&[c * inv, s * inv, -dr * inv]);
        }
    }
    PointCloud::new(
        Tensor::new(vec![n, 3], points)?,
        Tensor::new(vec![n, 3], normals)?,
    )
}

/// `n_z × n_theta` lattice on the bottle surface with analytic normals.
pub fn generate_bottle(p: &BottleParams, n_z: usize, n_theta: usize) -> Result<PointCloud> {
    p.validate()?;
    sample_surface(p, n_z, n_theta)
}

/// `k×k` grid over the two free axes of the two-parameter family, bounds included.
pub fn full_factorial(space: &DesignSpace, k_per_axis: usize) -> Result<Vec<BottleParams>> {
    if space.family != Family::TwoParam {
        return Err(Error::invalid(
            "full factorial sampling needs the two-parameter design space",
        ));
    }
    if k_per_axis < 2 {
        return Err(Error::invalid(
            "full factorial needs at least 2 levels per axis",
        ));
    }
    let level =
        |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (k_per_axis - 1) as f64;
    let mut out = Vec::with_capacity(k_per_axis * k_per_axis);
    for i in 0..k_per_axis {
        for j in 0..k_per_axis {
            out.push(BottleParams::two_param(
                level(space.r_top, i),
                level(space.d_rib, j),
            ));
        }
    }
    Ok(out)
}

/// Minimum pairwise squared distance of points in the unit cube.
fn min_sq_distance(units: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let d: f64 = units[i]
                .iter()
                .zip(&units[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d);
        }
    }
    best
}

/// Random Latin hypercube in the unit cube: `dims` columns, each a stratified permutation.
fn random_lhs(n: usize, dims: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut units = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (row, &s) in units.iter_mut().zip(&strata) {
            row[d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    units
}

const LHS_CANDIDATES: usize = 8;
const LHS_SWAP_ATTEMPTS: usize = 200;

/// Maximin-improved Latin hypercube sample of `n` designs.
///
/// Several random hypercubes are drawn and the best by minimum pairwise distance is kept,
/// then random within-column swaps are accepted whenever they increase that distance.
/// Swaps exchange values between rows, so stratification is preserved.
pub fn latin_hypercube(space: &DesignSpace, n: usize, seed: u64) -> Result<Vec<BottleParams>> {
    if n == 0 {
        return Err(Error::invalid("latin hypercube needs at least one sample"));
    }
    let axes = space.free_axes();
    let dims = axes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best = random_lhs(n, dims, &mut rng);
    let mut best_score = min_sq_distance(&best);
    for _ in 1..LHS_CANDIDATES {
        let cand = random_lhs(n, dims, &mut rng);
        let score = min_sq_distance(&cand);
        if score > best_score {
            best = cand;
            best_score = score;
        }
    }
    if n >= 2 {
        for _ in 0..LHS_SWAP_ATTEMPTS {
            let d = rng.gen_range(0..dims);
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b {
                continue;
            }
            let (va, vb) = (best[a][d], best[b][d]);
            best[a][d] = vb;
            best[b][d] = va;
            let score = min_sq_distance(&best);
            if score > best_score {
                best_score = score;
            } else {
                best[a][d] = va;
                best[b][d] = vb;
            }
        }
    }

    Ok(best
        .iter()
        .map(|u| {
            let v: Vec<f64> = u
                .iter()
                .zip(&axes)
                .map(|(&x, (_, (lo, hi)))| lo + (hi - lo) * x)
                .collect();
            space.params_from_axes(&v)
        })
        .collect())
}
