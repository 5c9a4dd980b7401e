//! Full-model comparison of analytic gradients against central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::BottleParams;
use crate::model::HybridModel;
use crate::numerics::{finite_diff_grad, grad_rel_error};
use crate::pipeline::norm::normalize_fit;
use crate::pipeline::sample::{synthesize, Resolution, SynthesisConfig};
use crate::pipeline::train::{prepare, sample_loss, sample_loss_and_grad};
use crate::transolver::ModelConfig;

/// Relative-error denominator floor. Central differences at h = 1e-5 on an O(1) loss carry
/// about 1e-10 of rounding noise, which this keeps below 1e-6 for tiny gradients.
pub const GRADCHECK_FLOOR: f64 = 1e-4;
pub const GRADCHECK_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSetup {
    pub resolution: Resolution,
    pub n_times: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckSetup {
    /// 32 points (4×8 lattice) and 8 time steps.
    fn default() -> Self {
        Self {
            resolution: Resolution { n_z: 4, n_theta: 8 },
            n_times: 8,
            step: 1e-5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    /// Layer name, e.g. `blocks.0.slice_head`.
    pub group: String,
    pub params: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
    pub threshold: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.threshold
    }
}

fn group_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(g, _)| g)
}

/// Hook that edits an analytic gradient in place.
pub type Tamper<'a> = &'a dyn Fn(&mut [f64]);

/// Checks the gradient of the total loss on one synthetic sample in 64-bit precision.
/// `tamper` is applied to the analytic gradient before comparison, so callers can confirm
/// that the harness detects a broken backward pass.
pub fn gradcheck(
    config: &ModelConfig,
    setup: &GradcheckSetup,
    tamper: Option<Tamper>,
) -> Result<GradcheckReport> {
    let model = HybridModel::new(config)?;
    let params = model.init_params::<f64>(setup.seed);
    let synth = SynthesisConfig {
        resolution: setup.resolution,
        n_times: setup.n_times,
        ..SynthesisConfig::default()
    };
    let sample = synthesize("gradcheck", &BottleParams::two_param(20.0, 15.0), &synth, 0)?;
    let stats = normalize_fit(&[&sample])?;
    let prepared = prepare::<f64>(&sample, &stats)?;

    let (_, mut analytic) = sample_loss_and_grad(&model, &params.values, &prepared)?;
    if let Some(f) = tamper {
        f(&mut analytic);
    }
    let numeric = finite_diff_grad(
        |p| Ok(sample_loss(&model, p, &prepared)?.total()),
        &params.values,
        setup.step,
    )?;

    let mut groups: Vec<GroupError> = Vec::new();
    for spec in params.layout.specs() {
        let range = spec.offset..spec.offset + spec.len();
        let err = range
            .map(|i| grad_rel_error(analytic[i], numeric[i], GRADCHECK_FLOOR))
            .fold(0.0, f64::max);
        let name = group_of(&spec.name);
        match groups.last_mut() {
            Some(g) if g.group == name => {
                g.params += spec.len();
                g.max_rel_error = g.max_rel_error.max(err);
            }
            _ => groups.push(GroupError {
                group: name.to_string(),
                params: spec.len(),
                max_rel_error: err,
            }),
        }
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        groups,
        max_rel_error,
        threshold: GRADCHECK_THRESHOLD,
    })
}
