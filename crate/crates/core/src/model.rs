//! The coupled network: physics-attention encoder for displacements, with its latent field
//! feeding the operator network that predicts the reaction force.

use crate::deeponet::{force_predict, Branch, BranchCache, TimeGrid, Trunk, TrunkCache};
use crate::error::{Error, Result};
use crate::numerics::params::Init;
use crate::numerics::{ParamLayout, Real, Slot, Tensor};
use crate::transolver::{LatentEmbedding, ModelConfig, Transolver, TransolverCache};

/// Flat, named parameter vector of the hybrid network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub layout: ParamLayout,
    pub values: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.layout
            .find(name)
            .map(|s| &self.values[s.offset..s.offset + s.len()])
    }

    /// `(name, values)` in declaration order.
    pub fn iter_named(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.layout
            .specs()
            .iter()
            .map(move |s| (s.name.as_str(), &self.values[s.offset..s.offset + s.len()]))
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            layout: self.layout.clone(),
            values: self.values.iter().map(|&v| U::c(v.f64())).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub transolver: Transolver,
    pub branch: Branch,
    pub trunk: Trunk,
    pub force_bias: Slot,
}

#[derive(Debug, Clone)]
pub struct HybridOutput<T> {
    pub u_hat: Tensor<T>,
    pub latent: LatentEmbedding<T>,
    pub branch: Vec<T>,
    /// `N_t×p`
    pub basis: Tensor<T>,
    pub force: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct HybridCache<T> {
    pub transolver: TransolverCache<T>,
    branch: BranchCache<T>,
    trunk: TrunkCache<T>,
    branch_out: Vec<T>,
    basis: Tensor<T>,
}

impl HybridModel {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut layout = ParamLayout::new();
        let transolver = Transolver::new(&mut layout, config);
        let branch = Branch::new(&mut layout, config);
        let trunk = Trunk::new(&mut layout, config);
        let force_bias = layout.add("force_bias", &[1], Init::Zeros);
        Ok(Self {
            config: config.clone(),
            layout,
            transolver,
            branch,
            trunk,
            force_bias,
        })
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> ModelParams<T> {
        ModelParams {
            layout: self.layout.clone(),
            values: self.layout.initialize(seed),
        }
    }

    /// Checks that `params` was laid out for this architecture.
    pub fn check_params<T: Real>(&self, params: &ModelParams<T>) -> Result<()> {
        if params.layout.specs().len() != self.layout.specs().len() {
            return Err(Error::Integrity(format!(
                "parameter set has {} blocks, model expects {}",
                params.layout.specs().len(),
                self.layout.specs().len()
            )));
        }
        for (a, b) in params.layout.specs().iter().zip(self.layout.specs()) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Integrity(format!(
                    "parameter {} has shape {:?}, model expects {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        if params.values.len() != self.layout.total_len() {
            return Err(Error::shape(
                "model parameters",
                &[self.layout.total_len()],
                &[params.values.len()],
            ));
        }
        Ok(())
    }

    pub fn forward<T: Real>(
        &self,
        params: &[T],
        features: &Tensor<T>,
        times: &TimeGrid<T>,
    ) -> Result<(HybridOutput<T>, HybridCache<T>)> {
        if params.len() != self.layout.total_len() {
            return Err(Error::shape(
                "model parameters",
                &[self.layout.total_len()],
                &[params.len()],
            ));
        }
        let (tout, tcache) = self.transolver.forward(params, features)?;
        let (branch_out, bcache) = self.branch.forward(params, &tout.latent)?;
        let (basis, trunk_cache) = self.trunk.forward(params, times);
        let force = force_predict(&branch_out, &basis, self.force_bias.get(params)[0])?;
        Ok((
            HybridOutput {
                u_hat: tout.u_hat,
                latent: tout.latent,
                branch: branch_out.clone(),
                basis: basis.clone(),
                force,
            },
            HybridCache {
                transolver: tcache,
                branch: bcache,
                trunk: trunk_cache,
                branch_out,
                basis,
            },
        ))
    }

    /// Gradient of a loss with respect to every parameter, given `∂L/∂û` (`N×C'`) and
    /// `∂L/∂F̂` (`N_t`).
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        cache: &HybridCache<T>,
        du: &[T],
        dforce: &[T],
    ) -> Vec<T> {
        let mut grads = vec![T::zero(); self.layout.total_len()];
        let p = self.config.basis;
        let n_t = dforce.len();

        grads[self.force_bias.offset] = dforce.iter().fold(T::zero(), |a, &b| a + b);
        let mut dbranch = vec![T::zero(); p];
        let mut dbasis = vec![T::zero(); n_t * p];
        for (i, &g) in dforce.iter().enumerate() {
            let row = cache.basis.row(i);
            for k in 0..p {
                dbranch[k] = dbranch[k] + g * row[k];
                dbasis[i * p + k] = g * cache.branch_out[k];
            }
        }
        self.trunk
            .backward(params, &cache.trunk, &dbasis, &mut grads);
        let dy_star = self
            .branch
            .backward(params, &cache.branch, &dbranch, &mut grads);
        self.transolver
            .backward(params, &cache.transolver, du, Some(&dy_star), &mut grads);
        grads
    }
}
