//! Branch/trunk operator network predicting the reaction-force history.

use crate::error::{Error, Result};
use crate::numerics::layers::{LayerNorm, Linear};
use crate::numerics::ops::{gelu_backward_in_place, gelu_in_place, LayerNormCache};
use crate::numerics::{ParamLayout, Real, Tensor};
use crate::transolver::{LatentEmbedding, ModelConfig};

/// Query times in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T = f64> {
    pub t: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t: Vec<T>) -> Result<Self> {
        if let Some(bad) = t.iter().find(|v| !(v.f64() >= 0.0 && v.f64() <= 1.0)) {
            return Err(Error::invalid(format!("time {bad} outside [0, 1]")));
        }
        Ok(Self { t })
    }

    pub fn uniform(n_t: usize) -> Self {
        let t = (0..n_t)
            .map(|i| T::c(i as f64 / (n_t.max(2) - 1) as f64))
            .collect();
        Self { t }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Componentwise maximum over points; returns the pooled row and the winning point per column.
/// Ties go to the first point.
pub fn max_pool<T: Real>(y: &[T], n: usize, width: usize) -> (Vec<T>, Vec<usize>) {
    let mut pooled = y[..width].to_vec();
    let mut arg = vec![0usize; width];
    for j in 1..n {
        for (c, &v) in y[j * width..(j + 1) * width].iter().enumerate() {
            if v > pooled[c] {
                pooled[c] = v;
                arg[c] = j;
            }
        }
    }
    (pooled, arg)
}

/// Max-pool → layer norm → MLP with GELU on every hidden layer.
#[derive(Debug, Clone)]
pub struct Branch {
    pub norm: LayerNorm,
    pub layers: Vec<Linear>,
    width_in: usize,
}

#[derive(Debug, Clone)]
pub struct BranchCache<T> {
    n: usize,
    argmax: Vec<usize>,
    ln: LayerNormCache<T>,
    /// Inputs to each linear layer.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<T>>,
}

impl Branch {
    pub fn new(layout: &mut ParamLayout, cfg: &ModelConfig) -> Self {
        let norm = LayerNorm::new(layout, "branch.norm", cfg.width);
        let mut layers = Vec::new();
        let mut fan_in = cfg.width;
        for i in 0..cfg.branch_hidden_layers {
            layers.push(Linear::new(
                layout,
                &format!("branch.fc{i}"),
                fan_in,
                cfg.branch_width,
            ));
            fan_in = cfg.branch_width;
        }
        layers.push(Linear::new(layout, "branch.out", fan_in, cfg.basis));
        Self {
            norm,
            layers,
            width_in: cfg.width,
        }
    }

    /// Pooled latent before normalization.
    pub fn pooled<T: Real>(&self, y_star: &LatentEmbedding<T>) -> Result<Vec<T>> {
        self.check(y_star)?;
        Ok(max_pool(y_star.y_star.data(), y_star.y_star.rows(), self.width_in).0)
    }

    fn check<T: Real>(&self, y_star: &LatentEmbedding<T>) -> Result<()> {
        let y = &y_star.y_star;
        if y.rows() == 0 || y.is_empty() {
            return Err(Error::invalid("branch input: empty point cloud"));
        }
        if y.shape().len() != 2 || y.cols() != self.width_in {
            return Err(Error::shape(
                "branch input",
                &[y.rows(), self.width_in],
                y.shape(),
            ));
        }
        Ok(())
    }

    pub fn forward<T: Real>(
        &self,
        p: &[T],
        y_star: &LatentEmbedding<T>,
    ) -> Result<(Vec<T>, BranchCache<T>)> {
        self.check(y_star)?;
        let n = y_star.y_star.rows();
        let (pooled, argmax) = max_pool(y_star.y_star.data(), n, self.width_in);
        let (mut h, ln) = self.norm.forward(p, &pooled);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(p, &h, 1);
            inputs.push(std::mem::take(&mut h));
            if i < last {
                let mut a = z.clone();
                gelu_in_place(&mut a);
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Ok((
            h,
            BranchCache {
                n,
                argmax,
                ln,
                inputs,
                pre,
            },
        ))
    }

    /// Returns the gradient with respect to `y*` (`N×D`, sparse on the pooled points).
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        cache: &BranchCache<T>,
        dout: &[T],
        grads: &mut [T],
    ) -> Vec<T> {
        let mut g = dout.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer
                .backward(p, &cache.inputs[i], &g, 1, grads, true)
                .expect("branch input gradient");
            if i > 0 {
                gelu_backward_in_place(&cache.pre[i - 1], &mut g);
            }
        }
        let dpooled = self.norm.backward(p, &cache.ln, &g, grads);
        let mut dy = vec![T::zero(); cache.n * self.width_in];
        for (c, (&j, &v)) in cache.argmax.iter().zip(&dpooled).enumerate() {
            dy[j * self.width_in + c] = v;
        }
        dy
    }
}

/// Time basis: lift `1 → W` with GELU, residual GELU layers, then `W → p`.
#[derive(Debug, Clone)]
pub struct Trunk {
    pub lift: Linear,
    pub residual: Vec<Linear>,
    pub out: Linear,
}

#[derive(Debug, Clone)]
pub struct TrunkCache<T> {
    n_t: usize,
    times: Vec<T>,
    lift_pre: Vec<T>,
    /// Input to each residual layer, then to the output layer.
    hidden: Vec<Vec<T>>,
    residual_pre: Vec<Vec<T>>,
}

impl Trunk {
    pub fn new(layout: &mut ParamLayout, cfg: &ModelConfig) -> Self {
        let w = cfg.trunk_width;
        Self {
            lift: Linear::new(layout, "trunk.lift", 1, w),
            residual: (1..cfg.trunk_hidden_layers)
                .map(|i| Linear::new(layout, &format!("trunk.res{i}"), w, w))
                .collect(),
            out: Linear::new(layout, "trunk.out", w, cfg.basis),
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], t: &TimeGrid<T>) -> (Tensor<T>, TrunkCache<T>) {
        let n_t = t.len();
        let lift_pre = self.lift.forward(p, &t.t, n_t);
        let mut h = lift_pre.clone();
        gelu_in_place(&mut h);
        let mut hidden = Vec::with_capacity(self.residual.len() + 1);
        let mut residual_pre = Vec::with_capacity(self.residual.len());
        for layer in &self.residual {
            let z = layer.forward(p, &h, n_t);
            let mut a = z.clone();
            gelu_in_place(&mut a);
            let next: Vec<T> = h.iter().zip(&a).map(|(&x, &y)| x + y).collect();
            hidden.push(h);
            residual_pre.push(z);
            h = next;
        }
        let basis = self.out.forward(p, &h, n_t);
        hidden.push(h);
        (
            Tensor::new(vec![n_t, self.out.fan_out], basis).expect("N_t×p"),
            TrunkCache {
                n_t,
                times: t.t.clone(),
                lift_pre,
                hidden,
                residual_pre,
            },
        )
    }

    pub fn backward<T: Real>(&self, p: &[T], cache: &TrunkCache<T>, dbasis: &[T], grads: &mut [T]) {
        let n_t = cache.n_t;
        let last = cache.hidden.len() - 1;
        let mut g = self
            .out
            .backward(p, &cache.hidden[last], dbasis, n_t, grads, true)
            .expect("trunk hidden gradient");
        for (i, layer) in self.residual.iter().enumerate().rev() {
            let mut ga = g.clone();
            gelu_backward_in_place(&cache.residual_pre[i], &mut ga);
            let gx = layer
                .backward(p, &cache.hidden[i], &ga, n_t, grads, true)
                .expect("trunk residual gradient");
            for (a, b) in g.iter_mut().zip(gx) {
                *a = *a + b;
            }
        }
        gelu_backward_in_place(&cache.lift_pre, &mut g);
        self.lift.backward(p, &cache.times, &g, n_t, grads, false);
    }
}

/// `F̂(t_i) = Σ_k b_k · tr[i, k] + bias`.
pub fn force_predict<T: Real>(branch: &[T], basis: &Tensor<T>, bias: T) -> Result<Vec<T>> {
    if basis.shape().len() != 2 || basis.cols() != branch.len() {
        return Err(Error::shape(
            "force_predict",
            &[basis.rows(), branch.len()],
            basis.shape(),
        ));
    }
    Ok((0..basis.rows())
        .map(|i| {
            basis
                .row(i)
                .iter()
                .zip(branch)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                + bias
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_is_componentwise_max() {
        let y = [1.0f64, 5.0, 3.0, 2.0];
        let (pooled, arg) = max_pool(&y, 2, 2);
        assert_eq!(pooled, vec![3.0, 5.0]);
        assert_eq!(arg, vec![1, 0]);
        let (single, _) = max_pool(&[0.4f64, -2.0], 1, 2);
        assert_eq!(single, vec![0.4, -2.0]);
    }

    #[test]
    fn force_examples() {
        let basis = Tensor::from_f64_rows(&[&[2.0, 5.0, 1.0], &[-1.0, 4.0, 0.0]]).unwrap();
        let f = force_predict(&[1.0, 0.0, 0.0], &basis, 0.0).unwrap();
        assert_eq!(f, vec![2.0, -1.0]);
        assert_eq!(
            force_predict(&[0.0; 3], &basis, 0.0).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            force_predict(&[0.0; 3], &basis, 3.0).unwrap(),
            vec![3.0, 3.0]
        );
        assert!(force_predict(&[0.0; 2], &basis, 0.0).is_err());
    }

    #[test]
    fn time_grid_range() {
        assert!(TimeGrid::new(vec![0.0f64, 0.5, 1.0]).is_ok());
        assert!(TimeGrid::new(vec![0.0f64, 1.5]).is_err());
        assert!(TimeGrid::new(vec![-0.1f64]).is_err());
        assert!(TimeGrid::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn trunk_is_pointwise_in_time() {
        let cfg = ModelConfig::toy();
        let mut layout = ParamLayout::new();
        let trunk = Trunk::new(&mut layout, &cfg);
        let p: Vec<f64> = layout.initialize(1);
        let (both, _) = trunk.forward(&p, &TimeGrid::new(vec![0.1, 0.5]).unwrap());
        let (a, _) = trunk.forward(&p, &TimeGrid::new(vec![0.1]).unwrap());
        let (b, _) = trunk.forward(&p, &TimeGrid::new(vec![0.5]).unwrap());
        assert_eq!(both.row(0), a.row(0));
        assert_eq!(both.row(1), b.row(0));
    }

    #[test]
    fn zero_output_layer_gives_zero_basis() {
        let cfg = ModelConfig::toy();
        let mut layout = ParamLayout::new();
        let trunk = Trunk::new(&mut layout, &cfg);
        let mut p: Vec<f64> = layout.initialize(1);
        trunk.out.weight.get_mut(&mut p).fill(0.0);
        trunk.out.bias.get_mut(&mut p).fill(0.0);
        let (basis, _) = trunk.forward(&p, &TimeGrid::uniform(5));
        assert!(basis.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn branch_rejects_empty_cloud() {
        let cfg = ModelConfig::toy();
        let mut layout = ParamLayout::new();
        let branch = Branch::new(&mut layout, &cfg);
        let p: Vec<f64> = layout.initialize(1);
        let empty = LatentEmbedding {
            y_star: Tensor::<f64>::zeros(&[0, cfg.width]),
        };
        assert!(branch.forward(&p, &empty).is_err());
    }
}
