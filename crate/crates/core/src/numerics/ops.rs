//! Layer primitives with hand-derived backward passes.
//!
//! The slice-level kernels (`*_rows`, `linear_*`) work on row-major buffers and are what
//! the model layers call. The `Tensor` wrappers at the bottom validate shapes.

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Epsilon inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `y[n×out] = x[n×in] · wᵀ + b`, with `w` stored `out×in`.
pub fn linear_into<T: Real>(w: &[T], b: &[T], x: &[T], n: usize, fan_in: usize, y: &mut [T]) {
    let fan_out = b.len();
    debug_assert_eq!(w.len(), fan_out * fan_in);
    debug_assert_eq!(x.len(), n * fan_in);
    debug_assert_eq!(y.len(), n * fan_out);
    for row in y.chunks_exact_mut(fan_out) {
        row.copy_from_slice(b);
    }
    T::gemm(
        n,
        fan_in,
        fan_out,
        T::one(),
        x,
        fan_in,
        1,
        w,
        1,
        fan_in,
        T::one(),
        y,
        fan_out,
        1,
    );
}

/// Backward of [`linear_into`]. Accumulates into `dw`/`db`; writes `dx` when requested.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    w: &[T],
    x: &[T],
    dy: &[T],
    n: usize,
    fan_in: usize,
    fan_out: usize,
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    // dw += dyᵀ · x
    T::gemm(
        fan_out,
        n,
        fan_in,
        T::one(),
        dy,
        1,
        fan_out,
        x,
        fan_in,
        1,
        T::one(),
        dw,
        fan_in,
        1,
    );
    for row in dy.chunks_exact(fan_out) {
        for (g, &d) in db.iter_mut().zip(row) {
            *g = *g + d;
        }
    }
    if let Some(dx) = dx {
        T::gemm(
            n,
            fan_out,
            fan_in,
            T::one(),
            dy,
            fan_out,
            1,
            w,
            fan_in,
            1,
            T::zero(),
            dx,
            fan_in,
            1,
        );
    }
}

#[inline]
pub fn gelu_scalar<T: Real>(x: T) -> T {
    T::c(0.5) * x * (T::one() + (x * T::c(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// d/dx GELU = Φ(x) + x·φ(x).
#[inline]
pub fn gelu_grad_scalar<T: Real>(x: T) -> T {
    let cdf = T::c(0.5) * (T::one() + (x * T::c(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = T::c(0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2)
        * (-(x * x) * T::c(0.5)).exp();
    cdf + x * pdf
}

pub fn gelu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        *v = gelu_scalar(*v);
    }
}

/// `dx = dy ⊙ gelu'(pre)`, written over `dy`.
pub fn gelu_backward_in_place<T: Real>(pre: &[T], dy: &mut [T]) {
    for (d, &p) in dy.iter_mut().zip(pre) {
        *d = *d * gelu_grad_scalar(p);
    }
}

/// Max-shifted softmax over consecutive groups of `width` values.
pub fn softmax_rows_in_place<T: Real>(x: &mut [T], width: usize) {
    for row in x.chunks_exact_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// Softmax backward given the forward output `s`; overwrites `ds` with the logit gradient.
pub fn softmax_rows_backward_in_place<T: Real>(s: &[T], ds: &mut [T], width: usize) {
    for (srow, drow) in s.chunks_exact(width).zip(ds.chunks_exact_mut(width)) {
        let dot = srow
            .iter()
            .zip(drow.iter())
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        for (d, &sv) in drow.iter_mut().zip(srow) {
            *d = sv * (*d - dot);
        }
    }
}

/// Cached normalized values of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Per-row layer normalization (population variance) with affine scale/shift.
pub fn layer_norm_rows<T: Real>(
    x: &[T],
    scale: &[T],
    shift: &[T],
    eps: T,
    y: &mut [T],
) -> LayerNormCache<T> {
    let width = scale.len();
    let rows = x.len() / width;
    let inv_w = T::one() / T::c(width as f64);
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(rows);
    for ((xr, hr), yr) in x
        .chunks_exact(width)
        .zip(xhat.chunks_exact_mut(width))
        .zip(y.chunks_exact_mut(width))
    {
        let mean = xr.iter().copied().fold(T::zero(), |a, b| a + b) * inv_w;
        let var = xr
            .iter()
            .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean))
            * inv_w;
        let is = T::one() / (var + eps).sqrt();
        for i in 0..width {
            hr[i] = (xr[i] - mean) * is;
            yr[i] = hr[i] * scale[i] + shift[i];
        }
        inv_std.push(is);
    }
    LayerNormCache { xhat, inv_std }
}

/// Layer-norm backward: accumulates into `dscale`/`dshift` and writes `dx`.
pub fn layer_norm_rows_backward<T: Real>(
    cache: &LayerNormCache<T>,
    scale: &[T],
    dy: &[T],
    dscale: &mut [T],
    dshift: &mut [T],
    dx: &mut [T],
) {
    let width = scale.len();
    let inv_w = T::one() / T::c(width as f64);
    let mut dxhat = vec![T::zero(); width];
    for (((hr, dyr), dxr), &is) in cache
        .xhat
        .chunks_exact(width)
        .zip(dy.chunks_exact(width))
        .zip(dx.chunks_exact_mut(width))
        .zip(&cache.inv_std)
    {
        let mut mean_d = T::zero();
        let mut mean_dh = T::zero();
        for i in 0..width {
            dscale[i] = dscale[i] + dyr[i] * hr[i];
            dshift[i] = dshift[i] + dyr[i];
            dxhat[i] = dyr[i] * scale[i];
            mean_d = mean_d + dxhat[i];
            mean_dh = mean_dh + dxhat[i] * hr[i];
        }
        mean_d = mean_d * inv_w;
        mean_dh = mean_dh * inv_w;
        for i in 0..width {
            dxr[i] = is * (dxhat[i] - mean_d - hr[i] * mean_dh);
        }
    }
}

/// Weight/bias pair of a fully connected layer; `weight` is `out×in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f64> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LayerParams<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.len() != weight.rows() {
            return Err(Error::shape(
                "LayerParams::new",
                &[bias.len()],
                &[weight.rows()],
            ));
        }
        Ok(Self { weight, bias })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }
}

pub fn linear_forward<T: Real>(p: &LayerParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape().len() != 2 || x.cols() != p.fan_in() {
        return Err(Error::shape(
            "linear_forward",
            &[x.rows(), p.fan_in()],
            x.shape(),
        ));
    }
    let n = x.rows();
    let mut y = Tensor::zeros(&[n, p.fan_out()]);
    linear_into(
        p.weight.data(),
        p.bias.data(),
        x.data(),
        n,
        p.fan_in(),
        y.data_mut(),
    );
    Ok(y)
}

pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

/// Softmax along `axis` of an arbitrary-rank tensor.
pub fn softmax<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::invalid(format!(
            "softmax axis {axis} out of range for rank {}",
            shape.len()
        )));
    }
    let width = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.clone();
    if width == 0 {
        return Ok(out);
    }
    let data = out.data_mut();
    let mut buf = vec![T::zero(); width];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * width + k) * inner + i;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = data[idx(k)];
            }
            softmax_rows_in_place(&mut buf, width);
            for (k, b) in buf.iter().enumerate() {
                data[idx(k)] = *b;
            }
        }
    }
    Ok(out)
}

pub fn layer_norm<T: Real>(x: &Tensor<T>, scale: &[T], shift: &[T], eps: T) -> Result<Tensor<T>> {
    let width = x.cols();
    if width == 0 || scale.len() != width || shift.len() != width {
        return Err(Error::shape(
            "layer_norm",
            &[width],
            &[scale.len(), shift.len()],
        ));
    }
    let mut y = Tensor::zeros(x.shape());
    layer_norm_rows(x.data(), scale, shift, eps, y.data_mut());
    Ok(y)
}
