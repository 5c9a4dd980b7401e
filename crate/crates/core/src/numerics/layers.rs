//! Parameterized layers addressing the flat parameter vector through [`Slot`]s.

use crate::numerics::ops::{
    gelu_backward_in_place, gelu_in_place, layer_norm_rows, layer_norm_rows_backward,
    linear_backward, linear_into, LayerNormCache, LAYER_NORM_EPS,
};
use crate::numerics::params::{Init, ParamLayout, Slot};
use crate::numerics::Real;

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Slot,
    pub bias: Slot,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, prefix: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = layout.add(
            format!("{prefix}.weight"),
            &[fan_out, fan_in],
            Init::FanIn(fan_in),
        );
        let bias = layout.add(format!("{prefix}.bias"), &[fan_out], Init::FanIn(fan_in));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], n: usize) -> Vec<T> {
        let mut y = vec![T::zero(); n * self.fan_out];
        linear_into(
            self.weight.get(p),
            self.bias.get(p),
            x,
            n,
            self.fan_in,
            &mut y,
        );
        y
    }

    /// Accumulates parameter gradients; returns the input gradient if `want_dx`.
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        x: &[T],
        dy: &[T],
        n: usize,
        grads: &mut [T],
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let mut dx = want_dx.then(|| vec![T::zero(); n * self.fan_in]);
        // Weight and bias slots are adjacent, weight first.
        let (gw, gb) = grads[self.weight.offset..self.bias.offset + self.bias.len]
            .split_at_mut(self.weight.len);
        linear_backward(
            self.weight.get(p),
            x,
            dy,
            n,
            self.fan_in,
            self.fan_out,
            gw,
            gb,
            dx.as_deref_mut(),
        );
        dx
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub scale: Slot,
    pub shift: Slot,
    pub width: usize,
}

impl LayerNorm {
    pub fn new(layout: &mut ParamLayout, prefix: &str, width: usize) -> Self {
        let scale = layout.add(format!("{prefix}.scale"), &[width], Init::Ones);
        let shift = layout.add(format!("{prefix}.shift"), &[width], Init::Zeros);
        Self {
            scale,
            shift,
            width,
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T]) -> (Vec<T>, LayerNormCache<T>) {
        let mut y = vec![T::zero(); x.len()];
        let cache = layer_norm_rows(
            x,
            self.scale.get(p),
            self.shift.get(p),
            T::c(LAYER_NORM_EPS),
            &mut y,
        );
        (y, cache)
    }

    pub fn backward<T: Real>(
        &self,
        p: &[T],
        cache: &LayerNormCache<T>,
        dy: &[T],
        grads: &mut [T],
    ) -> Vec<T> {
        let mut dx = vec![T::zero(); dy.len()];
        let (gs, gh) = grads[self.scale.offset..self.shift.offset + self.shift.len]
            .split_at_mut(self.scale.len);
        layer_norm_rows_backward(cache, self.scale.get(p), dy, gs, gh, &mut dx);
        dx
    }
}

/// Two linear layers with a GELU in between.
#[derive(Debug, Clone)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
}

#[derive(Debug, Clone)]
pub struct Mlp2Cache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
    n: usize,
}

impl Mlp2 {
    pub fn new(
        layout: &mut ParamLayout,
        prefix: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
    ) -> Self {
        Self {
            first: Linear::new(layout, &format!("{prefix}.fc1"), fan_in, hidden),
            second: Linear::new(layout, &format!("{prefix}.fc2"), hidden, fan_out),
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], n: usize) -> (Vec<T>, Mlp2Cache<T>) {
        let pre = self.first.forward(p, x, n);
        let mut act = pre.clone();
        gelu_in_place(&mut act);
        let out = self.second.forward(p, &act, n);
        (
            out,
            Mlp2Cache {
                input: x.to_vec(),
                pre,
                act,
                n,
            },
        )
    }

    pub fn backward<T: Real>(
        &self,
        p: &[T],
        cache: &Mlp2Cache<T>,
        dy: &[T],
        grads: &mut [T],
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let mut da = self
            .second
            .backward(p, &cache.act, dy, cache.n, grads, true)
            .expect("hidden gradient requested");
        gelu_backward_in_place(&cache.pre, &mut da);
        self.first
            .backward(p, &cache.input, &da, cache.n, grads, want_dx)
    }
}
