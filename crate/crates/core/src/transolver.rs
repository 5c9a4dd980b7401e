//! Physics-attention encoder.
//!
//! Points are softly assigned to `S` learned slices per head, each slice is summarized by a
//! weighted mean token, tokens attend to each other, and the attended tokens are spread back
//! to the points with the same weights.
//!
//! Internally per-point buffers are point-major: slice weights are stored `[N][H][S]` and
//! projected features `[N][H][D_h]`, so that every per-head product is a strided GEMM. The
//! public [`SliceWeights`] view uses the `[H][N][S]` ordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::layers::{LayerNorm, Linear, Mlp2, Mlp2Cache};
use crate::numerics::ops::{softmax_rows_backward_in_place, softmax_rows_in_place, LayerNormCache};
use crate::numerics::{LayerParams, ParamLayout, Real, Tensor};

/// Added to every slice's total weight before dividing.
pub const SLICE_EPS: f64 = 1e-12;

/// Architecture hyperparameters of the hybrid network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Per-point input features (coordinates + normals).
    pub in_features: usize,
    /// Per-point outputs (displacement components).
    pub out_features: usize,
    /// Embedding width `D`.
    pub width: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub slices: usize,
    pub blocks: usize,
    /// DeepONet basis size `p`.
    pub basis: usize,
    pub branch_width: usize,
    pub branch_hidden_layers: usize,
    pub trunk_width: usize,
    pub trunk_hidden_layers: usize,
}

impl ModelConfig {
    pub fn paper() -> Self {
        Self {
            in_features: 6,
            out_features: 3,
            width: 128,
            heads: 8,
            head_dim: 16,
            slices: 32,
            blocks: 4,
            basis: 128,
            branch_width: 128,
            branch_hidden_layers: 3,
            trunk_width: 128,
            trunk_hidden_layers: 3,
        }
    }

    pub fn desk() -> Self {
        Self {
            width: 64,
            heads: 4,
            head_dim: 16,
            slices: 8,
            blocks: 2,
            ..Self::paper()
        }
    }

    /// Small configuration used by gradient checks.
    pub fn toy() -> Self {
        Self {
            width: 16,
            heads: 2,
            head_dim: 8,
            slices: 4,
            blocks: 2,
            basis: 16,
            branch_width: 16,
            trunk_width: 16,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_features", self.in_features),
            ("out_features", self.out_features),
            ("width", self.width),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("slices", self.slices),
            ("blocks", self.blocks),
            ("basis", self.basis),
            ("branch_width", self.branch_width),
            ("branch_hidden_layers", self.branch_hidden_layers),
            ("trunk_width", self.trunk_width),
            ("trunk_hidden_layers", self.trunk_hidden_layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("model config: {name} must be >= 1")));
            }
        }
        if self.width != self.heads * self.head_dim {
            return Err(Error::invalid(format!(
                "model config: width {} != heads {} x head_dim {}",
                self.width, self.heads, self.head_dim
            )));
        }
        Ok(())
    }
}

/// Slice assignment weights, `[H][N][S]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceWeights<T = f64> {
    pub w: Tensor<T>,
}

/// Per-point latent field `y*` (`N×D`) consumed by the branch network.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEmbedding<T = f64> {
    pub y_star: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    n: usize,
    heads: usize,
    slices: usize,
    head_dim: usize,
}

impl Dims {
    fn hs(&self) -> usize {
        self.heads * self.slices
    }

    fn hd(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Point-major `[N][H][S]` → `[H][N][S]`.
fn point_major_to_head_major<T: Real>(w: &[T], d: Dims) -> Tensor<T> {
    let mut out = Vec::with_capacity(w.len());
    for h in 0..d.heads {
        for j in 0..d.n {
            let base = j * d.hs() + h * d.slices;
            out.extend_from_slice(&w[base..base + d.slices]);
        }
    }
    Tensor::new(vec![d.heads, d.n, d.slices], out).expect("H×N×S")
}

fn head_major_to_point_major<T: Real>(t: &Tensor<T>) -> (Vec<T>, usize, usize, usize) {
    let (h, n, s) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = vec![T::zero(); t.len()];
    for hh in 0..h {
        for j in 0..n {
            for k in 0..s {
                out[j * h * s + hh * s + k] = t.data()[(hh * n + j) * s + k];
            }
        }
    }
    (out, h, n, s)
}

/// Slice tokens `z[h][s] = Σ_j w·x̃ / (Σ_j w + ε)` plus the slice totals `Σ_j w`.
fn aggregate_kernel<T: Real>(w: &[T], xt: &[T], d: Dims) -> (Vec<T>, Vec<T>) {
    let (hs, hd) = (d.hs(), d.hd());
    let mut z = vec![T::zero(); d.heads * d.slices * d.head_dim];
    let mut totals = vec![T::zero(); hs];
    for row in w.chunks_exact(hs) {
        for (t, &v) in totals.iter_mut().zip(row) {
            *t = *t + v;
        }
    }
    let block = d.slices * d.head_dim;
    for h in 0..d.heads {
        T::gemm(
            d.slices,
            d.n,
            d.head_dim,
            T::one(),
            &w[h * d.slices..],
            1,
            hs,
            &xt[h * d.head_dim..],
            hd,
            1,
            T::zero(),
            &mut z[h * block..(h + 1) * block],
            d.head_dim,
            1,
        );
    }
    let eps = T::c(SLICE_EPS);
    for (hsi, zr) in z.chunks_exact_mut(d.head_dim).enumerate() {
        let denom = totals[hsi] + eps;
        for v in zr {
            *v = *v / denom;
        }
    }
    (z, totals)
}

/// Backward of [`aggregate_kernel`]; accumulates into `dw` and writes `dxt`.
#[allow(clippy::too_many_arguments)]
fn aggregate_backward<T: Real>(
    w: &[T],
    xt: &[T],
    z: &[T],
    totals: &[T],
    dz: &[T],
    d: Dims,
    dw: &mut [T],
    dxt: &mut [T],
) {
    let (hs, hd) = (d.hs(), d.hd());
    let eps = T::c(SLICE_EPS);
    // dA = dz / (c + ε);  dc = -Σ_d dz·z / (c + ε)
    let mut da = vec![T::zero(); dz.len()];
    let mut dc = vec![T::zero(); hs];
    for hsi in 0..hs {
        let inv = T::one() / (totals[hsi] + eps);
        let r = hsi * d.head_dim..(hsi + 1) * d.head_dim;
        let mut acc = T::zero();
        for ((a, &g), &zv) in da[r.clone()].iter_mut().zip(&dz[r.clone()]).zip(&z[r]) {
            *a = g * inv;
            acc = acc + g * zv;
        }
        dc[hsi] = -acc * inv;
    }
    let block = d.slices * d.head_dim;
    for h in 0..d.heads {
        let da_h = &da[h * block..(h + 1) * block];
        // dw[j, h, s] += Σ_d x̃[j, h, d] · dA[h, s, d]
        T::gemm(
            d.n,
            d.head_dim,
            d.slices,
            T::one(),
            &xt[h * d.head_dim..],
            hd,
            1,
            da_h,
            1,
            d.head_dim,
            T::one(),
            &mut dw[h * d.slices..],
            hs,
            1,
        );
        // dx̃[j, h, :] = Σ_s w[j, h, s] · dA[h, s, :]
        T::gemm(
            d.n,
            d.slices,
            d.head_dim,
            T::one(),
            &w[h * d.slices..],
            hs,
            1,
            da_h,
            d.head_dim,
            1,
            T::zero(),
            &mut dxt[h * d.head_dim..],
            hd,
            1,
        );
    }
    for row in dw.chunks_exact_mut(hs) {
        for (g, &c) in row.iter_mut().zip(&dc) {
            *g = *g + c;
        }
    }
}

/// Per-point features `y[j, h, :] = Σ_s w[j, h, s] · z'[h, s, :]`, heads concatenated.
fn deslice_kernel<T: Real>(zp: &[T], w: &[T], d: Dims) -> Vec<T> {
    let (hs, hd) = (d.hs(), d.hd());
    let mut y = vec![T::zero(); d.n * hd];
    let block = d.slices * d.head_dim;
    for h in 0..d.heads {
        T::gemm(
            d.n,
            d.slices,
            d.head_dim,
            T::one(),
            &w[h * d.slices..],
            hs,
            1,
            &zp[h * block..(h + 1) * block],
            d.head_dim,
            1,
            T::zero(),
            &mut y[h * d.head_dim..],
            hd,
            1,
        );
    }
    y
}

/// Backward of [`deslice_kernel`]; writes `dw` (overwriting) and returns `dz'`.
fn deslice_backward<T: Real>(zp: &[T], w: &[T], dy: &[T], d: Dims, dw: &mut [T]) -> Vec<T> {
    let (hs, hd) = (d.hs(), d.hd());
    let block = d.slices * d.head_dim;
    let mut dzp = vec![T::zero(); d.heads * block];
    for h in 0..d.heads {
        T::gemm(
            d.slices,
            d.n,
            d.head_dim,
            T::one(),
            &w[h * d.slices..],
            1,
            hs,
            &dy[h * d.head_dim..],
            hd,
            1,
            T::zero(),
            &mut dzp[h * block..(h + 1) * block],
            d.head_dim,
            1,
        );
        T::gemm(
            d.n,
            d.head_dim,
            d.slices,
            T::one(),
            &dy[h * d.head_dim..],
            hd,
            1,
            &zp[h * block..(h + 1) * block],
            1,
            d.head_dim,
            T::zero(),
            &mut dw[h * d.slices..],
            hs,
            1,
        );
    }
    dzp
}

/// Scaled dot-product attention among the `S` tokens of each head.
/// Returns the attended tokens and the row-stochastic attention matrices `[H][S][S]`.
fn attention_kernel<T: Real>(q: &[T], k: &[T], v: &[T], d: Dims) -> (Vec<T>, Vec<T>) {
    let (s, dh) = (d.slices, d.head_dim);
    let block = s * dh;
    let scale = T::one() / T::c(dh as f64).sqrt();
    let mut probs = vec![T::zero(); d.heads * s * s];
    let mut out = vec![T::zero(); d.heads * block];
    for h in 0..d.heads {
        let r = h * block..(h + 1) * block;
        let p = &mut probs[h * s * s..(h + 1) * s * s];
        T::gemm(
            s,
            dh,
            s,
            scale,
            &q[r.clone()],
            dh,
            1,
            &k[r.clone()],
            1,
            dh,
            T::zero(),
            p,
            s,
            1,
        );
        softmax_rows_in_place(p, s);
        T::gemm(
            s,
            s,
            dh,
            T::one(),
            p,
            s,
            1,
            &v[r.clone()],
            dh,
            1,
            T::zero(),
            &mut out[r],
            dh,
            1,
        );
    }
    (out, probs)
}

/// Backward of [`attention_kernel`]: returns `(dq, dk, dv)`.
fn attention_backward<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    d: Dims,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (s, dh) = (d.slices, d.head_dim);
    let block = s * dh;
    let scale = T::one() / T::c(dh as f64).sqrt();
    let mut dq = vec![T::zero(); q.len()];
    let mut dk = vec![T::zero(); k.len()];
    let mut dv = vec![T::zero(); v.len()];
    let mut dp = vec![T::zero(); s * s];
    for h in 0..d.heads {
        let r = h * block..(h + 1) * block;
        let p = &probs[h * s * s..(h + 1) * s * s];
        let g = &dout[r.clone()];
        // dv = pᵀ·g ; dp = g·vᵀ
        T::gemm(
            s,
            s,
            dh,
            T::one(),
            p,
            1,
            s,
            g,
            dh,
            1,
            T::zero(),
            &mut dv[r.clone()],
            dh,
            1,
        );
        T::gemm(
            s,
            dh,
            s,
            T::one(),
            g,
            dh,
            1,
            &v[r.clone()],
            1,
            dh,
            T::zero(),
            &mut dp,
            s,
            1,
        );
        softmax_rows_backward_in_place(p, &mut dp, s);
        // scores = scale·q·kᵀ
        T::gemm(
            s,
            s,
            dh,
            scale,
            &dp,
            s,
            1,
            &k[r.clone()],
            dh,
            1,
            T::zero(),
            &mut dq[r.clone()],
            dh,
            1,
        );
        T::gemm(
            s,
            s,
            dh,
            scale,
            &dp,
            1,
            s,
            &q[r.clone()],
            dh,
            1,
            T::zero(),
            &mut dk[r],
            dh,
            1,
        );
    }
    (dq, dk, dv)
}

fn check_rank3<T: Real>(t: &Tensor<T>, what: &'static str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[a, b, c] => Ok((a, b, c)),
        other => Err(Error::shape(what, &[0, 0, 0], other)),
    }
}

/// Softmax slice assignment from per-point logits laid out `N×(H·S)`, head-major columns.
pub fn slice_weights_from_logits<T: Real>(
    logits: &Tensor<T>,
    heads: usize,
    slices: usize,
) -> Result<SliceWeights<T>> {
    if logits.shape().len() != 2 || logits.cols() != heads * slices {
        return Err(Error::shape(
            "slice_weights",
            &[logits.rows(), heads * slices],
            logits.shape(),
        ));
    }
    let mut w = logits.data().to_vec();
    softmax_rows_in_place(&mut w, slices);
    let d = Dims {
        n: logits.rows(),
        heads,
        slices,
        head_dim: 0,
    };
    Ok(SliceWeights {
        w: point_major_to_head_major(&w, d),
    })
}

/// Slice assignment of embedded points through a learned `D → H·S` head.
pub fn slice_weights<T: Real>(
    x: &Tensor<T>,
    head: &LayerParams<T>,
    heads: usize,
    slices: usize,
) -> Result<SliceWeights<T>> {
    let logits = crate::numerics::linear_forward(head, x)?;
    slice_weights_from_logits(&logits, heads, slices)
}

/// Slice tokens `[H][S][D_h]` from weights `[H][N][S]` and projected features `[H][N][D_h]`.
pub fn slice_aggregate<T: Real>(w: &SliceWeights<T>, xt: &Tensor<T>) -> Result<Tensor<T>> {
    let (heads, n, slices) = check_rank3(&w.w, "slice_aggregate weights")?;
    let (h2, n2, head_dim) = check_rank3(xt, "slice_aggregate features")?;
    if h2 != heads || n2 != n {
        return Err(Error::shape(
            "slice_aggregate",
            &[heads, n, head_dim],
            xt.shape(),
        ));
    }
    let (wp, ..) = head_major_to_point_major(&w.w);
    let (xp, ..) = head_major_to_point_major(xt);
    let d = Dims {
        n,
        heads,
        slices,
        head_dim,
    };
    let (z, _) = aggregate_kernel(&wp, &xp, d);
    Tensor::new(vec![heads, slices, head_dim], z)
}

/// Dot-product attention among slice tokens `[H][S][D_h]` with shared per-head projections.
pub fn slice_attention<T: Real>(
    z: &Tensor<T>,
    q: &LayerParams<T>,
    k: &LayerParams<T>,
    v: &LayerParams<T>,
) -> Result<Tensor<T>> {
    let (heads, slices, head_dim) = check_rank3(z, "slice_attention tokens")?;
    let rows = Tensor::new(vec![heads * slices, head_dim], z.data().to_vec())?;
    let qv = crate::numerics::linear_forward(q, &rows)?;
    let kv = crate::numerics::linear_forward(k, &rows)?;
    let vv = crate::numerics::linear_forward(v, &rows)?;
    if qv.cols() != head_dim || kv.cols() != head_dim || vv.cols() != head_dim {
        return Err(Error::shape("slice_attention", &[head_dim], &[qv.cols()]));
    }
    let d = Dims {
        n: 0,
        heads,
        slices,
        head_dim,
    };
    let (out, _) = attention_kernel(qv.data(), kv.data(), vv.data(), d);
    Tensor::new(vec![heads, slices, head_dim], out)
}

/// Attention among given query/key/value tokens, each `[H][S][D_h]`.
pub fn token_attention<T: Real>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let (heads, slices, head_dim) = check_rank3(q, "token_attention")?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::shape("token_attention", q.shape(), k.shape()));
    }
    let d = Dims {
        n: 0,
        heads,
        slices,
        head_dim,
    };
    let (out, _) = attention_kernel(q.data(), k.data(), v.data(), d);
    Tensor::new(vec![heads, slices, head_dim], out)
}

/// Spreads attended tokens `[H][S][D_h]` back to points, returning `N×(H·D_h)`.
pub fn deslice<T: Real>(zp: &Tensor<T>, w: &SliceWeights<T>) -> Result<Tensor<T>> {
    let (heads, n, slices) = check_rank3(&w.w, "deslice weights")?;
    let (h2, s2, head_dim) = check_rank3(zp, "deslice tokens")?;
    if h2 != heads || s2 != slices {
        return Err(Error::shape(
            "deslice",
            &[heads, slices, head_dim],
            zp.shape(),
        ));
    }
    let (wp, ..) = head_major_to_point_major(&w.w);
    let d = Dims {
        n,
        heads,
        slices,
        head_dim,
    };
    Tensor::new(vec![n, heads * head_dim], deslice_kernel(zp.data(), &wp, d))
}

/// Pre-norm transformer block with slice attention in place of point attention.
#[derive(Debug, Clone)]
pub struct PhysicsBlock {
    pub norm_attn: LayerNorm,
    pub slice_head: Linear,
    pub project: Linear,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub norm_mlp: LayerNorm,
    pub mlp: Mlp2,
    heads: usize,
    slices: usize,
    head_dim: usize,
}

/// Intermediate values of one block's forward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    n: usize,
    ln_attn: LayerNormCache<T>,
    normed: Vec<T>,
    /// `[N][H][S]`
    weights: Vec<T>,
    /// `[N][H][D_h]`
    projected: Vec<T>,
    totals: Vec<T>,
    tokens: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    attended: Vec<T>,
    deslice_out: Vec<T>,
    ln_mlp: LayerNormCache<T>,
    mlp: Mlp2Cache<T>,
}

impl<T: Real> BlockCache<T> {
    pub fn slice_weights(&self, heads: usize, slices: usize) -> SliceWeights<T> {
        SliceWeights {
            w: point_major_to_head_major(
                &self.weights,
                Dims {
                    n: self.n,
                    heads,
                    slices,
                    head_dim: 0,
                },
            ),
        }
    }

    /// Slice tokens `[H][S][D_h]` before attention.
    pub fn tokens(&self, heads: usize, slices: usize) -> Tensor<T> {
        let head_dim = self.tokens.len() / (heads * slices);
        Tensor::new(vec![heads, slices, head_dim], self.tokens.clone()).expect("H×S×D_h")
    }
}

impl PhysicsBlock {
    pub fn new(layout: &mut ParamLayout, prefix: &str, cfg: &ModelConfig) -> Self {
        let (d, hs, hd) = (cfg.width, cfg.heads * cfg.slices, cfg.heads * cfg.head_dim);
        Self {
            norm_attn: LayerNorm::new(layout, &format!("{prefix}.norm_attn"), d),
            slice_head: Linear::new(layout, &format!("{prefix}.slice_head"), d, hs),
            project: Linear::new(layout, &format!("{prefix}.project"), d, hd),
            query: Linear::new(
                layout,
                &format!("{prefix}.query"),
                cfg.head_dim,
                cfg.head_dim,
            ),
            key: Linear::new(layout, &format!("{prefix}.key"), cfg.head_dim, cfg.head_dim),
            value: Linear::new(
                layout,
                &format!("{prefix}.value"),
                cfg.head_dim,
                cfg.head_dim,
            ),
            attn_out: Linear::new(layout, &format!("{prefix}.attn_out"), hd, d),
            norm_mlp: LayerNorm::new(layout, &format!("{prefix}.norm_mlp"), d),
            mlp: Mlp2::new(layout, &format!("{prefix}.mlp"), d, d, d),
            heads: cfg.heads,
            slices: cfg.slices,
            head_dim: cfg.head_dim,
        }
    }

    fn dims(&self, n: usize) -> Dims {
        Dims {
            n,
            heads: self.heads,
            slices: self.slices,
            head_dim: self.head_dim,
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], n: usize) -> (Vec<T>, BlockCache<T>) {
        let d = self.dims(n);
        let (normed, ln_attn) = self.norm_attn.forward(p, x);
        let mut weights = self.slice_head.forward(p, &normed, n);
        softmax_rows_in_place(&mut weights, self.slices);
        let projected = self.project.forward(p, &normed, n);
        let (tokens, totals) = aggregate_kernel(&weights, &projected, d);
        let rows = self.heads * self.slices;
        let q = self.query.forward(p, &tokens, rows);
        let k = self.key.forward(p, &tokens, rows);
        let v = self.value.forward(p, &tokens, rows);
        let (attended, probs) = attention_kernel(&q, &k, &v, d);
        let deslice_out = deslice_kernel(&attended, &weights, d);
        let attn = self.attn_out.forward(p, &deslice_out, n);
        let mid: Vec<T> = x.iter().zip(&attn).map(|(&a, &b)| a + b).collect();
        let (normed_mid, ln_mlp) = self.norm_mlp.forward(p, &mid);
        let (m, mlp) = self.mlp.forward(p, &normed_mid, n);
        let out = mid.iter().zip(&m).map(|(&a, &b)| a + b).collect();
        (
            out,
            BlockCache {
                n,
                ln_attn,
                normed,
                weights,
                projected,
                totals,
                tokens,
                q,
                k,
                v,
                probs,
                attended,
                deslice_out,
                ln_mlp,
                mlp,
            },
        )
    }

    pub fn backward<T: Real>(
        &self,
        p: &[T],
        cache: &BlockCache<T>,
        dout: &[T],
        grads: &mut [T],
    ) -> Vec<T> {
        let n = cache.n;
        let d = self.dims(n);
        let rows = self.heads * self.slices;

        // out = mid + mlp(norm(mid))
        let dm = self
            .mlp
            .backward(p, &cache.mlp, dout, grads, true)
            .expect("mlp input gradient");
        let dmid_branch = self.norm_mlp.backward(p, &cache.ln_mlp, &dm, grads);
        let dmid: Vec<T> = dout
            .iter()
            .zip(&dmid_branch)
            .map(|(&a, &b)| a + b)
            .collect();

        // mid = x + attn_out(deslice(...))
        let dy = self
            .attn_out
            .backward(p, &cache.deslice_out, &dmid, n, grads, true)
            .expect("deslice gradient");
        let mut dw = vec![T::zero(); cache.weights.len()];
        let datt = deslice_backward(&cache.attended, &cache.weights, &dy, d, &mut dw);
        let (dq, dk, dv) = attention_backward(&cache.q, &cache.k, &cache.v, &cache.probs, &datt, d);
        let mut dtok = self
            .query
            .backward(p, &cache.tokens, &dq, rows, grads, true)
            .expect("token gradient");
        for other in [
            self.key.backward(p, &cache.tokens, &dk, rows, grads, true),
            self.value
                .backward(p, &cache.tokens, &dv, rows, grads, true),
        ] {
            for (a, b) in dtok.iter_mut().zip(other.expect("token gradient")) {
                *a = *a + b;
            }
        }
        let mut dproj = vec![T::zero(); cache.projected.len()];
        aggregate_backward(
            &cache.weights,
            &cache.projected,
            &cache.tokens,
            &cache.totals,
            &dtok,
            d,
            &mut dw,
            &mut dproj,
        );
        softmax_rows_backward_in_place(&cache.weights, &mut dw, self.slices);
        let mut dnormed = self
            .slice_head
            .backward(p, &cache.normed, &dw, n, grads, true)
            .expect("normed gradient");
        let from_proj = self
            .project
            .backward(p, &cache.normed, &dproj, n, grads, true)
            .expect("normed gradient");
        for (a, b) in dnormed.iter_mut().zip(from_proj) {
            *a = *a + b;
        }
        let dx_branch = self.norm_attn.backward(p, &cache.ln_attn, &dnormed, grads);
        dmid.iter().zip(&dx_branch).map(|(&a, &b)| a + b).collect()
    }
}

/// Embedding MLP, stacked physics-attention blocks and the displacement head.
#[derive(Debug, Clone)]
pub struct Transolver {
    pub config: ModelConfig,
    pub embed: Mlp2,
    pub blocks: Vec<PhysicsBlock>,
    pub head: Mlp2,
}

#[derive(Debug, Clone)]
pub struct TransolverCache<T> {
    pub n: usize,
    embed: Mlp2Cache<T>,
    pub blocks: Vec<BlockCache<T>>,
    head: Mlp2Cache<T>,
}

#[derive(Debug, Clone)]
pub struct TransolverOutput<T> {
    /// `N×C'` displacement prediction.
    pub u_hat: Tensor<T>,
    pub latent: LatentEmbedding<T>,
}

impl Transolver {
    pub fn new(layout: &mut ParamLayout, cfg: &ModelConfig) -> Self {
        let embed = Mlp2::new(layout, "embed", cfg.in_features, cfg.width, cfg.width);
        let blocks = (0..cfg.blocks)
            .map(|i| PhysicsBlock::new(layout, &format!("blocks.{i}"), cfg))
            .collect();
        let head = Mlp2::new(layout, "head", cfg.width, cfg.width, cfg.out_features);
        Self {
            config: cfg.clone(),
            embed,
            blocks,
            head,
        }
    }

    /// Point embedding `x = φ(g)`.
    pub fn embed_points<T: Real>(&self, p: &[T], features: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_features(features)?;
        let n = features.rows();
        let (x, _) = self.embed.forward(p, features.data(), n);
        Tensor::new(vec![n, self.config.width], x)
    }

    fn check_features<T: Real>(&self, features: &Tensor<T>) -> Result<()> {
        if features.shape().len() != 2 || features.cols() != self.config.in_features {
            return Err(Error::shape(
                "transolver input",
                &[features.rows(), self.config.in_features],
                features.shape(),
            ));
        }
        if features.rows() == 0 {
            return Err(Error::invalid("empty point cloud"));
        }
        Ok(())
    }

    pub fn forward<T: Real>(
        &self,
        p: &[T],
        features: &Tensor<T>,
    ) -> Result<(TransolverOutput<T>, TransolverCache<T>)> {
        self.check_features(features)?;
        let n = features.rows();
        let (mut x, embed) = self.embed.forward(p, features.data(), n);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(p, &x, n);
            blocks.push(c);
            x = y;
        }
        let (u, head) = self.head.forward(p, &x, n);
        Ok((
            TransolverOutput {
                u_hat: Tensor::new(vec![n, self.config.out_features], u)?,
                latent: LatentEmbedding {
                    y_star: Tensor::new(vec![n, self.config.width], x)?,
                },
            },
            TransolverCache {
                n,
                embed,
                blocks,
                head,
            },
        ))
    }

    /// Backpropagates `du` (into the displacement head) plus an extra gradient on `y*`.
    pub fn backward<T: Real>(
        &self,
        p: &[T],
        cache: &TransolverCache<T>,
        du: &[T],
        dy_star: Option<&[T]>,
        grads: &mut [T],
    ) {
        let mut g = self
            .head
            .backward(p, &cache.head, du, grads, true)
            .expect("latent gradient");
        if let Some(extra) = dy_star {
            for (a, &b) in g.iter_mut().zip(extra) {
                *a = *a + b;
            }
        }
        for (block, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            g = block.backward(p, c, &g, grads);
        }
        self.embed.backward(p, &cache.embed, &g, grads, false);
    }
}
