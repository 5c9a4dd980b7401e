#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transdon::deeponet::TimeGrid;
use transdon::numerics::ops::gelu_scalar;
use transdon::{HybridModel, ModelConfig, ModelParams, Tensor};

pub fn random_features(n: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(vec![n, 6], data).unwrap()
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

/// Row `i` of the result is row `perm[i]` of `t`.
pub fn permute_rows(t: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&j| t.row(j).to_vec()).collect();
    Tensor::from_rows(&rows).unwrap()
}

pub fn model(config: &ModelConfig, seed: u64) -> (HybridModel, ModelParams<f64>) {
    let m = HybridModel::new(config).unwrap();
    let p = m.init_params::<f64>(seed);
    (m, p)
}

pub fn grid(times: &[f64]) -> TimeGrid<f64> {
    TimeGrid::new(times.to_vec()).unwrap()
}

/// Straight-line forward pass written from the model equations with plain loops, used as an
/// independent reference for the optimized implementation. Returns (u_hat rows, force).
pub fn reference_forward(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    features: &Tensor<f64>,
    times: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let get = |name: &str| params.get(name).unwrap_or_else(|| panic!("missing {name}"));
    let linear = |prefix: &str, x: &[f64]| -> Vec<f64> {
        let w = get(&format!("{prefix}.weight"));
        let b = get(&format!("{prefix}.bias"));
        let fan_in = x.len();
        (0..b.len())
            .map(|o| b[o] + (0..fan_in).map(|i| w[o * fan_in + i] * x[i]).sum::<f64>())
            .collect()
    };
    let gelu = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(gelu_scalar).collect() };
    let mlp = |prefix: &str, x: &[f64]| {
        linear(
            &format!("{prefix}.fc2"),
            &gelu(linear(&format!("{prefix}.fc1"), x)),
        )
    };
    let norm = |prefix: &str, x: &[f64]| -> Vec<f64> {
        let g = get(&format!("{prefix}.scale"));
        let b = get(&format!("{prefix}.shift"));
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
        let s = (var + 1e-5).sqrt();
        x.iter()
            .enumerate()
            .map(|(i, v)| g[i] * (v - m) / s + b[i])
            .collect()
    };
    let softmax = |x: &[f64]| -> Vec<f64> {
        let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    };

    let n = features.rows();
    let (h, s, dh, d) = (cfg.heads, cfg.slices, cfg.head_dim, cfg.width);
    let mut x: Vec<Vec<f64>> = (0..n).map(|i| mlp("embed", features.row(i))).collect();
    for b in 0..cfg.blocks {
        let p = format!("blocks.{b}");
        let normed: Vec<Vec<f64>> = x
            .iter()
            .map(|r| norm(&format!("{p}.norm_attn"), r))
            .collect();
        let logits: Vec<Vec<f64>> = normed
            .iter()
            .map(|r| linear(&format!("{p}.slice_head"), r))
            .collect();
        let proj: Vec<Vec<f64>> = normed
            .iter()
            .map(|r| linear(&format!("{p}.project"), r))
            .collect();
        // w[i][hh][j]
        let w: Vec<Vec<Vec<f64>>> = logits
            .iter()
            .map(|l| (0..h).map(|hh| softmax(&l[hh * s..(hh + 1) * s])).collect())
            .collect();
        let mut deslice = vec![vec![0.0; h * dh]; n];
        for hh in 0..h {
            let tokens: Vec<Vec<f64>> = (0..s)
                .map(|j| {
                    let total: f64 = (0..n).map(|i| w[i][hh][j]).sum();
                    (0..dh)
                        .map(|c| {
                            (0..n)
                                .map(|i| w[i][hh][j] * proj[i][hh * dh + c])
                                .sum::<f64>()
                                / (total + 1e-12)
                        })
                        .collect()
                })
                .collect();
            let q: Vec<Vec<f64>> = tokens
                .iter()
                .map(|z| linear(&format!("{p}.query"), z))
                .collect();
            let k: Vec<Vec<f64>> = tokens
                .iter()
                .map(|z| linear(&format!("{p}.key"), z))
                .collect();
            let v: Vec<Vec<f64>> = tokens
                .iter()
                .map(|z| linear(&format!("{p}.value"), z))
                .collect();
            let scale = 1.0 / (dh as f64).sqrt();
            let attended: Vec<Vec<f64>> = (0..s)
                .map(|a| {
                    let scores: Vec<f64> = (0..s)
                        .map(|bb| (0..dh).map(|c| q[a][c] * k[bb][c]).sum::<f64>() * scale)
                        .collect();
                    let pr = softmax(&scores);
                    (0..dh)
                        .map(|c| (0..s).map(|bb| pr[bb] * v[bb][c]).sum())
                        .collect()
                })
                .collect();
            for i in 0..n {
                for c in 0..dh {
                    deslice[i][hh * dh + c] = (0..s).map(|j| w[i][hh][j] * attended[j][c]).sum();
                }
            }
        }
        for i in 0..n {
            let a = linear(&format!("{p}.attn_out"), &deslice[i]);
            let mid: Vec<f64> = x[i].iter().zip(&a).map(|(u, v)| u + v).collect();
            let m = mlp(&format!("{p}.mlp"), &norm(&format!("{p}.norm_mlp"), &mid));
            x[i] = mid.iter().zip(&m).map(|(u, v)| u + v).collect();
        }
    }
    let u: Vec<Vec<f64>> = x.iter().map(|r| mlp("head", r)).collect();

    let pooled: Vec<f64> = (0..d)
        .map(|c| x.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut bvec = norm("branch.norm", &pooled);
    for i in 0..cfg.branch_hidden_layers {
        bvec = gelu(linear(&format!("branch.fc{i}"), &bvec));
    }
    let bvec = linear("branch.out", &bvec);
    let bias = get("force_bias")[0];
    let force = times
        .iter()
        .map(|&t| {
            let mut hdn = gelu(linear("trunk.lift", &[t]));
            for i in 1..cfg.trunk_hidden_layers {
                let a = gelu(linear(&format!("trunk.res{i}"), &hdn));
                hdn = hdn.iter().zip(&a).map(|(u, v)| u + v).collect();
            }
            let basis = linear("trunk.out", &hdn);
            basis.iter().zip(&bvec).map(|(u, v)| u * v).sum::<f64>() + bias
        })
        .collect();
    (u, force)
}
