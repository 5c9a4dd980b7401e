use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded shuffle of `0..n` split into `floor(ratio·n)` training and the rest testing indices.
/// 254 samples at 0.9 give 228/26.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} samples")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split_dataset<S: Clone>(samples: &[S], ratio: f64, seed: u64) -> Result<(Vec<S>, Vec<S>)> {
    let (tr, te) = split_indices(samples.len(), ratio, seed)?;
    Ok((
        tr.iter().map(|&i| samples[i].clone()).collect(),
        te.iter().map(|&i| samples[i].clone()).collect(),
    ))
}
