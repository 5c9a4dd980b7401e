use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Mean absolute difference.
pub fn l1_loss<T: Real>(pred: &[T], target: &[T]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("l1_loss", &[target.len()], &[pred.len()]));
    }
    if pred.is_empty() {
        return Err(Error::invalid("l1_loss of empty vectors"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (p.f64() - t.f64()).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// The four task terms; their sum is the training objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ux: f64,
    pub uy: f64,
    pub uz: f64,
    pub fr: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.ux + self.uy + self.uz + self.fr
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

impl std::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        self.ux += o.ux;
        self.uy += o.uy;
        self.uz += o.uz;
        self.fr += o.fr;
    }
}

fn check_disp<T: Real>(u_hat: &Tensor<T>, u: &Tensor<T>) -> Result<()> {
    if u_hat.shape() != u.shape() || u.shape().len() != 2 || u.cols() != 3 {
        return Err(Error::shape(
            "total_loss displacements",
            u.shape(),
            u_hat.shape(),
        ));
    }
    Ok(())
}

/// Per-component L1 terms: displacements over nodes, force over the sample's own time grid.
pub fn total_loss<T: Real>(
    u_hat: &Tensor<T>,
    u: &Tensor<T>,
    f_hat: &[T],
    f: &[T],
) -> Result<LossTerms> {
    check_disp(u_hat, u)?;
    Ok(LossTerms {
        ux: l1_loss(&u_hat.column(0), &u.column(0))?,
        uy: l1_loss(&u_hat.column(1), &u.column(1))?,
        uz: l1_loss(&u_hat.column(2), &u.column(2))?,
        fr: l1_loss(f_hat, f)?,
    })
}

#[inline]
fn sign<T: Real>(d: T) -> T {
    if d > T::zero() {
        T::one()
    } else if d < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Loss terms and their gradients `(∂L/∂û, ∂L/∂F̂)`.
pub fn total_loss_with_grad<T: Real>(
    u_hat: &Tensor<T>,
    u: &Tensor<T>,
    f_hat: &[T],
    f: &[T],
) -> Result<(LossTerms, Vec<T>, Vec<T>)> {
    let terms = total_loss(u_hat, u, f_hat, f)?;
    let inv_n = T::one() / T::c(u.rows() as f64);
    let du = u_hat
        .data()
        .iter()
        .zip(u.data())
        .map(|(&a, &b)| sign(a - b) * inv_n)
        .collect();
    let inv_t = T::one() / T::c(f.len() as f64);
    let df = f_hat
        .iter()
        .zip(f)
        .map(|(&a, &b)| sign(a - b) * inv_t)
        .collect();
    Ok((terms, du, df))
}
