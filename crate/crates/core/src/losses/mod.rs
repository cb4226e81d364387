//! Losses with hand-derived gradients.
//!
//! Every loss takes the *pre-normalization* feature batch `g` (one row per
//! sample) and returns the gradient with respect to it. Losses that work on
//! the unit sphere normalize internally and chain through the normalization.
//!
//! | loss | features | classifier |
//! | ---- | -------- | ---------- |
//! | [`clothes_ce_loss`] | normalized | cosine, trained |
//! | [`cal_loss`] | normalized | cosine, frozen |
//! | [`negative_ce_loss`] | normalized | cosine, frozen |
//! | [`identity_ce_loss`] / [`label_smoothing_ce`] | raw | affine |
//! | [`triplet_loss_batch_hard`] | normalized | none |

mod cal;
mod cosine;
mod identity;
mod triplet;

pub use cal::{cal_loss, cal_terms, cal_weights, positive_weights, CalScheme, CalWeights};
pub use cosine::{clothes_ce_loss, negative_ce_loss, CosineClassifierHead};
pub use identity::{identity_ce_loss, label_smoothing_ce, LinearHead};
pub use triplet::triplet_loss_batch_hard;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// How per-sample losses are combined over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Plain sum over the batch.
    Sum,
    #[default]
    Mean,
}

impl Reduction {
    fn factor(self, n: usize) -> f64 {
        match self {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / n as f64,
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            other => Err(Error::Config(format!("unknown reduction `{other}`"))),
        }
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

/// Loss value with gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// ∂loss/∂g for the pre-normalization features.
    pub grad_features: Matrix,
    /// ∂loss/∂ raw classifier weights, when the classifier is trainable here.
    pub grad_weights: Option<Matrix>,
    pub grad_bias: Option<Vec<f64>>,
}

impl LossOutput {
    /// Flips the sign of the value and every gradient.
    pub fn negated(mut self) -> Self {
        self.value = -self.value;
        self.grad_features.scale(-1.0);
        if let Some(w) = self.grad_weights.as_mut() {
            w.scale(-1.0);
        }
        if let Some(b) = self.grad_bias.as_mut() {
            b.iter_mut().for_each(|v| *v = -*v);
        }
        self
    }

    fn check_finite(self, what: &str) -> Result<Self> {
        let finite = self.value.is_finite()
            && self.grad_features.is_finite()
            && self.grad_weights.as_ref().is_none_or(Matrix::is_finite)
            && self.grad_bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()));
        if finite {
            Ok(self)
        } else {
            Err(Error::NonFinite(format!("{what} produced {}", self.value)))
        }
    }
}

fn check_batch(features: &Matrix, labels: usize, what: &str) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::Degenerate(format!("{what}: empty batch")));
    }
    if features.rows() != labels {
        return Err(Error::Shape(format!(
            "{what}: {} feature rows, {labels} labels",
            features.rows()
        )));
    }
    Ok(())
}

fn check_label(label: usize, classes: usize, what: &str) -> Result<()> {
    if label >= classes {
        return Err(Error::Label(format!(
            "{what}: label {label} out of range for {classes} classes"
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testutil {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::numerics::Matrix;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }
}
