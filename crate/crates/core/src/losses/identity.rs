use super::{check_batch, check_label, LossOutput, Reduction};
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Matrix};

/// Affine classifier `logits = W·g + b` on raw (unnormalized) features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// `classes × dim`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "{} bias entries for {} classes",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.weights.cols() {
            return Err(Error::Shape(format!(
                "features have dimension {}, classifier expects {}",
                features.cols(),
                self.weights.cols()
            )));
        }
        let mut z = features.matmul_t(&self.weights)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }
}

/// Softmax cross-entropy against the soft target
/// `(1 − s)·onehot(y) + s/C`. `s = 0` is the plain identification loss.
pub fn label_smoothing_ce(
    features: &Matrix,
    labels: &[usize],
    head: &LinearHead,
    smoothing: f64,
    reduction: Reduction,
) -> Result<LossOutput> {
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::Config(format!(
            "label smoothing must lie in [0, 1), got {smoothing}"
        )));
    }
    check_batch(features, labels.len(), "identity CE")?;
    let classes = head.num_classes();
    for &y in labels {
        check_label(y, classes, "identity CE")?;
    }
    let logits = head.logits(features)?;
    let scale = reduction.factor(labels.len());
    let off = smoothing / classes as f64;
    let on = 1.0 - smoothing + off;

    let mut value = 0.0;
    let mut grad_logits = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        let z = logits.row(i);
        let lse = log_sum_exp(z);
        let g = grad_logits.row_mut(i);
        for (j, (gj, &zj)) in g.iter_mut().zip(z).enumerate() {
            let target = if j == y { on } else { off };
            if target != 0.0 {
                value -= target * (zj - lse);
            }
            *gj = ((zj - lse).exp() - target) * scale;
        }
    }

    let grad_features = grad_logits.matmul(&head.weights)?;
    let grad_weights = grad_logits.t_matmul(features)?;
    let mut grad_bias = vec![0.0; classes];
    for row in grad_logits.row_iter() {
        for (b, g) in grad_bias.iter_mut().zip(row) {
            *b += g;
        }
    }
    LossOutput {
        value: value * scale,
        grad_features,
        grad_weights: Some(grad_weights),
        grad_bias: Some(grad_bias),
    }
    .check_finite("identity CE")
}

/// Identification loss: softmax cross-entropy of the affine identity head.
pub fn identity_ce_loss(
    features: &Matrix,
    labels: &[usize],
    head: &LinearHead,
    reduction: Reduction,
) -> Result<LossOutput> {
    label_smoothing_ce(features, labels, head, 0.0, reduction)
}
