use super::{check_batch, check_label, LossOutput, Reduction};
use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_backward, l2_normalize_rows, log_sum_exp, Matrix};

/// Cosine classifier: logits are `f · φ̂_j / τ` with both the feature `f` and
/// the weight rows `φ̂_j` L2-normalized on use. The raw weights are stored so
/// gradients flow through the normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineClassifierHead {
    pub weights: Matrix,
    temperature: f64,
}

impl CosineClassifierHead {
    pub fn new(weights: Matrix, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
        }
        Ok(Self { weights, temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    /// Temperature-scaled cosine logits for a batch of raw features.
    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        Ok(CosineForward::run(features, self)?.logits)
    }
}

/// Cached forward pass of the cosine head.
pub(crate) struct CosineForward {
    f: Matrix,
    f_norms: Vec<f64>,
    w: Matrix,
    w_norms: Vec<f64>,
    inv_tau: f64,
    pub logits: Matrix,
}

impl CosineForward {
    pub fn run(features: &Matrix, head: &CosineClassifierHead) -> Result<Self> {
        if features.cols() != head.weights.cols() {
            return Err(Error::Shape(format!(
                "features have dimension {}, classifier expects {}",
                features.cols(),
                head.weights.cols()
            )));
        }
        let (f, f_norms) = l2_normalize_rows(features)?;
        let (w, w_norms) = l2_normalize_rows(&head.weights)?;
        let inv_tau = 1.0 / head.temperature;
        let logits = f.matmul_t(&w)?.scaled(inv_tau);
        Ok(Self {
            f,
            f_norms,
            w,
            w_norms,
            inv_tau,
            logits,
        })
    }

    /// Chains `∂L/∂logits` to the raw features and, optionally, raw weights.
    pub fn backward(&self, grad_logits: &Matrix, weights: bool) -> Result<(Matrix, Option<Matrix>)> {
        let grad_f = grad_logits.matmul(&self.w)?.scaled(self.inv_tau);
        let grad_g = l2_normalize_backward(&grad_f, &self.f, &self.f_norms)?;
        let grad_w = if weights {
            let grad_wn = grad_logits.t_matmul(&self.f)?.scaled(self.inv_tau);
            Some(l2_normalize_backward(&grad_wn, &self.w, &self.w_norms)?)
        } else {
            None
        };
        Ok((grad_g, grad_w))
    }
}

/// Clothes classification loss: softmax cross-entropy over all clothes
/// classes of the cosine head. Returns gradients for both the features and the
/// raw classifier weights.
pub fn clothes_ce_loss(
    features: &Matrix,
    labels: &[usize],
    head: &CosineClassifierHead,
    reduction: Reduction,
) -> Result<LossOutput> {
    check_batch(features, labels.len(), "clothes CE")?;
    let classes = head.num_classes();
    for &y in labels {
        check_label(y, classes, "clothes CE")?;
    }
    let fwd = CosineForward::run(features, head)?;
    let scale = reduction.factor(labels.len());

    let mut value = 0.0;
    let mut grad_logits = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        let z = fwd.logits.row(i);
        let lse = log_sum_exp(z);
        value += lse - z[y];
        let g = grad_logits.row_mut(i);
        for (gj, &zj) in g.iter_mut().zip(z) {
            *gj = (zj - lse).exp() * scale;
        }
        g[y] -= scale;
    }
    let (grad_features, grad_weights) = fwd.backward(&grad_logits, true)?;
    LossOutput {
        value: value * scale,
        grad_features,
        grad_weights,
        grad_bias: None,
    }
    .check_finite("clothes CE")
}

/// The negated clothes cross-entropy, i.e. an adversary that penalizes the
/// predictive power for every clothes class alike. Only used as an ablation.
pub fn negative_ce_loss(
    features: &Matrix,
    labels: &[usize],
    head: &CosineClassifierHead,
    reduction: Reduction,
) -> Result<LossOutput> {
    clothes_ce_loss(features, labels, head, reduction).map(LossOutput::negated)
}
