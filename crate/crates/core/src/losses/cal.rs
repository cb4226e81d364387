//! Clothes-based adversarial loss.
//!
//! CAL is a multi-positive-class softmax loss over the clothes classifier: all
//! clothes classes owned by a sample's identity are positives. Each positive
//! class `c` gets its own cross-entropy term whose denominator holds `c` and
//! every negative (other-identity) class but *none of the other positives*:
//!
//! ```text
//! L_CA = Σ_i Σ_{c ∈ S⁺_i} q(c) · softplus(lse(z_{S⁻_i}) − z_c)
//! ```
//!
//! with `z = f·φ̂/τ`. The classifier is frozen, so only feature gradients are
//! produced.

use super::cosine::{CosineClassifierHead, CosineForward};
use super::{check_batch, LossOutput, Reduction};
use crate::data::ClothesRegistry;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, sigmoid, softplus, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalScheme {
    /// `q(c) = 1/K` on every positive class.
    Uniform,
    /// `q(true) = 1 − ε + ε/K`, `q(other positive) = ε/K`.
    Epsilon,
}

/// Weighting of the positive classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalWeights {
    epsilon: f64,
    scheme: CalScheme,
}

impl CalWeights {
    pub fn uniform() -> Self {
        Self {
            epsilon: 1.0,
            scheme: CalScheme::Uniform,
        }
    }

    /// `ε = 0` is accepted as the degenerate endpoint where all weight sits on
    /// the true clothes class.
    pub fn epsilon(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            scheme: CalScheme::Epsilon,
        })
    }

    pub fn scheme(&self) -> CalScheme {
        self.scheme
    }

    pub fn epsilon_value(&self) -> f64 {
        self.epsilon
    }

    fn weight(&self, is_true: bool, k: usize) -> f64 {
        let k = k as f64;
        match self.scheme {
            CalScheme::Uniform => 1.0 / k,
            CalScheme::Epsilon if is_true => 1.0 - self.epsilon + self.epsilon / k,
            CalScheme::Epsilon => self.epsilon / k,
        }
    }
}

/// `(clothes, q(clothes))` for every positive class of `identity`, ascending.
pub fn positive_weights(
    registry: &ClothesRegistry,
    identity: u32,
    true_clothes: u32,
    cfg: &CalWeights,
) -> Result<Vec<(u32, f64)>> {
    registry.check_pair(identity, true_clothes)?;
    let owned = registry.owned(identity).expect("checked above");
    Ok(owned
        .iter()
        .map(|&c| (c, cfg.weight(c == true_clothes, owned.len())))
        .collect())
}

/// Full weight vector; entry `k` belongs to the `k`-th clothes label of the
/// registry in ascending order (the label itself when labels are dense).
/// Negative classes get weight zero.
pub fn cal_weights(registry: &ClothesRegistry, identity: u32, true_clothes: u32, cfg: &CalWeights) -> Result<Vec<f64>> {
    let pos = positive_weights(registry, identity, true_clothes, cfg)?;
    Ok(registry
        .clothes()
        .map(|c| pos.iter().find(|(pc, _)| *pc == c).map_or(0.0, |&(_, w)| w))
        .collect())
}

struct Prepared {
    fwd: CosineForward,
    positives: Vec<Vec<(usize, f64)>>,
}

fn prepare(
    features: &Matrix,
    identities: &[u32],
    clothes: &[usize],
    head: &CosineClassifierHead,
    registry: &ClothesRegistry,
    cfg: &CalWeights,
) -> Result<Prepared> {
    check_batch(features, identities.len(), "CAL")?;
    if clothes.len() != identities.len() {
        return Err(Error::Shape(format!(
            "CAL: {} identity labels, {} clothes labels",
            identities.len(),
            clothes.len()
        )));
    }
    if registry.num_clothes() != head.num_classes() || registry.clothes().any(|c| c as usize >= head.num_classes()) {
        return Err(Error::Label(format!(
            "CAL: registry clothes labels must be exactly 0..{}",
            head.num_classes()
        )));
    }
    if registry.num_identities() < 2 {
        return Err(Error::Degenerate(
            "CAL: a single identity has no negative clothes classes".into(),
        ));
    }
    let mut positives = Vec::with_capacity(identities.len());
    for (&id, &c) in identities.iter().zip(clothes) {
        let w = positive_weights(registry, id, c as u32, cfg)?;
        positives.push(w.into_iter().map(|(c, q)| (c as usize, q)).collect());
    }
    Ok(Prepared {
        fwd: CosineForward::run(features, head)?,
        positives,
    })
}

fn negative_lse(z: &[f64], positives: &[(usize, f64)], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(
        z.iter()
            .enumerate()
            .filter(|(j, _)| !positives.iter().any(|(c, _)| c == j))
            .map(|(_, &v)| v),
    );
    log_sum_exp(scratch)
}

/// Per-sample, per-positive-class unweighted terms
/// `−log(e^{z_c} / (e^{z_c} + Σ_{j∈S⁻} e^{z_j}))`, as `(clothes, term)` pairs.
///
/// A term depends only on its own class and the negatives.
pub fn cal_terms(
    features: &Matrix,
    identities: &[u32],
    clothes: &[usize],
    head: &CosineClassifierHead,
    registry: &ClothesRegistry,
    cfg: &CalWeights,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let prep = prepare(features, identities, clothes, head, registry, cfg)?;
    let mut scratch = Vec::new();
    Ok(prep
        .positives
        .iter()
        .enumerate()
        .map(|(i, pos)| {
            let z = prep.fwd.logits.row(i);
            let neg = negative_lse(z, pos, &mut scratch);
            pos.iter().map(|&(c, _)| (c, softplus(neg - z[c]))).collect()
        })
        .collect())
}

/// CAL value and feature gradient against a frozen cosine clothes classifier.
///
/// `clothes` are dense head indices that must coincide with the registry's
/// clothes labels; each `(identities[i], clothes[i])` pair must be registered.
pub fn cal_loss(
    features: &Matrix,
    identities: &[u32],
    clothes: &[usize],
    head: &CosineClassifierHead,
    registry: &ClothesRegistry,
    cfg: &CalWeights,
    reduction: Reduction,
) -> Result<LossOutput> {
    let prep = prepare(features, identities, clothes, head, registry, cfg)?;
    let scale = reduction.factor(identities.len());
    let mut scratch = Vec::new();
    let mut value = 0.0;
    let mut grad_logits = Matrix::zeros(identities.len(), head.num_classes());

    for (i, pos) in prep.positives.iter().enumerate() {
        let z = prep.fwd.logits.row(i);
        let neg = negative_lse(z, pos, &mut scratch);
        let g = grad_logits.row_mut(i);
        // Σ_c q(c)·(1 − p_c^{(c)}), the total pull each negative receives
        let mut neg_coeff = 0.0;
        for &(c, q) in pos {
            let miss = sigmoid(neg - z[c]);
            value += q * softplus(neg - z[c]);
            g[c] = -q * miss * scale;
            neg_coeff += q * miss;
        }
        for (j, (gj, &zj)) in g.iter_mut().zip(z).enumerate() {
            if !pos.iter().any(|&(c, _)| c == j) {
                *gj = (zj - neg).exp() * neg_coeff * scale;
            }
        }
    }

    let (grad_features, _) = prep.fwd.backward(&grad_logits, false)?;
    LossOutput {
        value: value * scale,
        grad_features,
        grad_weights: None,
        grad_bias: None,
    }
    .check_finite("CAL")
}
