//! Where the clothes classifier's probability mass ends up: on the true
//! clothes class (`p_pos`), on the other outfits of the same identity
//! (`p_ppos`, pseudo-positives) or on other identities' outfits (`p_neg`).

use crate::data::ClothesRegistry;
use crate::error::{Error, Result};
use crate::losses::CosineClassifierHead;
use crate::model::{embed, ModelParams, TrainingSet};
use crate::numerics::{stable_softmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleProbabilities {
    pub p_pos: f64,
    /// Mean over pseudo-positive classes; `None` when the identity has one outfit.
    pub p_ppos: Option<f64>,
    /// Mean over negative classes; `None` when there are none.
    pub p_neg: Option<f64>,
    /// Total mass on each group; the three sum to one.
    pub mass: [f64; 3],
}

/// Counts over decade bins `[0, 1e-6), [1e-6, 1e-5), …, [1e-1, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogHistogram {
    pub counts: [usize; 7],
}

impl LogHistogram {
    pub const LOWER_EDGES: [f64; 7] = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = [0; 7];
        for v in values {
            let bin = Self::LOWER_EDGES.iter().rposition(|&e| v >= e).unwrap_or(0);
            counts[bin] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_label(k: usize) -> String {
        match Self::LOWER_EDGES.get(k + 1) {
            Some(hi) => format!("[{:.0e},{hi:.0e})", Self::LOWER_EDGES[k]),
            None => format!("[{:.0e},1]", Self::LOWER_EDGES[k]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStats {
    pub samples: Vec<SampleProbabilities>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl ConvergenceStats {
    pub fn p_pos(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.p_pos)
    }

    pub fn p_ppos(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().filter_map(|s| s.p_ppos)
    }

    pub fn p_neg(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().filter_map(|s| s.p_neg)
    }

    /// Medians of `(p_pos, p_ppos, p_neg)`.
    pub fn medians(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        (
            median(self.p_pos().collect()),
            median(self.p_ppos().collect()),
            median(self.p_neg().collect()),
        )
    }

    pub fn histograms(&self) -> [LogHistogram; 3] {
        [
            LogHistogram::from_values(self.p_pos()),
            LogHistogram::from_values(self.p_ppos()),
            LogHistogram::from_values(self.p_neg()),
        ]
    }

    /// `p_pos > p_ppos > p_neg` on medians.
    pub fn ordering_holds(&self) -> bool {
        matches!(self.medians(), (Some(a), Some(b), Some(c)) if a > b && b > c)
    }
}

/// Full-softmax probability statistics of the cosine clothes classifier.
/// `clothes[i]` is the dense head index of sample `i`, which must coincide with
/// its registry label.
pub fn convergence_stats(
    features: &Matrix,
    identities: &[u32],
    clothes: &[usize],
    head: &CosineClassifierHead,
    registry: &ClothesRegistry,
) -> Result<ConvergenceStats> {
    if features.rows() != identities.len() || identities.len() != clothes.len() {
        return Err(Error::Shape(format!(
            "{} features, {} identities, {} clothes labels",
            features.rows(),
            identities.len(),
            clothes.len()
        )));
    }
    let logits = head.logits(features)?;
    let mut samples = Vec::with_capacity(identities.len());
    for (i, (&id, &y)) in identities.iter().zip(clothes).enumerate() {
        registry.check_pair(id, y as u32)?;
        if y >= head.num_classes() {
            return Err(Error::Label(format!("clothes index {y} beyond classifier")));
        }
        let p = stable_softmax(logits.row(i))?;
        let owned = registry.owned(id).expect("checked pair");
        let ppos_mass: f64 = owned.iter().filter(|&&c| c as usize != y).map(|&c| p[c as usize]).sum();
        let pos_mass = p[y];
        let neg_mass: f64 = p
            .iter()
            .enumerate()
            .filter(|(j, _)| !owned.contains(&(*j as u32)))
            .map(|(_, v)| v)
            .sum();
        let n_ppos = owned.len() - 1;
        let n_neg = p.len() - owned.len();
        samples.push(SampleProbabilities {
            p_pos: pos_mass,
            p_ppos: (n_ppos > 0).then(|| ppos_mass / n_ppos as f64),
            p_neg: (n_neg > 0).then(|| neg_mass / n_neg as f64),
            mass: [pos_mass, ppos_mass, neg_mass],
        });
    }
    Ok(ConvergenceStats { samples })
}

/// Convergence statistics of a trained model on its (densified) training split.
pub fn training_convergence(params: &ModelParams, set: &TrainingSet) -> Result<ConvergenceStats> {
    let embeddings = embed(&params.backbone, &set.features)?;
    convergence_stats(
        &embeddings,
        &set.identities,
        &set.clothes,
        &params.clothes_head,
        &set.registry,
    )
}
